//! Frame-level OSD precision/recall and diarization error rate.

mod assignment;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::augment::{frames_covered, FrameLabelTrack};
use crate::diarization::RttmRecord;
use crate::inference::{ScoreTrack, TimedSegment};
use crate::{Error, Result};

pub use assignment::optimal_speaker_mapping;

/// Frame counts and the derived ratios. A ratio is `None` when its
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Precision and recall of a predicted overlap mask against label-2 frames.
pub fn mask_precision_recall(
    predicted: &[bool],
    reference: &FrameLabelTrack,
) -> Result<PrecisionRecall> {
    if predicted.len() != reference.len() {
        return Err(Error::Shape(alloc::format!(
            "{} predictions for {} labels",
            predicted.len(),
            reference.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &l) in predicted.iter().zip(reference.labels()) {
        match (p, l == 2) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(PrecisionRecall {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    })
}

/// Precision and recall of `score > threshold` against label-2 frames.
pub fn frame_precision_recall(
    track: &ScoreTrack,
    reference: &FrameLabelTrack,
    threshold: f64,
) -> Result<PrecisionRecall> {
    let mask: Vec<bool> = track.scores().iter().map(|&s| s > threshold).collect();
    mask_precision_recall(&mask, reference)
}

/// Precision and recall of OSD segments, rasterized at frame centres.
pub fn segment_precision_recall(
    segments: &[TimedSegment],
    reference: &FrameLabelTrack,
) -> Result<PrecisionRecall> {
    let mut mask = vec![false; reference.len()];
    for s in segments {
        for i in frames_covered(s.onset(), s.offset(), mask.len()) {
            mask[i] = true;
        }
    }
    mask_precision_recall(&mask, reference)
}

/// DER components as fractions of the total reference speaker time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerBreakdown {
    pub der: f64,
    pub false_alarm: f64,
    pub miss: f64,
    pub confusion: f64,
    /// Reference speaker-seconds, overlapping speakers counted individually.
    pub total_ref_speech: f64,
}

/// Speaker-second totals of one file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct DerSeconds {
    reference: f64,
    false_alarm: f64,
    miss: f64,
    confusion: f64,
}

/// Sorted, merged union of `[onset, offset)` spans.
fn union(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.retain(|s| s.0 < s.1);
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (a, b) in spans {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn contains(spans: &[(f64, f64)], t: f64) -> bool {
    let i = spans.partition_point(|s| s.1 <= t);
    i < spans.len() && spans[i].0 <= t
}

/// Per-speaker merged activity of one file.
fn activity<'a>(records: &[&'a RttmRecord]) -> Vec<(&'a str, Vec<(f64, f64)>)> {
    let mut by_speaker: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        by_speaker
            .entry(r.speaker.as_str())
            .or_default()
            .push((r.onset, r.offset()));
    }
    by_speaker
        .into_iter()
        .map(|(s, spans)| (s, union(spans)))
        .collect()
}

fn file_der(reference: &[&RttmRecord], hypothesis: &[&RttmRecord], collar: f64) -> DerSeconds {
    let refs = activity(reference);
    let hyps = activity(hypothesis);
    let no_score = if collar > 0.0 {
        union(
            reference
                .iter()
                .flat_map(|r| {
                    [
                        (r.onset - collar, r.onset + collar),
                        (r.offset() - collar, r.offset() + collar),
                    ]
                })
                .collect(),
        )
    } else {
        Vec::new()
    };
    let mut bounds: Vec<f64> = refs
        .iter()
        .chain(&hyps)
        .flat_map(|(_, spans)| spans.iter().flat_map(|&(a, b)| [a, b]))
        .chain(no_score.iter().flat_map(|&(a, b)| [a, b]))
        .collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut secs = DerSeconds::default();
    let mut co = vec![vec![0.0; hyps.len()]; refs.len()];
    let mut sum_min = 0.0;
    let (mut active_r, mut active_h) = (Vec::new(), Vec::new());
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let mid = a + len / 2.0;
        if contains(&no_score, mid) {
            continue;
        }
        active_r.clear();
        active_h.clear();
        active_r.extend((0..refs.len()).filter(|&i| contains(&refs[i].1, mid)));
        active_h.extend((0..hyps.len()).filter(|&j| contains(&hyps[j].1, mid)));
        let (r, h) = (active_r.len() as f64, active_h.len() as f64);
        secs.reference += r * len;
        secs.miss += (r - h).max(0.0) * len;
        secs.false_alarm += (h - r).max(0.0) * len;
        sum_min += r.min(h) * len;
        for &i in &active_r {
            for &j in &active_h {
                co[i][j] += len;
            }
        }
    }
    let matched: f64 = optimal_speaker_mapping(&co)
        .iter()
        .map(|&(i, j)| co[i][j])
        .sum();
    secs.confusion = (sum_min - matched).max(0.0);
    secs
}

/// Diarization error rate of `hypothesis` against `reference`.
///
/// Records are grouped by file and scored by an exact sweep over all
/// record boundaries, with one optimal speaker mapping per file. Regions
/// within `collar` seconds of a reference boundary are not scored.
pub fn compute_der(
    reference: &[RttmRecord],
    hypothesis: &[RttmRecord],
    collar: f64,
) -> Result<DerBreakdown> {
    if !(collar.is_finite() && collar >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("collar {collar}")));
    }
    let mut files: BTreeMap<&str, (Vec<&RttmRecord>, Vec<&RttmRecord>)> = BTreeMap::new();
    for r in reference {
        files.entry(r.file_id.as_str()).or_default().0.push(r);
    }
    for h in hypothesis {
        files.entry(h.file_id.as_str()).or_default().1.push(h);
    }
    let mut total = DerSeconds::default();
    for (r, h) in files.values() {
        let s = file_der(r, h, collar);
        total.reference += s.reference;
        total.false_alarm += s.false_alarm;
        total.miss += s.miss;
        total.confusion += s.confusion;
    }
    if total.reference <= 0.0 {
        return Err(Error::EmptyReference);
    }
    let false_alarm = total.false_alarm / total.reference;
    let miss = total.miss / total.reference;
    let confusion = total.confusion / total.reference;
    Ok(DerBreakdown {
        der: false_alarm + miss + confusion,
        false_alarm,
        miss,
        confusion,
        total_ref_speech: total.reference,
    })
}

/// Speaker names of a record list in first-seen order.
pub fn speakers(records: &[RttmRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        if !out.contains(&r.speaker) {
            out.push(r.speaker.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(file: &str, a: f64, b: f64, spk: &str) -> RttmRecord {
        RttmRecord::new(file, 1, a, b - a, spk).unwrap()
    }

    fn labels(l: &[u8]) -> FrameLabelTrack {
        FrameLabelTrack::new(l.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let r = mask_precision_recall(&[false, true, true, false], &labels(&[0, 2, 2, 1])).unwrap();
        assert_eq!((r.precision, r.recall), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn empty_prediction_is_undefined_precision() {
        let r = mask_precision_recall(&[false; 3], &labels(&[2, 0, 1])).unwrap();
        assert_eq!((r.precision, r.recall), (None, Some(0.0)));
        let r = mask_precision_recall(&[true, false], &labels(&[1, 0])).unwrap();
        assert_eq!((r.precision, r.recall), (Some(0.0), None));
    }

    #[test]
    fn length_mismatch() {
        assert!(mask_precision_recall(&[true], &labels(&[2, 2])).is_err());
    }

    #[test]
    fn counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.gen_range(1..100);
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let l: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let thr = rng.gen_range(0.0..1.0);
            let r = frame_precision_recall(&ScoreTrack::new(s.clone()).unwrap(), &labels(&l), thr)
                .unwrap();
            let tp = (0..n).filter(|&i| s[i] > thr && l[i] == 2).count() as f64;
            let pp = (0..n).filter(|&i| s[i] > thr).count() as f64;
            let p = (0..n).filter(|&i| l[i] == 2).count() as f64;
            assert_eq!(r.precision, if pp > 0.0 { Some(tp / pp) } else { None });
            assert_eq!(r.recall, if p > 0.0 { Some(tp / p) } else { None });
        }
    }

    #[test]
    fn segments_rasterize_like_scores() {
        let l = labels(&[0, 2, 2, 2, 1, 2]);
        let segs = [
            TimedSegment::new(0.01, 0.03).unwrap(),
            TimedSegment::new(0.05, 0.06).unwrap(),
        ];
        let r = segment_precision_recall(&segs, &l).unwrap();
        assert_eq!(
            (r.true_positives, r.false_positives, r.false_negatives),
            (3, 0, 1)
        );
    }

    #[test]
    fn identity_has_zero_der() {
        let r = vec![
            rec("f", 0.0, 2.0, "a"),
            rec("f", 1.0, 3.0, "b"),
            rec("g", 0.5, 4.0, "a"),
        ];
        let d = compute_der(&r, &r, 0.0).unwrap();
        assert_eq!(
            (d.der, d.miss, d.false_alarm, d.confusion),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!((d.total_ref_speech - 7.5).abs() < 1e-12);
    }

    #[test]
    fn empty_hypothesis_is_all_miss() {
        let r = vec![rec("f", 0.0, 2.0, "a"), rec("f", 1.0, 3.0, "b")];
        let d = compute_der(&r, &[], 0.0).unwrap();
        assert_eq!((d.miss, d.der), (1.0, 1.0));
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(
            compute_der(&[], &[rec("f", 0.0, 1.0, "a")], 0.0),
            Err(Error::EmptyReference)
        ));
    }

    #[test]
    fn renamed_and_split_hypothesis() {
        let r = vec![rec("f", 0.0, 4.0, "a"), rec("f", 4.0, 6.0, "b")];
        let h = vec![
            rec("f", 0.0, 1.5, "x"),
            rec("f", 1.5, 3.0, "x"),
            rec("f", 3.0, 6.0, "y"),
        ];
        let d = compute_der(&r, &h, 0.0).unwrap();
        // y covers [3,4) of speaker a: one second of confusion in six.
        assert!((d.confusion - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!((d.miss, d.false_alarm), (0.0, 0.0));
    }

    #[test]
    fn collar_removes_boundary_regions() {
        let r = vec![rec("f", 1.0, 3.0, "a")];
        let h = vec![rec("f", 1.2, 2.8, "a")];
        assert!(compute_der(&r, &h, 0.0).unwrap().miss > 0.0);
        let d = compute_der(&r, &h, 0.25).unwrap();
        assert_eq!(d.der, 0.0);
        assert!((d.total_ref_speech - 1.5).abs() < 1e-12);
    }

    /// Rasterize to 1 ms and try every injective ref->hyp mapping.
    fn exhaustive(reference: &[RttmRecord], hypothesis: &[RttmRecord]) -> (f64, f64, f64, f64) {
        let rs = speakers(reference);
        let hs = speakers(hypothesis);
        let ms = |t: f64| libm::round(t * 1000.0) as i64;
        let end = reference
            .iter()
            .chain(hypothesis)
            .map(|r| ms(r.offset()))
            .max()
            .unwrap_or(0);
        let active = |recs: &[RttmRecord], names: &[String], t: i64| -> Vec<bool> {
            names
                .iter()
                .map(|n| {
                    recs.iter()
                        .any(|r| &r.speaker == n && ms(r.onset) <= t && t < ms(r.offset()))
                })
                .collect()
        };
        let frames: Vec<(Vec<bool>, Vec<bool>)> = (0..end)
            .map(|t| (active(reference, &rs, t), active(hypothesis, &hs, t)))
            .collect();
        let (mut total, mut miss, mut fa, mut summin) = (0.0, 0.0, 0.0, 0.0);
        for (a, b) in &frames {
            let r = a.iter().filter(|&&x| x).count() as f64;
            let h = b.iter().filter(|&&x| x).count() as f64;
            total += r;
            miss += (r - h).max(0.0);
            fa += (h - r).max(0.0);
            summin += r.min(h);
        }
        fn best(
            frames: &[(Vec<bool>, Vec<bool>)],
            i: usize,
            nr: usize,
            used: &mut Vec<bool>,
        ) -> f64 {
            if i == nr {
                return 0.0;
            }
            let mut b = best(frames, i + 1, nr, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    let hit = frames.iter().filter(|(r, h)| r[i] && h[j]).count() as f64;
                    b = b.max(hit + best(frames, i + 1, nr, used));
                    used[j] = false;
                }
            }
            b
        }
        let matched = best(&frames, 0, rs.len(), &mut vec![false; hs.len()]);
        (
            miss / total,
            fa / total,
            (summin - matched) / total,
            total / 1000.0,
        )
    }

    fn random_records(rng: &mut ChaCha8Rng, prefix: &str, speakers: usize) -> Vec<RttmRecord> {
        let mut out = Vec::new();
        for s in 0..speakers {
            for _ in 0..rng.gen_range(1..4) {
                let a = rng.gen_range(0..300);
                let b = a + rng.gen_range(1..150);
                out.push(rec(
                    "f",
                    a as f64 / 100.0,
                    b as f64 / 100.0,
                    &(prefix.to_string() + &s.to_string()),
                ));
            }
        }
        out
    }

    #[test]
    fn der_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..60 {
            let (nr, nh) = (rng.gen_range(1..6), rng.gen_range(0..6));
            let r = random_records(&mut rng, "r", nr);
            let h = random_records(&mut rng, "h", nh);
            let d = compute_der(&r, &h, 0.0).unwrap();
            let (miss, fa, conf, total) = exhaustive(&r, &h);
            assert!((d.miss - miss).abs() < 1e-9, "{} vs {miss}", d.miss);
            assert!((d.false_alarm - fa).abs() < 1e-9);
            assert!(
                (d.confusion - conf).abs() < 1e-9,
                "{} vs {conf}",
                d.confusion
            );
            assert!((d.total_ref_speech - total).abs() < 1e-9);
            assert!((d.der - (d.false_alarm + d.miss + d.confusion)).abs() < 1e-9);
        }
    }

    #[test]
    fn single_speaker_matches_frame_accuracy() {
        // Non-overlapping single-speaker reference and hypothesis on a 10 ms grid.
        let r = vec![
            rec("f", 0.0, 1.0, "a"),
            rec("f", 1.0, 2.0, "b"),
            rec("f", 2.5, 3.0, "a"),
        ];
        let h = vec![rec("f", 0.0, 1.2, "x"), rec("f", 1.2, 2.7, "y")];
        let d = compute_der(&r, &h, 0.0).unwrap();
        let who = |recs: &[RttmRecord], t: f64| {
            recs.iter()
                .find(|x| x.onset <= t && t < x.offset())
                .map(|x| x.speaker.clone())
        };
        let map = |s: &str| if s == "x" { "a" } else { "b" };
        let (mut wrong, mut speech) = (0, 0);
        for i in 0..300 {
            let t = (i as f64 + 0.5) / 100.0;
            let (a, b) = (who(&r, t), who(&h, t));
            if a.is_some() {
                speech += 1;
            }
            if a.as_deref() != b.as_deref().map(map) {
                wrong += 1;
            }
        }
        assert!((d.der - wrong as f64 / speech as f64).abs() < 1e-9);
    }
}
