//! Overlap-aware relabelling of diarization output.
//!
//! SAD segments are cut into single-speaker and overlap pieces using the
//! OSD segments. Single pieces keep the most likely speaker of their SAD
//! segment; overlap pieces also get the second most likely one.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::inference::TimedSegment;
use crate::{Error, Result};

/// One `SPEAKER` line of an RTTM file.
#[derive(Debug, Clone, PartialEq)]
pub struct RttmRecord {
    pub file_id: String,
    pub channel: u32,
    pub onset: f64,
    pub duration: f64,
    pub speaker: String,
}

impl RttmRecord {
    /// Requires `onset >= 0` and `duration > 0`, both finite.
    pub fn new(
        file_id: &str,
        channel: u32,
        onset: f64,
        duration: f64,
        speaker: &str,
    ) -> Result<Self> {
        if !(onset.is_finite() && duration.is_finite() && onset >= 0.0 && duration > 0.0) {
            return Err(Error::MalformedSegment {
                onset,
                offset: onset + duration,
            });
        }
        if file_id.is_empty()
            || speaker.is_empty()
            || file_id.contains(char::is_whitespace)
            || speaker.contains(char::is_whitespace)
        {
            return Err(Error::InvalidArgument(alloc::format!(
                "bad RTTM identifiers {file_id:?} / {speaker:?}"
            )));
        }
        Ok(Self {
            file_id: file_id.to_string(),
            channel,
            onset,
            duration,
            speaker: speaker.to_string(),
        })
    }

    pub fn offset(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Parse RTTM text. Lines not starting with `SPEAKER` are skipped.
pub fn parse_rttm(text: &str) -> Result<Vec<RttmRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&"SPEAKER") {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        if fields.len() != 10 {
            return Err(err(alloc::format!(
                "expected 10 fields, found {}",
                fields.len()
            )));
        }
        let channel = fields[2]
            .parse()
            .map_err(|_| err(alloc::format!("bad channel {:?}", fields[2])))?;
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| err(alloc::format!("bad onset {:?}", fields[3])))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| err(alloc::format!("bad duration {:?}", fields[4])))?;
        if duration < 0.0 {
            return Err(err(alloc::format!("negative duration {duration}")));
        }
        out.push(
            RttmRecord::new(fields[1], channel, onset, duration, fields[7])
                .map_err(|e| err(e.to_string()))?,
        );
    }
    Ok(out)
}

/// Serialize records, times with two decimals.
pub fn format_rttm(records: &[RttmRecord]) -> String {
    let mut s = String::new();
    for r in records {
        // Writing to a String cannot fail.
        let _ = writeln!(
            s,
            "SPEAKER {} {} {:.2} {:.2} <NA> <NA> {} <NA> <NA>",
            r.file_id, r.channel, r.onset, r.duration, r.speaker
        );
    }
    s
}

/// Sorted, merged union of intervals clipped to `[lo, hi)`; touching
/// intervals merge and empty intersections vanish.
fn clipped_union(intervals: &[TimedSegment], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut parts: Vec<(f64, f64)> = intervals
        .iter()
        .map(|s| (s.onset().max(lo), s.offset().min(hi)))
        .filter(|(a, b)| a < b)
        .collect();
    parts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(parts.len());
    for (a, b) in parts {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Cut one SAD segment by the OSD segments.
///
/// Returns disjoint pieces in time order that tile `sad` exactly, each
/// flagged as overlap (inside some OSD segment) or single.
pub fn split_sad_segment(sad: &TimedSegment, osd: &[TimedSegment]) -> Vec<(TimedSegment, bool)> {
    let mut out = Vec::new();
    let mut cursor = sad.onset();
    let piece =
        |a: f64, b: f64| TimedSegment::new(a, b).expect("pieces lie inside a valid segment");
    for (a, b) in clipped_union(osd, sad.onset(), sad.offset()) {
        if cursor < a {
            out.push((piece(cursor, a), false));
        }
        out.push((piece(a, b), true));
        cursor = b;
    }
    if cursor < sad.offset() {
        out.push((piece(cursor, sad.offset()), false));
    }
    out
}

/// A piece of a SAD segment after splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPiece {
    pub segment: TimedSegment,
    pub is_overlap: bool,
    /// Index of the SAD segment the piece came from.
    pub parent: usize,
}

/// Split every SAD segment of a file. OSD regions outside all SAD
/// segments are discarded.
pub fn split_all(sad: &[TimedSegment], osd: &[TimedSegment]) -> Vec<SplitPiece> {
    sad.iter()
        .enumerate()
        .flat_map(|(parent, s)| {
            split_sad_segment(s, osd)
                .into_iter()
                .map(move |(segment, is_overlap)| SplitPiece {
                    segment,
                    is_overlap,
                    parent,
                })
        })
        .collect()
}

/// Speakers of each SAD segment ordered from most to least likely.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerRanking {
    entries: Vec<(TimedSegment, Vec<String>)>,
}

impl SpeakerRanking {
    /// Each list must be non-empty and free of duplicates.
    pub fn new(entries: Vec<(TimedSegment, Vec<String>)>) -> Result<Self> {
        for (seg, speakers) in &entries {
            if speakers.is_empty() {
                return Err(Error::Empty("speaker ranking"));
            }
            for (i, s) in speakers.iter().enumerate() {
                if s.is_empty() || s.contains(char::is_whitespace) || s.contains(',') {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "bad speaker id {s:?}"
                    )));
                }
                if speakers[..i].contains(s) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "speaker {s} ranked twice for segment [{}, {})",
                        seg.onset(),
                        seg.offset()
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(TimedSegment, Vec<String>)] {
        &self.entries
    }

    /// Ranking of the entry sharing the most time with `piece`, the
    /// earliest entry on ties; `None` when no entry overlaps it.
    pub fn for_piece(&self, piece: &TimedSegment) -> Option<&[String]> {
        let mut best: Option<(f64, usize)> = None;
        for (i, (seg, _)) in self.entries.iter().enumerate() {
            let shared = seg.offset().min(piece.offset()) - seg.onset().max(piece.onset());
            if shared > 0.0 && best.map_or(true, |(b, _)| shared > b) {
                best = Some((shared, i));
            }
        }
        best.map(|(_, i)| self.entries[i].1.as_slice())
    }
}

/// Hypothesis records and how many overlap pieces lacked a second speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub records: Vec<RttmRecord>,
    pub warnings: usize,
}

/// Turn split pieces into hypothesis records.
///
/// Single pieces get the top-ranked speaker of the SAD segment they fall
/// in; overlap pieces get the top two. An overlap piece whose ranking has
/// one speaker yields one record and a warning. Abutting records of one
/// speaker with the same overlap flag are merged.
pub fn assign_second_speaker(
    pieces: &[(TimedSegment, bool)],
    ranking: &SpeakerRanking,
    file_id: &str,
    channel: u32,
) -> Result<Assignment> {
    let mut raw: Vec<(String, bool, f64, f64)> = Vec::new();
    let mut warnings = 0;
    for (seg, is_overlap) in pieces {
        let speakers = ranking.for_piece(seg).ok_or(Error::MalformedSegment {
            onset: seg.onset(),
            offset: seg.offset(),
        })?;
        let want = if *is_overlap { 2 } else { 1 };
        if speakers.len() < want {
            warnings += 1;
        }
        for s in speakers.iter().take(want) {
            raw.push((s.clone(), *is_overlap, seg.onset(), seg.offset()));
        }
    }
    raw.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut merged: Vec<(String, bool, f64, f64)> = Vec::with_capacity(raw.len());
    for r in raw {
        match merged.last_mut() {
            Some(last) if last.0 == r.0 && last.1 == r.1 && last.3 == r.2 => last.3 = r.3,
            _ => merged.push(r),
        }
    }
    merged.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let records = merged
        .into_iter()
        .map(|(s, _, a, b)| RttmRecord::new(file_id, channel, a, b - a, &s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Assignment { records, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(a: f64, b: f64) -> TimedSegment {
        TimedSegment::new(a, b).unwrap()
    }

    fn spans(pieces: &[(TimedSegment, bool)]) -> Vec<(f64, f64, bool)> {
        pieces
            .iter()
            .map(|(s, o)| (s.onset(), s.offset(), *o))
            .collect()
    }

    #[test]
    fn osd_starting_before_sad() {
        assert_eq!(
            spans(&split_sad_segment(&seg(1.0, 5.0), &[seg(0.0, 2.0)])),
            vec![(1.0, 2.0, true), (2.0, 5.0, false)]
        );
    }

    #[test]
    fn osd_ending_after_sad() {
        assert_eq!(
            spans(&split_sad_segment(&seg(1.0, 5.0), &[seg(4.0, 6.0)])),
            vec![(1.0, 4.0, false), (4.0, 5.0, true)]
        );
    }

    #[test]
    fn osd_inside_sad_gives_three_pieces() {
        assert_eq!(
            spans(&split_sad_segment(&seg(1.0, 5.0), &[seg(2.0, 3.0)])),
            vec![(1.0, 2.0, false), (2.0, 3.0, true), (3.0, 5.0, false)]
        );
    }

    #[test]
    fn touching_osd_produces_nothing() {
        assert_eq!(
            spans(&split_sad_segment(
                &seg(1.0, 5.0),
                &[seg(0.0, 1.0), seg(5.0, 6.0)]
            )),
            vec![(1.0, 5.0, false)]
        );
    }

    #[test]
    fn overlapping_and_touching_osd_merge() {
        let p = split_sad_segment(
            &seg(0.0, 10.0),
            &[seg(2.0, 4.0), seg(3.0, 5.0), seg(5.0, 6.0), seg(8.0, 9.0)],
        );
        assert_eq!(
            spans(&p),
            vec![
                (0.0, 2.0, false),
                (2.0, 6.0, true),
                (6.0, 8.0, false),
                (8.0, 9.0, true),
                (9.0, 10.0, false)
            ]
        );
    }

    #[test]
    fn split_all_cases() {
        let sad = [seg(0.0, 1.0), seg(2.0, 4.0)];
        let p = split_all(&sad, &[]);
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|x| !x.is_overlap));
        let p = split_all(&sad, &sad);
        assert!(p.iter().all(|x| x.is_overlap) && p.len() == 2);
        let p = split_all(&sad, &[seg(1.0, 2.0), seg(5.0, 7.0)]);
        assert!(p.iter().all(|x| !x.is_overlap) && p.len() == 2);
        let p = split_all(&sad, &[seg(0.5, 3.0)]);
        let got: Vec<(f64, f64, bool, usize)> = p
            .iter()
            .map(|x| {
                (
                    x.segment.onset(),
                    x.segment.offset(),
                    x.is_overlap,
                    x.parent,
                )
            })
            .collect();
        assert_eq!(
            got,
            vec![
                (0.0, 0.5, false, 0),
                (0.5, 1.0, true, 0),
                (2.0, 3.0, true, 1),
                (3.0, 4.0, false, 1)
            ]
        );
    }

    #[test]
    fn split_matches_millisecond_raster() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let a = rng.gen_range(0..500) as f64 / 1000.0;
            let sad = seg(a, a + rng.gen_range(1..500) as f64 / 1000.0);
            let osd: Vec<TimedSegment> = (0..rng.gen_range(0..6))
                .map(|_| {
                    let o = rng.gen_range(0..1000);
                    seg(
                        o as f64 / 1000.0,
                        (o + rng.gen_range(1..300)) as f64 / 1000.0,
                    )
                })
                .collect();
            let pieces = split_sad_segment(&sad, &osd);
            let ms = |t: f64| libm::round(t * 1000.0) as i64;
            let mut raster = Vec::new();
            for m in ms(sad.onset())..ms(sad.offset()) {
                raster.push(osd.iter().any(|s| ms(s.onset()) <= m && m < ms(s.offset())));
            }
            let mut from_pieces = Vec::new();
            for (p, o) in &pieces {
                from_pieces
                    .extend(core::iter::repeat(*o).take((ms(p.offset()) - ms(p.onset())) as usize));
            }
            assert_eq!(raster, from_pieces);
            assert_eq!(pieces.first().unwrap().0.onset(), sad.onset());
            assert_eq!(pieces.last().unwrap().0.offset(), sad.offset());
            for w in pieces.windows(2) {
                assert_eq!(w[0].0.offset(), w[1].0.onset());
                assert_ne!(w[0].1, w[1].1);
            }
        }
    }

    fn ranking(entries: &[(f64, f64, &[&str])]) -> SpeakerRanking {
        SpeakerRanking::new(
            entries
                .iter()
                .map(|&(a, b, s)| (seg(a, b), s.iter().map(|x| x.to_string()).collect()))
                .collect(),
        )
        .unwrap()
    }

    fn triples(a: &Assignment) -> Vec<(f64, f64, &str)> {
        a.records
            .iter()
            .map(|r| (r.onset, r.offset(), r.speaker.as_str()))
            .collect()
    }

    #[test]
    fn overlap_gets_two_speakers() {
        let r = ranking(&[(0.0, 4.0, &["A", "B", "C"])]);
        let a = assign_second_speaker(&[(seg(0.0, 4.0), true)], &r, "f", 1).unwrap();
        assert_eq!(triples(&a), vec![(0.0, 4.0, "A"), (0.0, 4.0, "B")]);
        assert_eq!(a.warnings, 0);
    }

    #[test]
    fn single_gets_top_speaker() {
        let r = ranking(&[(0.0, 4.0, &["A", "B"])]);
        let a = assign_second_speaker(&[(seg(0.0, 4.0), false)], &r, "f", 1).unwrap();
        assert_eq!(triples(&a), vec![(0.0, 4.0, "A")]);
    }

    #[test]
    fn lone_speaker_overlap_warns() {
        let r = ranking(&[(0.0, 4.0, &["A"])]);
        let a = assign_second_speaker(&[(seg(1.0, 2.0), true)], &r, "f", 1).unwrap();
        assert_eq!(triples(&a), vec![(1.0, 2.0, "A")]);
        assert_eq!(a.warnings, 1);
    }

    #[test]
    fn abutting_pieces_merge_per_flag() {
        let r = ranking(&[(0.0, 5.0, &["A", "B"]), (5.0, 8.0, &["A", "C"])]);
        let pieces = split_all(&[seg(0.0, 5.0), seg(5.0, 8.0)], &[seg(2.0, 3.0)]);
        let pieces: Vec<_> = pieces.iter().map(|p| (p.segment, p.is_overlap)).collect();
        let a = assign_second_speaker(&pieces, &r, "f", 1).unwrap();
        assert_eq!(
            triples(&a),
            vec![
                (0.0, 2.0, "A"),
                (2.0, 3.0, "A"),
                (2.0, 3.0, "B"),
                (3.0, 8.0, "A")
            ]
        );
    }

    #[test]
    fn piece_without_ranking_is_an_error() {
        let r = ranking(&[(0.0, 1.0, &["A"])]);
        assert!(assign_second_speaker(&[(seg(2.0, 3.0), false)], &r, "f", 1).is_err());
        assert!(SpeakerRanking::new(vec![(seg(0.0, 1.0), vec![])]).is_err());
        assert!(SpeakerRanking::new(vec![(seg(0.0, 1.0), vec!["A".into(), "A".into()])]).is_err());
    }

    #[test]
    fn rttm_round_trip() {
        let recs = vec![
            RttmRecord::new("f1", 1, 0.0, 1.25, "A").unwrap(),
            RttmRecord::new("f1", 1, 3.5, 0.01, "B").unwrap(),
            RttmRecord::new("f2", 2, 12.34, 5.0, "spk_3").unwrap(),
        ];
        let text = format_rttm(&recs);
        assert_eq!(
            text.lines().next().unwrap(),
            "SPEAKER f1 1 0.00 1.25 <NA> <NA> A <NA> <NA>"
        );
        assert_eq!(parse_rttm(&text).unwrap(), recs);
    }

    #[test]
    fn rttm_rounding_is_stable() {
        let r = RttmRecord::new("f", 1, 1.005, 1.0, "A").unwrap();
        let text = format_rttm(&[r]);
        let field = text.split_whitespace().nth(3).unwrap();
        assert!(field == "1.00" || field == "1.01");
        let back = parse_rttm(&text).unwrap();
        assert_eq!(format_rttm(&back), text);
    }

    #[test]
    fn rttm_errors_name_the_line() {
        let text = "SPKR-INFO x\nSPEAKER f 1 0.00 1.00 <NA> <NA> A <NA> <NA>\nSPEAKER f 1 0.00 1.00 <NA> <NA> A <NA>\n";
        assert!(matches!(
            parse_rttm(text),
            Err(Error::Parse { line: 3, .. })
        ));
        let neg = "SPEAKER f 1 0.00 -1.00 <NA> <NA> A <NA> <NA>\n";
        assert!(matches!(parse_rttm(neg), Err(Error::Parse { line: 1, .. })));
        assert_eq!(parse_rttm("\n;; comment\nLEXEME x\n").unwrap(), vec![]);
    }
}
