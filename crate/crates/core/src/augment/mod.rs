//! Training data: frame label tracks, overlap mixing, sample-rate
//! round-trip, additive noise and a synthetic labelled corpus.

mod synth;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::features::{resample, Waveform};
use crate::math;
use crate::{Error, Result, FRAME_RATE, FRAME_SECONDS};

pub use synth::{synth_corpus, synth_corpus_with, SynthConfig};

/// Per-frame class labels at 100 frames per second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabelTrack {
    labels: Vec<u8>,
}

impl FrameLabelTrack {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l > 2) {
            return Err(Error::InvalidLabel(bad));
        }
        Ok(Self { labels })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            labels: vec![0; len],
        }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Frames per class `[non-speech, single, overlap]`.
    pub fn class_counts(&self) -> [u64; 3] {
        let mut counts = [0u64; 3];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Where a clip came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Real,
    Synthetic,
    Augmented,
}

/// A waveform with one label per 10 ms frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    waveform: Waveform,
    labels: FrameLabelTrack,
    provenance: Provenance,
}

impl LabeledClip {
    /// Fails unless the label count equals the waveform's frame count.
    pub fn new(
        waveform: Waveform,
        labels: FrameLabelTrack,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.len() != waveform.frame_count() {
            return Err(Error::Shape(alloc::format!(
                "{} labels for a waveform of {} frames",
                labels.len(),
                waveform.frame_count()
            )));
        }
        Ok(Self {
            waveform,
            labels,
            provenance,
        })
    }

    pub fn waveform(&self) -> &Waveform {
        &self.waveform
    }

    pub fn labels(&self) -> &FrameLabelTrack {
        &self.labels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn into_parts(self) -> (Waveform, FrameLabelTrack, Provenance) {
        (self.waveform, self.labels, self.provenance)
    }
}

/// Centre time of frame `i` in seconds.
pub fn frame_center(i: usize) -> f64 {
    (i as f64 + 0.5) * FRAME_SECONDS
}

/// Number of whole frames in `duration` seconds.
pub fn frames_in(duration: f64) -> usize {
    // The small slack absorbs representation error such as 2.3 * 100.
    math::floor(duration * FRAME_RATE as f64 + 1e-9).max(0.0) as usize
}

/// Frame indices whose centre lies in `[onset, offset)`.
pub fn frames_covered(onset: f64, offset: f64, num_frames: usize) -> core::ops::Range<usize> {
    let first = |t: f64| {
        let guess = math::floor(t * FRAME_RATE as f64 - 0.5).max(0.0) as usize;
        let mut i = guess.saturating_sub(1).min(num_frames);
        while i < num_frames && frame_center(i) < t {
            i += 1;
        }
        i
    };
    let start = first(onset);
    let end = first(offset).max(start);
    start..end
}

/// Rasterize speaker segments onto the frame grid.
///
/// Each frame is labelled with the number of distinct speakers active at
/// its centre, capped at 2. A speaker counts once even when its own
/// segments overlap.
pub fn labels_from_segments<S: PartialEq>(
    segments: &[(f64, f64, S)],
    duration: f64,
) -> Result<FrameLabelTrack> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "duration {duration}"
        )));
    }
    for (onset, offset, _) in segments {
        if !onset.is_finite() || !offset.is_finite() || offset < onset || *onset < 0.0 {
            return Err(Error::MalformedSegment {
                onset: *onset,
                offset: *offset,
            });
        }
    }
    let n = frames_in(duration);
    let mut speakers: Vec<&S> = Vec::new();
    for (_, _, s) in segments {
        if !speakers.contains(&s) {
            speakers.push(s);
        }
    }
    let mut counts = vec![0u8; n];
    let mut active = vec![false; n];
    for speaker in speakers {
        active.iter_mut().for_each(|a| *a = false);
        for (onset, offset, _) in segments.iter().filter(|seg| &seg.2 == speaker) {
            for i in frames_covered(*onset, *offset, n) {
                active[i] = true;
            }
        }
        for (c, &a) in counts.iter_mut().zip(&active) {
            *c += a as u8;
        }
    }
    counts.iter_mut().for_each(|c| *c = (*c).min(2));
    FrameLabelTrack::new(counts)
}

/// Mix two single-speaker clips into one, `a + 10^(gain_db/20) * b`.
///
/// The shorter clip is zero-padded; labels add per frame and saturate at 2.
pub fn mix_overlap(a: &LabeledClip, b: &LabeledClip, gain_db: f64) -> Result<LabeledClip> {
    if a.waveform.sample_rate() != b.waveform.sample_rate() {
        return Err(Error::SampleRateMismatch(
            a.waveform.sample_rate(),
            b.waveform.sample_rate(),
        ));
    }
    for clip in [a, b] {
        if clip.labels.labels().contains(&2) {
            return Err(Error::InvalidLabel(2));
        }
    }
    if !gain_db.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("gain {gain_db} dB")));
    }
    let gain = math::db_to_amplitude(gain_db);
    let (xa, xb) = (a.waveform.samples(), b.waveform.samples());
    let samples = (0..xa.len().max(xb.len()))
        .map(|i| xa.get(i).copied().unwrap_or(0.0) + gain * xb.get(i).copied().unwrap_or(0.0))
        .collect();
    let (la, lb) = (a.labels.labels(), b.labels.labels());
    let labels = (0..la.len().max(lb.len()))
        .map(|i| (la.get(i).copied().unwrap_or(0) + lb.get(i).copied().unwrap_or(0)).min(2))
        .collect();
    LabeledClip::new(
        Waveform::new(samples, a.waveform.sample_rate())?,
        FrameLabelTrack::new(labels)?,
        Provenance::Augmented,
    )
}

/// Downsample a 16 kHz clip to 8 kHz and back, keeping its length and labels.
pub fn samplerate_roundtrip_augment(c: &LabeledClip) -> Result<LabeledClip> {
    let rate = c.waveform.sample_rate();
    if rate != crate::features::SAMPLE_RATE {
        return Err(Error::SampleRateMismatch(
            rate,
            crate::features::SAMPLE_RATE,
        ));
    }
    let narrow = resample(&c.waveform, 8_000)?;
    let mut samples = resample(&narrow, rate)?.into_samples();
    samples.resize(c.waveform.len(), 0.0);
    LabeledClip::new(
        Waveform::new(samples, rate)?,
        c.labels.clone(),
        Provenance::Augmented,
    )
}

/// Sample indices of frames labelled as speech.
fn speech_samples(c: &LabeledClip) -> impl Iterator<Item = usize> + '_ {
    let hop = c.waveform.sample_rate() as usize / FRAME_RATE;
    c.labels
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .flat_map(move |(i, _)| i * hop..(i + 1) * hop)
}

/// Mean power of `x` over the speech-labelled samples of `c`.
pub fn speech_power(c: &LabeledClip, x: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in speech_samples(c) {
        sum += x[i] * x[i];
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Add white Gaussian noise at `snr_db` relative to the speech frames.
///
/// The noise is rescaled so that its power over the speech frames matches
/// the request exactly. `f64::INFINITY` returns the clip unchanged.
pub fn add_noise<R: Rng + ?Sized>(
    c: &LabeledClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<LabeledClip> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(alloc::format!("snr {snr_db} dB")));
    }
    if snr_db == f64::INFINITY {
        return Ok(c.clone());
    }
    let signal = speech_power(c, c.waveform.samples());
    if signal <= 0.0 {
        return Err(Error::NoSpeechEnergy);
    }
    let mut noise: Vec<f64> = (0..c.waveform.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let measured = speech_power(c, &noise);
    let target = signal / math::powf(10.0, snr_db / 10.0);
    let scale = if measured > 0.0 {
        math::sqrt(target / measured)
    } else {
        0.0
    };
    for (n, &s) in noise.iter_mut().zip(c.waveform.samples()) {
        *n = s + scale * *n;
    }
    LabeledClip::new(
        Waveform::new(noise, c.waveform.sample_rate())?,
        c.labels.clone(),
        Provenance::Augmented,
    )
}

/// Extra overlap-mixed clips for one epoch.
///
/// Draws `quota` times a pair of distinct clips that contain no overlap
/// frames and mixes them at a gain uniform in `[-max_gain_db, max_gain_db]`.
/// Returns nothing when fewer than two eligible clips exist.
pub fn overlap_augment_epoch<R: Rng + ?Sized>(
    clips: &[LabeledClip],
    quota: usize,
    max_gain_db: f64,
    rng: &mut R,
) -> Result<Vec<LabeledClip>> {
    let eligible: Vec<&LabeledClip> = clips
        .iter()
        .filter(|c| !c.labels.labels().contains(&2))
        .collect();
    if eligible.len() < 2 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(quota);
    for _ in 0..quota {
        let i = rng.gen_range(0..eligible.len());
        let mut j = rng.gen_range(0..eligible.len() - 1);
        if j >= i {
            j += 1;
        }
        let gain = if max_gain_db > 0.0 {
            rng.gen_range(-max_gain_db..=max_gain_db)
        } else {
            0.0
        };
        out.push(mix_overlap(eligible[i], eligible[j], gain)?);
    }
    Ok(out)
}
