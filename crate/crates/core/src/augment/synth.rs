//! Synthetic two-speaker corpus with exact labels.
//!
//! A "speaker" is white noise shaped by a few resonant band-pass filters
//! and a slow amplitude modulation. Each clip draws two distinct speakers
//! from a seeded pool, gives each an alternating silence/speech schedule,
//! mixes the tracks with [`mix_overlap`] and adds a low noise floor.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    add_noise, labels_from_segments, mix_overlap, FrameLabelTrack, LabeledClip, Provenance,
};
use crate::features::Waveform;
use crate::math;
use crate::{Error, Result};

/// Generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    /// Size of the speaker pool.
    pub num_speakers: usize,
    /// Resonant bands per speaker.
    pub bands_per_speaker: usize,
    /// Lowest and highest band centre in Hz.
    pub band_range_hz: (f64, f64),
    /// Band quality factor.
    pub band_q: f64,
    /// Amplitude modulation rate range in Hz.
    pub modulation_hz: (f64, f64),
    /// Speech segment duration range in seconds.
    pub speech_s: (f64, f64),
    /// Silence duration range in seconds.
    pub silence_s: (f64, f64),
    /// Second-speaker gain is uniform in `[-max_gain_db, max_gain_db]`.
    pub max_gain_db: f64,
    /// SNR of the white noise floor relative to speech.
    pub noise_snr_db: f64,
    /// RMS of each speaker track while active.
    pub speech_rms: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: crate::features::SAMPLE_RATE,
            num_speakers: 8,
            bands_per_speaker: 3,
            band_range_hz: (200.0, 6000.0),
            band_q: 6.0,
            modulation_hz: (3.0, 6.0),
            speech_s: (0.4, 2.0),
            silence_s: (0.2, 1.5),
            max_gain_db: 5.0,
            noise_snr_db: 30.0,
            speech_rms: 0.1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let ok = self.sample_rate > 0
            && self.num_speakers >= 2
            && self.bands_per_speaker >= 1
            && self.band_range_hz.0 > 0.0
            && self.band_range_hz.0 <= self.band_range_hz.1
            && self.band_range_hz.1 < nyquist
            && self.band_q > 0.0
            && self.modulation_hz.0 <= self.modulation_hz.1
            && self.speech_s.0 > 0.0
            && self.speech_s.0 <= self.speech_s.1
            && self.silence_s.0 > 0.0
            && self.silence_s.0 <= self.silence_s.1
            && self.max_gain_db >= 0.0
            && self.speech_rms > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!(
                "invalid synthesis settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
struct Speaker {
    /// `(centre Hz, gain)` per band.
    bands: Vec<(f64, f64)>,
}

/// Second-order band-pass section, unit peak gain.
struct Biquad {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn band_pass(centre: f64, q: f64, rate: f64) -> Self {
        let w0 = 2.0 * core::f64::consts::PI * centre / rate;
        let alpha = math::sin(w0) / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * math::cos(w0) / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn speaker_pool(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Speaker> {
    // Log-spaced band centres keep speakers spread evenly on the mel axis.
    let (lo, hi) = (math::ln(cfg.band_range_hz.0), math::ln(cfg.band_range_hz.1));
    (0..cfg.num_speakers)
        .map(|_| {
            let bands = (0..cfg.bands_per_speaker)
                .map(|_| (math::exp(rng.gen_range(lo..=hi)), rng.gen_range(0.5..1.0)))
                .collect();
            Speaker { bands }
        })
        .collect()
}

/// Continuous speech-like signal of one speaker, normalized to `speech_rms`.
fn render_speaker(
    cfg: &SynthConfig,
    speaker: &Speaker,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let rate = cfg.sample_rate as f64;
    let mut out = alloc::vec![0.0; len];
    for &(centre, gain) in &speaker.bands {
        let mut filter = Biquad::band_pass(centre, cfg.band_q, rate);
        for o in out.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *o += gain * filter.step(e);
        }
    }
    let mod_hz = rng.gen_range(cfg.modulation_hz.0..=cfg.modulation_hz.1);
    let phase = rng.gen_range(0.0..2.0 * core::f64::consts::PI);
    let step = 2.0 * core::f64::consts::PI * mod_hz / rate;
    for (i, o) in out.iter_mut().enumerate() {
        *o *= 1.0 + 0.6 * math::sin(phase + step * i as f64);
    }
    let power = out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64;
    if power > 0.0 {
        let scale = cfg.speech_rms / math::sqrt(power);
        out.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

/// Alternating silence/speech schedule over `[0, duration)`.
fn schedule(cfg: &SynthConfig, duration: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut segments = Vec::new();
    // The first silence starts at a random point of its cycle.
    let mut t = rng.gen_range(0.0..cfg.silence_s.1);
    while t < duration {
        let end = (t + rng.gen_range(cfg.speech_s.0..=cfg.speech_s.1)).min(duration);
        segments.push((t, end));
        t = end + rng.gen_range(cfg.silence_s.0..=cfg.silence_s.1);
    }
    segments
}

fn speaker_track(
    cfg: &SynthConfig,
    speaker: &Speaker,
    id: usize,
    duration: f64,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledClip> {
    let segments = schedule(cfg, duration, rng);
    let mut samples = render_speaker(cfg, speaker, len, rng);
    let rate = cfg.sample_rate as f64;
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f64 / rate;
        if !segments.iter().any(|&(on, off)| on <= t && t < off) {
            *s = 0.0;
        }
    }
    let tagged: Vec<(f64, f64, usize)> = segments.iter().map(|&(a, b)| (a, b, id)).collect();
    let waveform = Waveform::new(samples, cfg.sample_rate)?;
    let mut labels = labels_from_segments(&tagged, duration)?.into_labels();
    labels.resize(waveform.frame_count(), 0);
    LabeledClip::new(
        waveform,
        FrameLabelTrack::new(labels)?,
        Provenance::Synthetic,
    )
}

/// Seeded corpus of `n_clips` clips of `duration_s` seconds with default settings.
pub fn synth_corpus(seed: u64, n_clips: usize, duration_s: f64) -> Result<Vec<LabeledClip>> {
    synth_corpus_with(&SynthConfig::default(), seed, n_clips, duration_s)
}

/// Seeded corpus with explicit settings. Clip `k` depends only on the seed
/// and `k`, so corpora of different sizes share their common prefix.
pub fn synth_corpus_with(
    cfg: &SynthConfig,
    seed: u64,
    n_clips: usize,
    duration_s: f64,
) -> Result<Vec<LabeledClip>> {
    cfg.validate()?;
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "clip duration {duration_s}"
        )));
    }
    let mut pool_rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = speaker_pool(cfg, &mut pool_rng);
    let len = math::round(duration_s * cfg.sample_rate as f64) as usize;
    (0..n_clips)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let a = rng.gen_range(0..pool.len());
            let mut b = rng.gen_range(0..pool.len() - 1);
            if b >= a {
                b += 1;
            }
            let ta = speaker_track(cfg, &pool[a], a, duration_s, len, &mut rng)?;
            let tb = speaker_track(cfg, &pool[b], b, duration_s, len, &mut rng)?;
            let gain = if cfg.max_gain_db > 0.0 {
                rng.gen_range(-cfg.max_gain_db..=cfg.max_gain_db)
            } else {
                0.0
            };
            let mixed = mix_overlap(&ta, &tb, gain)?;
            let noisy = match add_noise(&mixed, cfg.noise_snr_db, &mut rng) {
                Ok(c) => c,
                // A clip without any speech keeps its silent waveform.
                Err(Error::NoSpeechEnergy) => mixed,
                Err(e) => return Err(e),
            };
            let (w, l, _) = noisy.into_parts();
            LabeledClip::new(w, l, Provenance::Synthetic)
        })
        .collect()
}
