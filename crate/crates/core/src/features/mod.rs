//! Audio front end: waveforms, pre-emphasis, log-mel spectrograms and
//! band-limited resampling.

mod fft;
mod mel;
mod resample;

use alloc::vec::Vec;

use crate::{Error, Result};

pub use fft::fft_in_place;
pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, MelConfig};
pub use resample::resample;

/// Default analysis sample rate.
pub const SAMPLE_RATE: u32 = 16_000;
/// 25 ms analysis window at 16 kHz.
pub const WINDOW_SAMPLES: usize = 400;
/// 10 ms hop at 16 kHz.
pub const HOP_SAMPLES: usize = 160;
/// Default number of mel bins.
pub const MEL_BINS: usize = 128;
/// Default pre-emphasis coefficient.
pub const PRE_EMPHASIS: f64 = 0.97;

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "waveform contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(alloc::vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of 10 ms frames on the label grid, `floor(len / hop)`.
    pub fn frame_count(&self) -> usize {
        self.samples.len() * crate::FRAME_RATE / self.sample_rate as usize
    }
}

/// `T x F` matrix of log-mel energies, frames at 100 per second.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: Vec<f64>,
    num_frames: usize,
    num_bins: usize,
}

impl MelSpectrogram {
    pub fn new(frames: Vec<f64>, num_frames: usize, num_bins: usize) -> Result<Self> {
        if frames.len() != num_frames * num_bins {
            return Err(Error::Shape(alloc::format!(
                "{} values for {num_frames}x{num_bins} spectrogram",
                frames.len()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "spectrogram contains non-finite values".into(),
            ));
        }
        Ok(Self {
            frames,
            num_frames,
            num_bins,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.num_bins..(t + 1) * self.num_bins]
    }

    /// Frames `[start, start + len)`, zero-filled past the end.
    pub fn window(&self, start: usize, len: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; len * self.num_bins];
        let end = (start + len).min(self.num_frames);
        if start < end {
            let n = (end - start) * self.num_bins;
            out[..n].copy_from_slice(&self.frames[start * self.num_bins..end * self.num_bins]);
        }
        out
    }

    /// Mean over frames of each bin.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = alloc::vec![0.0; self.num_bins];
        for row in self.frames.chunks_exact(self.num_bins) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.num_frames.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

/// First-order pre-emphasis: `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn pre_emphasis(w: &Waveform, coeff: f64) -> Waveform {
    let x = &w.samples;
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    for pair in x.windows(2) {
        y.push(pair[1] - coeff * pair[0]);
    }
    Waveform {
        samples: y,
        sample_rate: w.sample_rate,
    }
}

/// Subtract each bin's per-utterance mean.
pub fn mean_normalize(m: &MelSpectrogram) -> MelSpectrogram {
    let means = m.column_means();
    let mut frames = m.frames.clone();
    for row in frames.chunks_exact_mut(m.num_bins) {
        for (v, mu) in row.iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    MelSpectrogram {
        frames,
        num_frames: m.num_frames,
        num_bins: m.num_bins,
    }
}

/// Log-mel features aligned with the 10 ms label grid.
///
/// The waveform is zero-padded by `(window - hop) / 2` samples on both
/// sides so that frame `i` is centred on `(i + 0.5) * 10 ms` and the frame
/// count equals [`Waveform::frame_count`]. The result is mean-normalized.
pub fn frame_features(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let pad = (cfg.window - cfg.hop) / 2;
    let mut padded = Vec::with_capacity(w.len() + 2 * pad);
    padded.resize(pad, 0.0);
    padded.extend_from_slice(w.samples());
    padded.resize(w.len() + 2 * pad, 0.0);
    let padded = Waveform {
        samples: padded,
        sample_rate: w.sample_rate,
    };
    Ok(mean_normalize(&log_mel(&padded, cfg)?))
}
