use alloc::vec::Vec;

use super::{pre_emphasis, MelSpectrogram, Waveform};
use crate::{math, Error, Result};

/// Analysis settings for [`log_mel`].
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: super::SAMPLE_RATE,
            window: super::WINDOW_SAMPLES,
            hop: super::HOP_SAMPLES,
            n_fft: 512,
            n_mels: super::MEL_BINS,
            pre_emphasis: super::PRE_EMPHASIS,
            log_floor: 1e-10,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * math::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (math::powf(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
///
/// Returns `n_mels` rows of `n_fft / 2 + 1` weights each, flattened.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Vec<f64> {
    let n_bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut bank = alloc::vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut bank[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            *w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
        }
    }
    bank
}

/// Log-mel spectrogram without padding or normalization.
///
/// Frames start every `hop` samples and span `window` samples, giving
/// `1 + (len - window) / hop` frames. Each frame is pre-emphasized,
/// Hamming-windowed, transformed to a power spectrum, projected on the mel
/// filterbank and mapped through `ln(energy + floor)`.
pub fn log_mel(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::SampleRateMismatch(w.sample_rate(), cfg.sample_rate));
    }
    if w.len() < cfg.window {
        return Err(Error::TooShort {
            len: w.len(),
            window: cfg.window,
        });
    }
    let emphasized = pre_emphasis(w, cfg.pre_emphasis);
    let x = emphasized.samples();
    let num_frames = 1 + (x.len() - cfg.window) / cfg.hop;
    let n_bins = cfg.n_fft / 2 + 1;
    let bank = mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels);
    let hamming: Vec<f64> = (0..cfg.window)
        .map(|n| {
            0.54 - 0.46
                * math::cos(2.0 * core::f64::consts::PI * n as f64 / (cfg.window - 1) as f64)
        })
        .collect();

    let mut out = Vec::with_capacity(num_frames * cfg.n_mels);
    let mut re = alloc::vec![0.0; cfg.n_fft];
    let mut im = alloc::vec![0.0; cfg.n_fft];
    let mut power = alloc::vec![0.0; n_bins];
    for t in 0..num_frames {
        let frame = &x[t * cfg.hop..t * cfg.hop + cfg.window];
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        for ((r, s), h) in re.iter_mut().zip(frame).zip(&hamming) {
            *r = s * h;
        }
        super::fft_in_place(&mut re, &mut im);
        for (k, p) in power.iter_mut().enumerate() {
            *p = re[k] * re[k] + im[k] * im[k];
        }
        for row in bank.chunks_exact(n_bins) {
            let energy: f64 = row.iter().zip(&power).map(|(a, b)| a * b).sum();
            out.push(math::ln(energy + cfg.log_floor));
        }
    }
    MelSpectrogram::new(out, num_frames, cfg.n_mels)
}
