use alloc::vec::Vec;

use super::Waveform;
use crate::{math, Error, Result};

const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.9;
const MAX_CACHED_PHASES: u64 = 1024;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Kernel {
    cutoff: f64,
    norm: f64,
}

impl Kernel {
    fn new(cutoff: f64) -> Self {
        Self {
            cutoff,
            norm: bessel_i0(KAISER_BETA),
        }
    }

    fn at(&self, tau: f64) -> f64 {
        let half = HALF_TAPS as f64;
        if tau.abs() >= half {
            return 0.0;
        }
        let x = core::f64::consts::PI * self.cutoff * tau;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            math::sin(x) / x
        };
        let r = tau / half;
        let window = bessel_i0(KAISER_BETA * math::sqrt(1.0 - r * r)) / self.norm;
        self.cutoff * sinc * window
    }

    /// Normalized taps for input indices `base - 31 ..= base + 32` given the
    /// fractional read position `frac` in `[0, 1)`.
    fn taps(&self, frac: f64, out: &mut [f64; 2 * HALF_TAPS as usize]) {
        let mut sum = 0.0;
        for (j, w) in out.iter_mut().enumerate() {
            let offset = j as i64 - (HALF_TAPS - 1);
            *w = self.at(frac - offset as f64);
            sum += *w;
        }
        out.iter_mut().for_each(|w| *w /= sum);
    }
}

/// Windowed-sinc (Kaiser) resampling with 64 taps per output sample.
///
/// Output length is `round(len * target / source)`. Out-of-range input
/// samples are treated as zeros. Taps are normalized to unit sum so a
/// constant signal is reproduced exactly away from the edges.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidSampleRate(target_rate));
    }
    let src = w.sample_rate() as u64;
    let dst = target_rate as u64;
    if src == dst {
        return Ok(w.clone());
    }
    let x = w.samples();
    let out_len = math::round(x.len() as f64 * dst as f64 / src as f64) as usize;
    let g = gcd(src, dst);
    let (p, q) = (dst / g, src / g);
    let kernel = Kernel::new(CUTOFF * (dst as f64 / src as f64).min(1.0));

    let cached: Option<Vec<[f64; 64]>> = (p <= MAX_CACHED_PHASES).then(|| {
        (0..p)
            .map(|r| {
                let mut t = [0.0; 64];
                kernel.taps(r as f64 / p as f64, &mut t);
                t
            })
            .collect()
    });

    let mut out = Vec::with_capacity(out_len);
    let mut scratch = [0.0; 64];
    for n in 0..out_len as u64 {
        let num = n * q;
        let base = (num / p) as i64;
        let r = num % p;
        let taps = match &cached {
            Some(table) => &table[r as usize],
            None => {
                kernel.taps(r as f64 / p as f64, &mut scratch);
                &scratch
            }
        };
        let mut acc = 0.0;
        for (j, wgt) in taps.iter().enumerate() {
            let k = base + j as i64 - (HALF_TAPS - 1);
            if k >= 0 && (k as usize) < x.len() {
                acc += wgt * x[k as usize];
            }
        }
        out.push(acc);
    }
    Waveform::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, len: usize, rate: u32) -> Waveform {
        let s = (0..len)
            .map(|n| math::sin(2.0 * core::f64::consts::PI * freq * n as f64 / rate as f64))
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        dot / math::sqrt(na * nb)
    }

    #[test]
    fn identity_rate() {
        let w = tone(440.0, 1000, 16000);
        assert_eq!(resample(&w, 16000).unwrap(), w);
        assert_eq!(resample(&w, 0), Err(Error::InvalidSampleRate(0)));
    }

    #[test]
    fn output_length() {
        let w = Waveform::silence(16001, 16000).unwrap();
        assert_eq!(resample(&w, 8000).unwrap().len(), 8001);
        let w = Waveform::silence(1003, 16000).unwrap();
        assert_eq!(resample(&w, 44100).unwrap().len(), 2765);
        assert_eq!(resample(&w, 8000).unwrap().sample_rate(), 8000);
    }

    #[test]
    fn preserves_dc() {
        let w = Waveform::new(alloc::vec![0.37; 4000], 16000).unwrap();
        for rate in [8000, 22050, 16001] {
            let y = resample(&w, rate).unwrap();
            let n = y.len();
            for v in &y.samples()[100..n - 100] {
                assert!((v - 0.37).abs() < 1e-3, "rate {rate}: {v}");
            }
        }
    }

    #[test]
    fn round_trip_keeps_low_tone() {
        let w = tone(1000.0, 16000, 16000);
        let back = resample(&resample(&w, 8000).unwrap(), 16000).unwrap();
        assert_eq!(back.len(), w.len());
        let c = correlation(&w.samples()[200..15800], &back.samples()[200..15800]);
        assert!(c >= 0.99, "correlation {c}");
    }

    #[test]
    fn linear_in_amplitude() {
        let w = tone(300.0, 2000, 16000);
        let scaled = Waveform::new(w.samples().iter().map(|v| v * -3.5).collect(), 16000).unwrap();
        let a = resample(&w, 11025).unwrap();
        let b = resample(&scaled, 11025).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x * -3.5 - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }
}
