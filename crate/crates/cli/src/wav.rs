//! WAV input and output.

use std::path::Path;

use osd3_core::features::Waveform;

use crate::error::{CliError, Result};

/// Read a WAV file as mono samples in `[-1, 1]`; channels are averaged.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| CliError::format(path, format!("bad WAV header: {e}")))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(CliError::format(path, "WAV declares zero channels"));
    }
    let decode = |e: hound::Error| CliError::format(path, format!("bad WAV data: {e}"));
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(CliError::format(
                    path,
                    format!("unsupported {}-bit float WAV", spec.bits_per_sample),
                ));
            }
            reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(decode)?
        }
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(decode)?
        }
    };
    let mono = interleaved
        .chunks_exact(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(Waveform::new(mono, spec.sample_rate).map_err(|e| CliError::format(path, e.to_string()))?)
}

/// Write mono 16-bit PCM. Samples are clipped to `[-1, 1]` and rounded to
/// the nearest step of 1/32768.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(e) => CliError::io(path, e),
        other => CliError::format(path, other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in w.samples() {
        writer.write_sample(quantize(s)).map_err(io)?;
    }
    writer.finalize().map_err(io)
}

fn quantize(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(-32768.0, 32767.0) as i16
}
