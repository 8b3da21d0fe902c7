//! Binary model checkpoints. The layout is described in
//! `docs/checkpoint-format.md`.

use std::path::Path;

use osd3_core::model::{Model, ModelConfig};
use osd3_core::nn::{AdamState, ParamStore};

use crate::config::{model_config_text, Config};
use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"OSD3";
const VERSION: u32 = 1;

/// A model and, for resumable training, its optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<AdamState>,
}

pub fn encode(model: &Model, adam: Option<&AdamState>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_bytes(&mut out, model_config_text(model.config()).as_bytes());
    let params = model.params().params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        put_bytes(&mut out, p.name.as_bytes());
        out.push(u8::from(p.trainable));
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_values(&mut out, &p.value);
    }
    match adam {
        None => out.push(0),
        Some(state) => {
            out.push(1);
            out.extend_from_slice(&state.step.to_le_bytes());
            for buf in state.m.iter().chain(&state.v) {
                put_values(&mut out, buf);
            }
        }
    }
    out
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_values(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "string is not UTF-8".to_string())
    }

    fn values(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("value count overflows")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let config = Config::parse(&r.string()?)
        .and_then(|c| c.model_config())
        .map_err(|e| format!("embedded model configuration: {e}"))?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = r.string()?;
        let trainable = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(format!("parameter {name}: bad trainable flag {b}")),
        };
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or("parameter size overflows")?;
        let value = r.values(len)?;
        store.add(name, &shape, value, trainable);
    }
    let model = Model::from_params(config, &store).map_err(|e| e.to_string())?;
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let sizes: Vec<usize> = store.params().iter().map(|p| p.value.len()).collect();
            let m = sizes
                .iter()
                .map(|&n| r.values(n))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let v = sizes
                .iter()
                .map(|&n| r.values(n))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Some(AdamState { m, v, step })
        }
        b => return Err(format!("bad optimizer flag {b}")),
    };
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Checkpoint { model, adam })
}

pub fn save(path: &Path, model: &Model, adam: Option<&AdamState>) -> Result<()> {
    std::fs::write(path, encode(model, adam)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::format(path, m))
}

/// Rejects a run configuration whose model keys disagree with the checkpoint.
pub fn check_compatible(path: &Path, stored: &ModelConfig, run: &Config) -> Result<()> {
    if !run.has_model_keys() {
        return Ok(());
    }
    let requested = run.model_config()?;
    if &requested != stored {
        return Err(CliError::Config(format!(
            "{} was trained with a different model configuration:\n{}",
            path.display(),
            model_config_text(stored)
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use osd3_core::nn::Tensor;

    fn tiny() -> ModelConfig {
        ModelConfig {
            seq_len: 12,
            mel_bins: 8,
            conv_channels: vec![4, 4, 4],
            pools: vec![(2, 1), (3, 2), (1, 2)],
            gru_hidden: 3,
            gru_layers: 1,
            head_hidden: 5,
            num_classes: 3,
            dropout: 0.5,
            se_reduction: 2,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut model = Model::new(tiny(), 5).unwrap();
        model.assume_identity_statistics();
        let mut adam = AdamState::new(model.params());
        adam.step = 7;
        adam.m[0][0] = 0.25;
        adam.v[1][0] = f64::MIN_POSITIVE;
        let bytes = encode(&model, Some(&adam));
        let back = decode(&bytes).unwrap();
        assert_eq!(back.model.params(), model.params());
        assert_eq!(back.model.config(), model.config());
        assert_eq!(back.adam.as_ref(), Some(&adam));
        assert_eq!(encode(&back.model, back.adam.as_ref()), bytes);
        let x = Tensor::new(
            &[1, 12, 8],
            (0..96).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let a = model.infer(&x).unwrap();
        let b = back.model.infer(&x).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let model = Model::new(tiny(), 5).unwrap();
        let bytes = encode(&model, None);
        assert!(decode(&bytes[..bytes.len() - 1])
            .unwrap_err()
            .contains("truncated"));
        assert!(decode(b"NOPE").unwrap_err().contains("magic"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).unwrap_err().contains("trailing"));
        let mut version = bytes;
        version[4] = 9;
        assert!(decode(&version).unwrap_err().contains("version"));
    }

    #[test]
    fn mismatched_run_config_is_rejected() {
        let cfg = tiny();
        let mut run = Config::parse(&model_config_text(&cfg)).unwrap();
        check_compatible(Path::new("m"), &cfg, &run).unwrap();
        run.set("gru_hidden", "4").unwrap();
        assert!(matches!(
            check_compatible(Path::new("m"), &cfg, &run),
            Err(CliError::Config(_))
        ));
        check_compatible(Path::new("m"), &cfg, &Config::default()).unwrap();
    }
}
