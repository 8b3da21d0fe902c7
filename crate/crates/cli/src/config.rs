//! Flat `key = value` run configuration with `--key value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use osd3_core::augment::SynthConfig;
use osd3_core::model::ModelConfig;

use crate::error::{CliError, Result};

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "random seed, required by synth and train"),
    ("seq_len", "frames per model window"),
    ("mel_bins", "mel bands of the input features"),
    (
        "conv_channels",
        "channels per conv block, one value or a comma list",
    ),
    ("pools", "average-pool extents per block, e.g. 2x1,3x2,1x2"),
    ("gru_hidden", "hidden units per GRU direction"),
    ("gru_layers", "stacked bidirectional GRU layers"),
    ("head_hidden", "width of the hidden head layer"),
    (
        "num_classes",
        "3 for the three-class model, 2 for the binary ablation",
    ),
    ("dropout", "head dropout probability"),
    ("se_reduction", "squeeze-excitation reduction ratio"),
    ("batch_size", "training windows per step"),
    ("epochs", "passes over the training manifest"),
    (
        "crops_per_clip",
        "random training windows drawn per clip per epoch",
    ),
    ("lr_max", "peak learning rate of the cosine schedule"),
    ("lr_min", "final learning rate of the cosine schedule"),
    (
        "augment_overlap_ratio",
        "overlap-mixed clips per eligible clip per epoch",
    ),
    ("augment_max_gain_db", "overlap mix gain range, +/- dB"),
    (
        "augment_roundtrip",
        "add an 8 kHz round-trip copy of every clip (true/false)",
    ),
    (
        "augment_noise_snr_db",
        "add a noisy copy of every clip at this SNR; inf disables",
    ),
    ("train_manifest", "wav<TAB>label manifest for training"),
    (
        "manifest",
        "wav<TAB>label manifest to score, calibrate or evaluate",
    ),
    ("wav", "single WAV file to score"),
    ("out_dir", "output directory"),
    ("out", "output file"),
    ("checkpoint", "model checkpoint file"),
    ("scores_dir", "directory of per-clip score dumps"),
    ("scores", "single score dump"),
    ("labels", "single label file"),
    (
        "target_precision",
        "precision the calibrated threshold must reach",
    ),
    ("threshold", "decision threshold for overlap scores"),
    ("threshold_file", "calibration output holding threshold=..."),
    ("min_duration_s", "shortest OSD segment kept"),
    ("synth_clips", "number of synthetic clips"),
    ("synth_duration_s", "length of each synthetic clip"),
    ("synth_speakers", "size of the synthetic speaker pool"),
    ("synth_noise_snr_db", "noise floor of synthetic clips"),
    ("sad", "SAD segments, RTTM or onset/offset text"),
    ("osd", "OSD segments file"),
    ("pieces", "split pieces file"),
    ("ranking", "per-segment speaker ranking file"),
    ("file_id", "file identifier written to RTTM"),
    ("channel", "channel written to RTTM"),
    ("mode", "eval mode: osd or der"),
    ("ref", "reference RTTM"),
    ("hyp", "hypothesis RTTM"),
    ("collar", "DER no-score collar in seconds"),
];

const MODEL_KEYS: &[&str] = &[
    "seq_len",
    "mel_bins",
    "conv_channels",
    "pools",
    "gru_hidden",
    "gru_layers",
    "head_hidden",
    "num_classes",
    "dropout",
    "se_reduction",
];

/// Parsed configuration; later assignments of a key win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Apply `--key value` or `--key=value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("expected --key, found {arg:?}")))?;
            match key.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let value = it
                        .next()
                        .ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                    self.set(key, value)?;
                }
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key)
            .ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))
    }

    fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| CliError::Config(format!("{key} = {value:?} is not valid")))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get_str(key) {
            Some(v) => Self::parse_value(key, v),
            None => Ok(default),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        Self::parse_value(key, self.require_str(key)?)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get_str(key).map(PathBuf::from)
    }

    /// A path that must exist when the command starts.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require_str(key)?);
        if !p.exists() {
            let err = std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{key} does not exist"),
            );
            return Err(CliError::io(p, err));
        }
        Ok(p)
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get_str(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(CliError::Config(format!("{key} = {v:?} is not a boolean"))),
        }
    }

    /// Whether any architecture key is set.
    pub fn has_model_keys(&self) -> bool {
        MODEL_KEYS.iter().any(|k| self.contains(k))
    }

    /// Architecture from the defaults overridden by the configured keys.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let d = ModelConfig::default();
        let pools = match self.get_str("pools") {
            Some(v) => parse_pools(v)?,
            None => d.pools.clone(),
        };
        let conv_channels = match self.get_str("conv_channels") {
            Some(v) => {
                let list = v
                    .split(',')
                    .map(|c| Self::parse_value::<usize>("conv_channels", c.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if list.len() == 1 {
                    vec![list[0]; pools.len()]
                } else {
                    list
                }
            }
            None => vec![d.conv_channels[0]; pools.len()],
        };
        let cfg = ModelConfig {
            seq_len: self.get("seq_len", d.seq_len)?,
            mel_bins: self.get("mel_bins", d.mel_bins)?,
            conv_channels,
            pools,
            gru_hidden: self.get("gru_hidden", d.gru_hidden)?,
            gru_layers: self.get("gru_layers", d.gru_layers)?,
            head_hidden: self.get("head_hidden", d.head_hidden)?,
            num_classes: self.get("num_classes", d.num_classes)?,
            dropout: self.get("dropout", d.dropout)?,
            se_reduction: self.get("se_reduction", d.se_reduction)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let d = SynthConfig::default();
        Ok(SynthConfig {
            num_speakers: self.get("synth_speakers", d.num_speakers)?,
            noise_snr_db: self.get("synth_noise_snr_db", d.noise_snr_db)?,
            ..d
        })
    }
}

/// Render a model configuration as config lines.
pub fn model_config_text(cfg: &ModelConfig) -> String {
    let channels: Vec<String> = cfg.conv_channels.iter().map(usize::to_string).collect();
    let pools: Vec<String> = cfg.pools.iter().map(|(t, f)| format!("{t}x{f}")).collect();
    format!(
        "seq_len = {}\nmel_bins = {}\nconv_channels = {}\npools = {}\ngru_hidden = {}\ngru_layers = {}\n\
         head_hidden = {}\nnum_classes = {}\ndropout = {}\nse_reduction = {}\n",
        cfg.seq_len,
        cfg.mel_bins,
        channels.join(","),
        pools.join(","),
        cfg.gru_hidden,
        cfg.gru_layers,
        cfg.head_hidden,
        cfg.num_classes,
        cfg.dropout,
        cfg.se_reduction
    )
}

fn parse_pools(v: &str) -> Result<Vec<(usize, usize)>> {
    v.split(',')
        .map(|p| {
            let (t, f) = p
                .trim()
                .split_once('x')
                .ok_or_else(|| CliError::Config(format!("pool {p:?} is not TxF")))?;
            Ok((
                Config::parse_value("pools", t)?,
                Config::parse_value("pools", f)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut c = Config::parse("# comment\nseed = 7\nepochs=3 # trailing\n\n").unwrap();
        assert_eq!(c.require::<u64>("seed").unwrap(), 7);
        c.apply_overrides(&["--epochs".into(), "5".into(), "--lr_max=0.01".into()])
            .unwrap();
        assert_eq!(c.get("epochs", 0usize).unwrap(), 5);
        assert_eq!(c.get("lr_max", 0.0).unwrap(), 0.01);
        assert_eq!(c.get("batch_size", 9usize).unwrap(), 9);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(
            Config::parse("sede = 1"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(Config::parse("seed 1"), Err(CliError::Config(_))));
        let mut c = Config::default();
        assert!(matches!(
            c.apply_overrides(&["seed".into()]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            c.apply_overrides(&["--seed".into()]),
            Err(CliError::Usage(_))
        ));
        c.set("seed", "x").unwrap();
        assert!(c.require::<u64>("seed").is_err());
        assert!(c.require::<u64>("epochs").is_err());
    }

    #[test]
    fn model_config_round_trips_through_text() {
        let mut c = Config::default();
        c.set("conv_channels", "32").unwrap();
        c.set("gru_hidden", "64").unwrap();
        c.set("num_classes", "2").unwrap();
        let m = c.model_config().unwrap();
        assert_eq!(m.conv_channels, vec![32, 32, 32]);
        let back = Config::parse(&model_config_text(&m))
            .unwrap()
            .model_config()
            .unwrap();
        assert_eq!(back, m);
        assert!(c.has_model_keys());
        assert!(!Config::default().has_model_keys());
    }

    #[test]
    fn invalid_architecture_is_a_config_error() {
        let mut c = Config::default();
        c.set("pools", "2x1,7x2,1x2").unwrap();
        assert_eq!(CliError::from(c.model_config().unwrap_err()).exit_code(), 1);
    }

    #[test]
    fn booleans() {
        let c = Config::parse("augment_roundtrip = yes").unwrap();
        assert!(c.bool("augment_roundtrip", false).unwrap());
        assert!(!Config::default().bool("augment_roundtrip", false).unwrap());
    }
}
