use alloc::{format, vec::Vec};

use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub mel_bins: usize,
    /// Output channels of each convolution block.
    pub conv_channels: Vec<usize>,
    /// `(time, mel)` average-pool extents after each block.
    pub pools: Vec<(usize, usize)>,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub head_hidden: usize,
    /// 3 for non-speech / single / overlap, 2 for the binary ablation.
    pub num_classes: usize,
    pub dropout: f64,
    pub se_reduction: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 150,
            mel_bins: 128,
            conv_channels: alloc::vec![128, 128, 128],
            pools: alloc::vec![(2, 1), (3, 2), (1, 2)],
            gru_hidden: 256,
            gru_layers: 2,
            head_hidden: 256,
            num_classes: 3,
            dropout: 0.5,
            se_reduction: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.seq_len == 0 || self.mel_bins == 0 {
            return fail(format!("empty input {}x{}", self.seq_len, self.mel_bins));
        }
        if self.conv_channels.is_empty() || self.conv_channels.len() != self.pools.len() {
            return fail(format!(
                "{} channel widths for {} pools",
                self.conv_channels.len(),
                self.pools.len()
            ));
        }
        if let Some(c) = self
            .conv_channels
            .iter()
            .find(|&&c| c == 0 || c / self.se_reduction.max(1) == 0 || self.se_reduction == 0)
        {
            return fail(format!(
                "{c} channels with squeeze-excitation reduction {}",
                self.se_reduction
            ));
        }
        let (mut t, mut f) = (self.seq_len, self.mel_bins);
        for &(pt, pf) in &self.pools {
            if pt == 0 || pf == 0 || t % pt != 0 || f % pf != 0 {
                return fail(format!("pool ({pt}, {pf}) does not divide ({t}, {f})"));
            }
            t /= pt;
            f /= pf;
        }
        if self.gru_layers == 0 || self.gru_hidden == 0 || self.head_hidden == 0 {
            return fail("recurrent and head layers must be non-empty".into());
        }
        if !(2..=3).contains(&self.num_classes) {
            return fail(format!(
                "{} classes; only 2 or 3 are supported",
                self.num_classes
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Input frames represented by one output frame.
    pub fn time_reduction(&self) -> usize {
        self.pools.iter().map(|p| p.0).product()
    }

    pub fn output_frames(&self) -> usize {
        self.seq_len / self.time_reduction()
    }

    /// Mel extent after the convolutional stack.
    pub fn output_bins(&self) -> usize {
        self.mel_bins / self.pools.iter().map(|p| p.1).product::<usize>()
    }

    /// Index of the class whose posterior is the overlap score.
    pub fn overlap_class(&self) -> usize {
        self.num_classes - 1
    }

    /// Map a three-class frame label into this model's class space.
    pub fn map_label(&self, label: u8) -> u8 {
        if self.num_classes == 2 {
            u8::from(label == 2)
        } else {
            label
        }
    }
}
