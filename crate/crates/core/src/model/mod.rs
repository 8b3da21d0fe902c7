//! The three-class convolutional-recurrent overlap detector.
//!
//! Layer order, per frame sequence of `seq_len x mel_bins` log-mel values:
//!
//! ```text
//! 3 x { Conv3x3 - BN - ReLU - Conv3x3 - BN - ReLU - SE - AvgPool }
//!   -> mean over mel axis
//!   -> n x bi-GRU
//!   -> per frame { FC - Dropout - LeakyReLU - Linear(num_classes) }
//! ```
//!
//! With the default pools `(2,1), (3,2), (1,2)` a `150 x 128` input leaves
//! the CNN as `(25, 32, C)`, so each output frame stands for six input
//! frames.

mod config;
mod train;

use alloc::{format, string::String, vec::Vec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    avg_pool2d, avg_pool2d_backward, dropout, dropout_backward, leaky_relu, leaky_relu_backward,
    mel_average, mel_average_backward, relu, relu_backward, BatchNorm, BiGru, BiGruCache, BnCache,
    Conv2d, Gradients, Linear, Mode, ParamStore, SeCache, SqueezeExcitation, Tensor,
};
use crate::{Error, Result};

pub use config::ModelConfig;
pub use train::{downsample_labels, train_step, LEAKY_SLOPE};

#[derive(Debug, Clone)]
struct ConvBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    se: SqueezeExcitation,
    pool: (usize, usize),
}

/// Network structure plus all parameters and batch-norm statistics.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    blocks: Vec<ConvBlock>,
    grus: Vec<BiGru>,
    fc: Linear,
    classifier: Linear,
}

struct BlockCache {
    input: Tensor,
    bn1: BnCache,
    a1: Tensor,
    bn2: BnCache,
    a2: Tensor,
    se: SeCache,
}

/// Activations retained by [`Model::forward_train`] for the backward pass.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    cnn_shape: Vec<usize>,
    gru_inputs: Vec<Tensor>,
    gru_caches: Vec<BiGruCache>,
    gru_output: Tensor,
    dropped: Tensor,
    dropout_mask: Vec<f64>,
    activated: Tensor,
    trace: Vec<(String, Vec<usize>)>,
}

impl ForwardCache {
    /// `(stage, shape)` pairs of the intermediate activations, per sample.
    pub fn trace(&self) -> &[(String, Vec<usize>)] {
        &self.trace
    }
}

impl Model {
    /// Builds a freshly initialized model; identical seeds give identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut blocks = Vec::new();
        let mut cin = 1;
        for (i, (&c, &pool)) in config.conv_channels.iter().zip(&config.pools).enumerate() {
            let name = format!("block{i}");
            blocks.push(ConvBlock {
                conv1: Conv2d::new(&mut store, &format!("{name}.conv1"), cin, c, &mut rng),
                bn1: BatchNorm::new(&mut store, &format!("{name}.bn1"), c),
                conv2: Conv2d::new(&mut store, &format!("{name}.conv2"), c, c, &mut rng),
                bn2: BatchNorm::new(&mut store, &format!("{name}.bn2"), c),
                se: SqueezeExcitation::new(
                    &mut store,
                    &format!("{name}.se"),
                    c,
                    config.se_reduction,
                    &mut rng,
                )?,
                pool,
            });
            cin = c;
        }
        let mut grus = Vec::new();
        let mut width = cin;
        for i in 0..config.gru_layers {
            let g = BiGru::new(
                &mut store,
                &format!("gru{i}"),
                width,
                config.gru_hidden,
                &mut rng,
            );
            width = g.output_dim();
            grus.push(g);
        }
        let fc = Linear::new(&mut store, "head.fc", width, config.head_hidden, &mut rng);
        let classifier = Linear::new(
            &mut store,
            "head.out",
            config.head_hidden,
            config.num_classes,
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            blocks,
            grus,
            fc,
            classifier,
        })
    }

    /// Rebuilds a model from a configuration and a stored parameter set.
    pub fn from_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model.store.load_from(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Zero the final classifier so every frame emits equal logits.
    pub fn zero_head(&mut self) {
        let (w, b) = (self.classifier.weight(), self.classifier.bias());
        self.store.get_mut(w).iter_mut().for_each(|v| *v = 0.0);
        self.store.get_mut(b).iter_mut().for_each(|v| *v = 0.0);
    }

    /// Mark the initial batch-norm statistics (mean 0, variance 1) as usable
    /// in evaluation mode without any training pass.
    pub fn assume_identity_statistics(&mut self) {
        let ids: Vec<_> = self
            .blocks
            .iter()
            .flat_map(|b| [b.bn1.tracked(), b.bn2.tracked()])
            .collect();
        for id in ids {
            let t = self.store.get_mut(id);
            t[0] = t[0].max(1.0);
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let c = &self.config;
        if x.rank() != 3 || x.shape()[1] != c.seq_len || x.shape()[2] != c.mel_bins {
            return Err(Error::Shape(format!(
                "model expects [batch, {}, {}] input, got {:?}",
                c.seq_len,
                c.mel_bins,
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    /// Evaluation-mode logits `[B, out_frames, num_classes]` for input
    /// `[B, seq_len, mel_bins]`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_traced(x).map(|(y, _)| y)
    }

    /// [`Model::infer`] plus the per-sample shape of every stage.
    pub fn infer_traced(&self, x: &Tensor) -> Result<(Tensor, Vec<(String, Vec<usize>)>)> {
        let batch = self.check_input(x)?;
        let mut trace = Vec::new();
        let mut h = x
            .clone()
            .reshape(&[batch, self.config.seq_len, self.config.mel_bins, 1])?;
        for (i, block) in self.blocks.iter().enumerate() {
            let s = &self.store;
            let a1 = relu(&block.bn1.forward_eval(s, &block.conv1.forward(s, &h)?)?);
            let a2 = relu(&block.bn2.forward_eval(s, &block.conv2.forward(s, &a1)?)?);
            let (excited, _) = block.se.forward(s, &a2)?;
            h = avg_pool2d(&excited, block.pool)?;
            trace.push((format!("block{i}"), h.shape()[1..].to_vec()));
        }
        let mut g = mel_average(&h)?;
        trace.push(("average".into(), g.shape()[1..].to_vec()));
        for (i, gru) in self.grus.iter().enumerate() {
            g = gru.forward(&self.store, &g)?.0;
            trace.push((format!("gru{i}"), g.shape()[1..].to_vec()));
        }
        let hidden = leaky_relu(&self.fc.forward(&self.store, &g)?, LEAKY_SLOPE);
        let logits = self.classifier.forward(&self.store, &hidden)?;
        trace.push(("logits".into(), logits.shape()[1..].to_vec()));
        Ok((logits, trace))
    }

    /// Logits in the requested mode. Training mode updates batch-norm
    /// running statistics and draws dropout masks from `rng`.
    pub fn forward<R: Rng>(&mut self, x: &Tensor, mode: Mode, rng: &mut R) -> Result<Tensor> {
        match mode {
            Mode::Eval => self.infer(x),
            Mode::Train => self.forward_train(x, rng).map(|(y, _)| y),
        }
    }

    /// Training-mode forward pass retaining what [`Model::backward`] needs.
    pub fn forward_train<R: Rng>(
        &mut self,
        x: &Tensor,
        rng: &mut R,
    ) -> Result<(Tensor, ForwardCache)> {
        let batch = self.check_input(x)?;
        let mut trace = Vec::new();
        let mut h = x
            .clone()
            .reshape(&[batch, self.config.seq_len, self.config.mel_bins, 1])?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let z1 = block.conv1.forward(&self.store, &h)?;
            let (y1, bn1) = block.bn1.forward_train(&mut self.store, &z1)?;
            drop(z1);
            let a1 = relu(&y1);
            drop(y1);
            let z2 = block.conv2.forward(&self.store, &a1)?;
            let (y2, bn2) = block.bn2.forward_train(&mut self.store, &z2)?;
            drop(z2);
            let a2 = relu(&y2);
            drop(y2);
            let (excited, se) = block.se.forward(&self.store, &a2)?;
            let pooled = avg_pool2d(&excited, block.pool)?;
            trace.push((format!("block{i}"), pooled.shape()[1..].to_vec()));
            blocks.push(BlockCache {
                input: core::mem::replace(&mut h, pooled),
                bn1,
                a1,
                bn2,
                a2,
                se,
            });
        }
        let cnn_shape = h.shape().to_vec();
        let mut g = mel_average(&h)?;
        drop(h);
        trace.push(("average".into(), g.shape()[1..].to_vec()));
        let mut gru_inputs = Vec::new();
        let mut gru_caches = Vec::new();
        for (i, gru) in self.grus.iter().enumerate() {
            let (out, cache) = gru.forward(&self.store, &g)?;
            gru_inputs.push(core::mem::replace(&mut g, out));
            gru_caches.push(cache);
            trace.push((format!("gru{i}"), g.shape()[1..].to_vec()));
        }
        let fc_out = self.fc.forward(&self.store, &g)?;
        let (dropped, dropout_mask) = dropout(&fc_out, self.config.dropout, true, rng)?;
        let activated = leaky_relu(&dropped, LEAKY_SLOPE);
        let logits = self.classifier.forward(&self.store, &activated)?;
        trace.push(("logits".into(), logits.shape()[1..].to_vec()));
        let cache = ForwardCache {
            blocks,
            cnn_shape,
            gru_inputs,
            gru_caches,
            gru_output: g,
            dropped,
            dropout_mask,
            activated,
            trace,
        };
        Ok((logits, cache))
    }

    /// Parameter gradients for upstream logit gradient `dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<Gradients> {
        let s = &self.store;
        let mut grads = Gradients::zeros_like(s);
        let d = self
            .classifier
            .backward(s, &cache.activated, dlogits, &mut grads)?;
        let d = leaky_relu_backward(&cache.dropped, &d, LEAKY_SLOPE);
        let d = dropout_backward(&cache.dropout_mask, &d);
        let mut d = self.fc.backward(s, &cache.gru_output, &d, &mut grads)?;
        for ((gru, input), gc) in self
            .grus
            .iter()
            .zip(&cache.gru_inputs)
            .zip(&cache.gru_caches)
            .rev()
        {
            d = gru.backward(s, input, gc, &d, &mut grads)?;
        }
        let mut d = mel_average_backward(&cache.cnn_shape, &d);
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let d_excited = avg_pool2d_backward(bc.a2.shape(), &d, block.pool);
            let da2 = block
                .se
                .backward(s, &bc.a2, &bc.se, &d_excited, &mut grads)?;
            let dz2 = block
                .bn2
                .backward(s, &bc.bn2, &relu_backward(&bc.a2, &da2), &mut grads)?;
            let da1 = block.conv2.backward(s, &bc.a1, &dz2, &mut grads)?;
            let dz1 = block
                .bn1
                .backward(s, &bc.bn1, &relu_backward(&bc.a1, &da1), &mut grads)?;
            d = block.conv1.backward(s, &bc.input, &dz1, &mut grads)?;
        }
        Ok(grads)
    }
}
