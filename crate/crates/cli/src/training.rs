//! Feature preparation, the epoch loop and held-out evaluation.

use osd3_core::augment::{
    add_noise, overlap_augment_epoch, samplerate_roundtrip_augment, FrameLabelTrack, LabeledClip,
};
use osd3_core::features::{frame_features, resample, MelConfig, MelSpectrogram, SAMPLE_RATE};
use osd3_core::inference::{sliding_posteriors, ScoreTrack};
use osd3_core::model::{train_step, Model, ModelConfig};
use osd3_core::nn::{class_weights_from_counts, cosine_lr, AdamState, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Log-mel features with frame labels of the same length.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub mel: MelSpectrogram,
    pub labels: Vec<u8>,
}

pub fn mel_config(model: &ModelConfig) -> MelConfig {
    MelConfig {
        n_mels: model.mel_bins,
        ..MelConfig::default()
    }
}

/// Resample to 16 kHz if needed, extract features and align the labels to
/// the feature frames. Resampling can move the frame count by one; the
/// last label is repeated or dropped to match.
pub fn featurize(clip: &LabeledClip, model: &ModelConfig) -> Result<Featurized> {
    let wave = if clip.waveform().sample_rate() == SAMPLE_RATE {
        clip.waveform().clone()
    } else {
        resample(clip.waveform(), SAMPLE_RATE)?
    };
    let mel = frame_features(&wave, &mel_config(model))?;
    let mut labels = clip.labels().labels().to_vec();
    let last = labels.last().copied().unwrap_or(0);
    labels.resize(mel.num_frames(), last);
    Ok(Featurized { mel, labels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    /// Overlap-mixed clips per training clip and epoch.
    pub overlap_ratio: f64,
    pub max_gain_db: f64,
    /// Add an 8 kHz round-trip copy of every clip.
    pub roundtrip: bool,
    /// Add a noisy copy of every clip at this SNR; infinite disables.
    pub noise_snr_db: f64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            overlap_ratio: 1.0,
            max_gain_db: 5.0,
            roundtrip: false,
            noise_snr_db: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub crops_per_clip: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub augment: AugmentOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 32,
            epochs: 60,
            crops_per_clip: 1,
            lr_max: 1e-3,
            lr_min: 1e-5,
            augment: AugmentOptions::default(),
        }
    }
}

/// One optimizer step as reported to the observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Callbacks invoked during [`train`].
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called after each epoch with the mean step loss of that epoch.
    fn on_epoch(
        &mut self,
        _epoch: usize,
        _mean_loss: f64,
        _model: &Model,
        _adam: &AdamState,
    ) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Mean loss of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub class_weights: Vec<f64>,
    pub steps: u64,
}

fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Static augmentation copies, drawn once from stream 0.
fn static_copies(
    clips: &[LabeledClip],
    opts: &AugmentOptions,
    seed: u64,
) -> Result<Vec<LabeledClip>> {
    let mut out = Vec::new();
    let mut rng = epoch_rng(seed, 0);
    if opts.roundtrip {
        for c in clips
            .iter()
            .filter(|c| c.waveform().sample_rate() == SAMPLE_RATE)
        {
            out.push(samplerate_roundtrip_augment(c)?);
        }
    }
    if opts.noise_snr_db.is_finite() {
        for c in clips {
            match add_noise(c, opts.noise_snr_db, &mut rng) {
                Ok(n) => out.push(n),
                Err(osd3_core::Error::NoSpeechEnergy) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}

/// Class weights from the frame counts of a labelled set, mapped into the
/// model's class space.
pub fn class_weights(data: &[Featurized], model: &ModelConfig) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; model.num_classes];
    for f in data {
        for &l in &f.labels {
            counts[model.map_label(l) as usize] += 1;
        }
    }
    Ok(class_weights_from_counts(&counts)?)
}

/// Window `[start, start + seq_len)` of features and labels, zero-padded.
fn crop(f: &Featurized, start: usize, seq_len: usize, x: &mut Vec<f64>, y: &mut Vec<u8>) {
    x.extend(f.mel.window(start, seq_len));
    let end = (start + seq_len).min(f.labels.len());
    y.extend_from_slice(&f.labels[start.min(end)..end]);
    y.resize(y.len() + seq_len - (end - start.min(end)), 0);
}

fn draw_crops(
    data: &[&Featurized],
    per_clip: usize,
    seq_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let mut crops = Vec::with_capacity(data.len() * per_clip);
    for (i, f) in data.iter().enumerate() {
        let room = f.mel.num_frames().saturating_sub(seq_len);
        for _ in 0..per_clip {
            crops.push((i, rng.gen_range(0..=room)));
        }
    }
    crops.shuffle(rng);
    crops
}

/// Train `model` on `clips` for `opts.epochs` epochs.
///
/// Each epoch draws `crops_per_clip` random windows from every clip (plus
/// that epoch's overlap mixtures), shuffles them and steps through them in
/// batches under a cosine learning-rate schedule spanning the whole run.
/// Randomness comes from `opts.seed` only, one stream per epoch.
pub fn train(
    model: &mut Model,
    clips: &[LabeledClip],
    opts: &TrainOptions,
    observer: &mut dyn TrainObserver,
) -> Result<TrainReport> {
    if opts.batch_size == 0 || opts.crops_per_clip == 0 {
        return Err(crate::error::CliError::Config(
            "batch_size and crops_per_clip must be positive".into(),
        ));
    }
    let cfg = model.config().clone();
    let mut base: Vec<Featurized> = clips
        .iter()
        .map(|c| featurize(c, &cfg))
        .collect::<Result<_>>()?;
    for c in static_copies(clips, &opts.augment, opts.seed)? {
        base.push(featurize(&c, &cfg)?);
    }
    let weights = class_weights(&base, &cfg)?;
    let quota = (opts.augment.overlap_ratio * clips.len() as f64).round() as usize;
    let eligible = clips
        .iter()
        .filter(|c| !c.labels().labels().contains(&2))
        .count();
    let mixed_per_epoch = if eligible >= 2 { quota } else { 0 };
    let crops_per_epoch = (base.len() + mixed_per_epoch) * opts.crops_per_clip;
    let steps_per_epoch = crops_per_epoch.div_ceil(opts.batch_size) as u64;
    let total_steps = steps_per_epoch * opts.epochs as u64;
    log::info!(
        "training on {} clips ({} static copies, {mixed_per_epoch} mixtures per epoch), {total_steps} steps, class weights {weights:?}",
        clips.len(),
        base.len() - clips.len()
    );

    let mut adam = AdamState::new(model.params());
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut rng = epoch_rng(opts.seed, epoch as u64 + 1);
        let mixed =
            overlap_augment_epoch(clips, mixed_per_epoch, opts.augment.max_gain_db, &mut rng)?;
        let mixed: Vec<Featurized> = mixed
            .iter()
            .map(|c| featurize(c, &cfg))
            .collect::<Result<_>>()?;
        let all: Vec<&Featurized> = base.iter().chain(&mixed).collect();
        let crops = draw_crops(&all, opts.crops_per_clip, cfg.seq_len, &mut rng);
        let mut sum = 0.0;
        let mut n = 0usize;
        for batch in crops.chunks(opts.batch_size) {
            let mut x = Vec::with_capacity(batch.len() * cfg.seq_len * cfg.mel_bins);
            let mut y = Vec::with_capacity(batch.len() * cfg.seq_len);
            for &(i, s) in batch {
                crop(all[i], s, cfg.seq_len, &mut x, &mut y);
            }
            let input = Tensor::new(&[batch.len(), cfg.seq_len, cfg.mel_bins], x)?;
            let step = adam.step;
            let lr = cosine_lr(step, total_steps, opts.lr_max, opts.lr_min)?;
            let loss = train_step(model, &mut adam, &input, &y, &weights, lr, &mut rng)?;
            observer.on_step(&StepRecord {
                epoch,
                step,
                lr,
                loss,
            })?;
            sum += loss;
            n += 1;
        }
        let mean = if n == 0 { f64::NAN } else { sum / n as f64 };
        log::info!("epoch {} mean loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
        observer.on_epoch(epoch, mean, model, &adam)?;
    }
    Ok(TrainReport {
        epoch_losses,
        class_weights: weights,
        steps: adam.step,
    })
}

/// Held-out frame metrics of a model over featurized clips.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Frames whose arg-max class equals the (mapped) label.
    pub accuracy: f64,
    /// Overlap score track and three-class labels per clip.
    pub scored: Vec<(ScoreTrack, FrameLabelTrack)>,
}

pub fn evaluate(model: &Model, data: &[Featurized]) -> Result<Evaluation> {
    let cfg = model.config();
    let k = cfg.num_classes;
    let (mut correct, mut total) = (0usize, 0usize);
    let mut scored = Vec::with_capacity(data.len());
    for f in data {
        let post = sliding_posteriors(model, &f.mel)?;
        let mut scores = Vec::with_capacity(f.labels.len());
        for (row, &label) in post.chunks_exact(k).zip(&f.labels) {
            let arg = (0..k).fold(0, |best, c| if row[c] > row[best] { c } else { best });
            correct += usize::from(arg as u8 == cfg.map_label(label));
            total += 1;
            scores.push(row[cfg.overlap_class()].clamp(0.0, 1.0));
        }
        scored.push((
            ScoreTrack::new(scores)?,
            FrameLabelTrack::new(f.labels.clone())?,
        ));
    }
    let accuracy = if total == 0 {
        f64::NAN
    } else {
        correct as f64 / total as f64
    };
    Ok(Evaluation { accuracy, scored })
}
