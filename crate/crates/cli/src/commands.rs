//! The eight subcommands. Each reads a [`Config`] and writes its data
//! products to files; progress goes to the log.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use osd3_core::augment::{synth_corpus_with, LabeledClip, Provenance};
use osd3_core::diarization::{assign_second_speaker, split_all};
use osd3_core::features::frame_features;
use osd3_core::inference::{calibrate, scores_to_segments, sliding_score, ScoreTrack};
use osd3_core::model::Model;
use osd3_core::nn::AdamState;
use osd3_core::scoring::{compute_der, frame_precision_recall, PrecisionRecall};

use crate::checkpoint;
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::formats;
use crate::training::{self, AugmentOptions, StepRecord, TrainObserver, TrainOptions};
use crate::wav::{read_wav, write_wav};

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// `cmd_synth`: a seeded synthetic corpus of WAV, label and manifest files.
pub fn synth(cfg: &Config) -> Result<PathBuf> {
    let seed: u64 = cfg.require("seed")?;
    let n: usize = cfg.get("synth_clips", 10)?;
    let duration: f64 = cfg.get("synth_duration_s", 10.0)?;
    let out = cfg
        .path("out_dir")
        .ok_or_else(|| CliError::Config("missing key out_dir".into()))?;
    let clips = synth_corpus_with(&cfg.synth_config()?, seed, n, duration)?;
    create_dir(&out)?;
    let mut entries = Vec::with_capacity(n);
    let mut counts = [0u64; 3];
    for (i, clip) in clips.iter().enumerate() {
        let (wav, lab) = (format!("clip_{i:05}.wav"), format!("clip_{i:05}.lab"));
        write_wav(&out.join(&wav), clip.waveform())?;
        formats::write_labels(&out.join(&lab), clip.labels())?;
        counts
            .iter_mut()
            .zip(clip.labels().class_counts())
            .for_each(|(a, b)| *a += b);
        entries.push((wav, lab));
    }
    let manifest = out.join("manifest.tsv");
    formats::write_manifest(&manifest, &entries)?;
    log::info!(
        "wrote {n} clips to {}; frames per class {counts:?}",
        out.display()
    );
    Ok(manifest)
}

/// Clips of a manifest with their WAV paths.
pub fn load_manifest(path: &Path) -> Result<Vec<(PathBuf, LabeledClip)>> {
    formats::read_manifest(path)?
        .into_iter()
        .map(|(wav, lab)| {
            let w = read_wav(&wav)?;
            let l = formats::read_labels(&lab)?;
            let clip = LabeledClip::new(w, l, Provenance::Real)
                .map_err(|e| CliError::format(&lab, e.to_string()))?;
            Ok((wav, clip))
        })
        .collect()
}

pub fn train_options(cfg: &Config) -> Result<TrainOptions> {
    let d = TrainOptions::default();
    let a = AugmentOptions::default();
    Ok(TrainOptions {
        seed: cfg.require("seed")?,
        batch_size: cfg.get("batch_size", d.batch_size)?,
        epochs: cfg.get("epochs", d.epochs)?,
        crops_per_clip: cfg.get("crops_per_clip", d.crops_per_clip)?,
        lr_max: cfg.get("lr_max", d.lr_max)?,
        lr_min: cfg.get("lr_min", d.lr_min)?,
        augment: AugmentOptions {
            overlap_ratio: cfg.get("augment_overlap_ratio", a.overlap_ratio)?,
            max_gain_db: cfg.get("augment_max_gain_db", a.max_gain_db)?,
            roundtrip: cfg.bool("augment_roundtrip", a.roundtrip)?,
            noise_snr_db: cfg.get("augment_noise_snr_db", a.noise_snr_db)?,
        },
    })
}

/// Writes one loss line per step and a checkpoint per epoch.
struct FileObserver {
    dir: PathBuf,
    log: std::io::BufWriter<std::fs::File>,
    log_path: PathBuf,
}

impl TrainObserver for FileObserver {
    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        log::debug!(
            "epoch {} step {} lr {:e} loss {}",
            r.epoch + 1,
            r.step,
            r.lr,
            r.loss
        );
        writeln!(
            self.log,
            "{}\t{}\t{:e}\t{}",
            r.epoch + 1,
            r.step,
            r.lr,
            r.loss
        )
        .map_err(|e| CliError::io(&self.log_path, e))
    }

    fn on_epoch(
        &mut self,
        epoch: usize,
        _mean: f64,
        model: &Model,
        adam: &AdamState,
    ) -> Result<()> {
        self.log
            .flush()
            .map_err(|e| CliError::io(&self.log_path, e))?;
        let bytes = checkpoint::encode(model, Some(adam));
        for name in [
            format!("epoch_{:03}.ckpt", epoch + 1),
            "model.ckpt".to_string(),
        ] {
            let p = self.dir.join(name);
            std::fs::write(&p, &bytes).map_err(|e| CliError::io(&p, e))?;
        }
        Ok(())
    }
}

/// `cmd_train`: writes `loss.log`, `epoch_NNN.ckpt` and `model.ckpt`.
pub fn train(cfg: &Config) -> Result<training::TrainReport> {
    let opts = train_options(cfg)?;
    let manifest = cfg.existing_path("train_manifest")?;
    let out = cfg
        .path("out_dir")
        .ok_or_else(|| CliError::Config("missing key out_dir".into()))?;
    let model_cfg = cfg.model_config()?;
    let clips: Vec<LabeledClip> = load_manifest(&manifest)?
        .into_iter()
        .map(|(_, c)| c)
        .collect();
    if clips.is_empty() {
        return Err(CliError::Data(format!(
            "{} lists no clips",
            manifest.display()
        )));
    }
    create_dir(&out)?;
    let log_path = out.join("loss.log");
    let file = std::fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut observer = FileObserver {
        dir: out.clone(),
        log: std::io::BufWriter::new(file),
        log_path,
    };
    let mut model = Model::new(model_cfg, opts.seed)?;
    let report = training::train(&mut model, &clips, &opts, &mut observer)?;
    if opts.epochs == 0 {
        checkpoint::save(&out.join("model.ckpt"), &model, None)?;
    }
    Ok(report)
}

fn load_model(cfg: &Config) -> Result<Model> {
    let path = cfg.existing_path("checkpoint")?;
    let ckpt = checkpoint::load(&path)?;
    checkpoint::check_compatible(&path, ckpt.model.config(), cfg)?;
    Ok(ckpt.model)
}

pub fn score_waveform(model: &Model, wav: &Path) -> Result<ScoreTrack> {
    let w = read_wav(wav)?;
    let w = if w.sample_rate() == osd3_core::features::SAMPLE_RATE {
        w
    } else {
        osd3_core::features::resample(&w, osd3_core::features::SAMPLE_RATE)?
    };
    let mel = frame_features(&w, &training::mel_config(model.config()))?;
    Ok(sliding_score(model, &mel)?)
}

/// Score dump name for a WAV file: its stem plus `.scores`.
pub fn score_name(wav: &Path) -> String {
    let stem = wav
        .file_stem()
        .map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned());
    format!("{stem}.scores")
}

fn manifest_score_paths(manifest: &Path, dir: &Path) -> Result<Vec<(PathBuf, PathBuf, PathBuf)>> {
    let entries = formats::read_manifest(manifest)?;
    let mut seen = BTreeSet::new();
    entries
        .into_iter()
        .map(|(wav, lab)| {
            let name = score_name(&wav);
            if !seen.insert(name.clone()) {
                return Err(CliError::Data(format!(
                    "two clips in {} map to score file {name}",
                    manifest.display()
                )));
            }
            Ok((wav, lab, dir.join(name)))
        })
        .collect()
}

/// `cmd_score`: one `frame<TAB>score` dump per clip.
pub fn score(cfg: &Config) -> Result<Vec<PathBuf>> {
    let model = load_model(cfg)?;
    if let Some(wav) = cfg.path("wav") {
        let out = cfg
            .path("out")
            .ok_or_else(|| CliError::Config("missing key out".into()))?;
        let track = score_waveform(&model, &wav)?;
        formats::write_text(&out, &formats::format_scores(&track))?;
        return Ok(vec![out]);
    }
    let manifest = cfg
        .existing_path("manifest")
        .map_err(|_| CliError::Config("score needs wav or manifest".into()))?;
    let dir = cfg
        .path("out_dir")
        .ok_or_else(|| CliError::Config("missing key out_dir".into()))?;
    create_dir(&dir)?;
    let mut written = Vec::new();
    for (wav, _, out) in manifest_score_paths(&manifest, &dir)? {
        let track = score_waveform(&model, &wav)?;
        formats::write_text(&out, &formats::format_scores(&track))?;
        log::info!("scored {} ({} frames)", wav.display(), track.len());
        written.push(out);
    }
    Ok(written)
}

fn scored_pairs(cfg: &Config) -> Result<Vec<(ScoreTrack, osd3_core::augment::FrameLabelTrack)>> {
    if let (Some(scores), Some(labels)) = (cfg.path("scores"), cfg.path("labels")) {
        return Ok(vec![(
            formats::read_scores(&scores)?,
            formats::read_labels(&labels)?,
        )]);
    }
    let manifest = cfg.existing_path("manifest")?;
    let dir = cfg.existing_path("scores_dir")?;
    manifest_score_paths(&manifest, &dir)?
        .into_iter()
        .map(|(_, lab, scores)| {
            let track = formats::read_scores(&scores)?;
            let labels = formats::read_labels(&lab)?;
            if track.len() != labels.len() {
                return Err(CliError::Data(format!(
                    "{} has {} scores but {} has {} labels",
                    scores.display(),
                    track.len(),
                    lab.display(),
                    labels.len()
                )));
            }
            Ok((track, labels))
        })
        .collect()
}

/// `cmd_calibrate`: threshold file with `key=value` lines.
pub fn calibrate_cmd(cfg: &Config) -> Result<osd3_core::inference::Calibration> {
    let target: f64 = cfg.get("target_precision", 0.9)?;
    let out = cfg
        .path("out")
        .ok_or_else(|| CliError::Config("missing key out".into()))?;
    let pairs = scored_pairs(cfg)?;
    let c = calibrate(&pairs, target)?;
    if !c.target_met {
        log::warn!(
            "target precision {target} not reachable; best precision {}",
            c.precision
        );
    }
    let text = format!(
        "threshold={}\nprecision={}\nrecall={}\ntarget_precision={target}\ntarget_met={}\n",
        c.threshold, c.precision, c.recall, c.target_met
    );
    formats::write_text(&out, &text)?;
    Ok(c)
}

/// Threshold from `threshold` or the `threshold=` line of `threshold_file`.
pub fn threshold(cfg: &Config) -> Result<f64> {
    if cfg.contains("threshold") {
        return cfg.require("threshold");
    }
    let path = cfg
        .existing_path("threshold_file")
        .map_err(|_| CliError::Config("need threshold or threshold_file".into()))?;
    let text = formats::read_text(&path)?;
    text.lines()
        .find_map(|l| l.trim().strip_prefix("threshold="))
        .ok_or_else(|| CliError::format(&path, "no threshold line"))?
        .trim()
        .parse()
        .map_err(|_| CliError::format(&path, "threshold is not a number"))
}

/// `cmd_segment`: OSD segments from a score dump.
pub fn segment(cfg: &Config) -> Result<Vec<osd3_core::inference::TimedSegment>> {
    let scores = formats::read_scores(&cfg.existing_path("scores")?)?;
    let thr = threshold(cfg)?;
    let min: f64 = cfg.get("min_duration_s", 0.0)?;
    let out = cfg
        .path("out")
        .ok_or_else(|| CliError::Config("missing key out".into()))?;
    let segs = scores_to_segments(&scores, thr, min);
    formats::write_text(&out, &formats::format_segments(&segs))?;
    Ok(segs)
}

/// `cmd_split`: SAD segments cut into single-speaker and overlap pieces.
pub fn split(cfg: &Config) -> Result<usize> {
    let sad = formats::read_sad(&cfg.existing_path("sad")?)?;
    let osd = formats::read_segments(&cfg.existing_path("osd")?)?;
    let out = cfg
        .path("out")
        .ok_or_else(|| CliError::Config("missing key out".into()))?;
    let pieces: Vec<_> = split_all(&sad, &osd)
        .into_iter()
        .map(|p| (p.segment, p.is_overlap))
        .collect();
    formats::write_text(&out, &formats::format_pieces(&pieces))?;
    Ok(pieces.len())
}

/// `cmd_assign`: hypothesis RTTM with second speakers on overlap pieces.
pub fn assign(cfg: &Config) -> Result<usize> {
    let pieces = formats::read_pieces(&cfg.existing_path("pieces")?)?;
    let ranking = formats::read_ranking(&cfg.existing_path("ranking")?)?;
    let file_id: String = cfg.get("file_id", "file".to_string())?;
    let channel: u32 = cfg.get("channel", 1)?;
    let out = cfg
        .path("out")
        .ok_or_else(|| CliError::Config("missing key out".into()))?;
    let a = assign_second_speaker(&pieces, &ranking, &file_id, channel)?;
    if a.warnings > 0 {
        log::warn!(
            "{} overlap pieces had a single ranked speaker and stay single",
            a.warnings
        );
    }
    formats::write_rttm(&out, &a.records)?;
    Ok(a.records.len())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

fn osd_report(pr: &PrecisionRecall, thr: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "metric     value");
    let _ = writeln!(s, "precision  {}", fmt_opt(pr.precision));
    let _ = writeln!(s, "recall     {}", fmt_opt(pr.recall));
    let _ = writeln!(s);
    let _ = writeln!(s, "threshold={thr}");
    let _ = writeln!(s, "precision={}", fmt_opt(pr.precision));
    let _ = writeln!(s, "recall={}", fmt_opt(pr.recall));
    let _ = writeln!(s, "true_positives={}", pr.true_positives);
    let _ = writeln!(s, "false_positives={}", pr.false_positives);
    let _ = writeln!(s, "false_negatives={}", pr.false_negatives);
    s
}

fn der_report(d: &osd3_core::scoring::DerBreakdown, collar: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "metric       value");
    for (k, v) in [
        ("der", d.der),
        ("false_alarm", d.false_alarm),
        ("miss", d.miss),
        ("confusion", d.confusion),
    ] {
        let _ = writeln!(s, "{k:<12} {v:.6}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "collar={collar}");
    let _ = writeln!(s, "total_ref_speech={}", d.total_ref_speech);
    for (k, v) in [
        ("der", d.der),
        ("false_alarm", d.false_alarm),
        ("miss", d.miss),
        ("confusion", d.confusion),
    ] {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

/// `cmd_eval`: metrics report, to `out` when given and standard output otherwise.
pub fn eval(cfg: &Config) -> Result<String> {
    let mode = cfg.get_str("mode").unwrap_or("der");
    let report = match mode {
        "der" => {
            let reference = formats::read_rttm(&cfg.existing_path("ref")?)?;
            let hypothesis = formats::read_rttm(&cfg.existing_path("hyp")?)?;
            let collar: f64 = cfg.get("collar", 0.0)?;
            der_report(&compute_der(&reference, &hypothesis, collar)?, collar)
        }
        "osd" => {
            let thr = threshold(cfg)?;
            let mut total = PrecisionRecall {
                precision: None,
                recall: None,
                true_positives: 0,
                false_positives: 0,
                false_negatives: 0,
            };
            for (track, labels) in scored_pairs(cfg)? {
                let pr = frame_precision_recall(&track, &labels, thr)?;
                total.true_positives += pr.true_positives;
                total.false_positives += pr.false_positives;
                total.false_negatives += pr.false_negatives;
            }
            let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
            total.precision = ratio(
                total.true_positives,
                total.true_positives + total.false_positives,
            );
            total.recall = ratio(
                total.true_positives,
                total.true_positives + total.false_negatives,
            );
            osd_report(&total, thr)
        }
        other => {
            return Err(CliError::Config(format!(
                "mode must be osd or der, not {other:?}"
            )))
        }
    };
    match cfg.path("out") {
        Some(out) => formats::write_text(&out, &report)?,
        None => print!("{report}"),
    }
    Ok(report)
}
