use std::path::{Path, PathBuf};

use gigamil_core::ensemble::snapshot_epochs;
use gigamil_core::milnet::{EpochRecord, LabeledSlide, MilModel, MilTrainer, Snapshot};
use gigamil_core::mrivol::{preprocess, LabeledVolume, MriClassifier, MriTrainer, Volume4D};
use gigamil_core::numkern::{Adam, AdamConfig};
use gigamil_core::seed::{self, tag};
use gigamil_core::slidepyr::{ChannelStats, SlideTiles};
use gigamil_core::split::stratified_split;
use gigamil_core::ClassLabel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{self, CheckpointMeta, EnsembleManifest, ManifestMember, ResumeState, SplitFile, StatsFile};
use crate::layout::{Layout, ModelKey};

use super::tile::load_slide_tiles;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LogRow {
    epoch: usize,
    train_loss: f64,
    val_balanced_accuracy: f64,
}

impl From<EpochRecord> for LogRow {
    fn from(r: EpochRecord) -> Self {
        LogRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            val_balanced_accuracy: r.val_balanced_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub key: ModelKey,
    pub epochs_done: usize,
    pub complete: bool,
    /// `(last, earlier)` snapshot epochs.
    pub snapshots: (usize, usize),
    pub degenerate: bool,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub models: Vec<ModelReport>,
    /// Written once every configured model has finished.
    pub manifest: Option<PathBuf>,
}

/// Every model the configuration asks for, slide models by ascending mpp first.
pub fn configured_models(cfg: &RunConfig) -> Vec<ModelKey> {
    let mut mpps = cfg.magnifications.clone();
    mpps.sort_by(f64::total_cmp);
    mpps.into_iter().map(ModelKey::Wsi).chain([ModelKey::Mri]).collect()
}

pub fn model_seed(cfg: &RunConfig, key: ModelKey) -> u64 {
    seed::derive(cfg.seed, &[seed::hash_id(&key.name())])
}

/// Training cases with their labels, split into fitting and local validation
/// sets by the same stratified rule for every model.
struct TrainCases {
    fit: Vec<(String, ClassLabel)>,
    val: Vec<(String, ClassLabel)>,
}

fn train_cases(cfg: &RunConfig, layout: &Layout) -> Result<TrainCases> {
    let split: SplitFile = formats::read_json(&layout.split())?;
    let mut rows = Vec::with_capacity(split.train.len());
    for case in &split.train {
        let path = formats::sidecar_path(&layout.slide(case));
        let side: formats::SlideSidecar = formats::read_json(&path)?;
        let label = side
            .label
            .ok_or_else(|| CliError::format(&path, "training slide has no label"))?;
        rows.push((case.clone(), label));
    }
    let labels: Vec<ClassLabel> = rows.iter().map(|r| r.1).collect();
    let (fit, val) = stratified_split(&labels, cfg.validation_fraction, seed::derive(cfg.seed, &[tag::SPLIT, 1]));
    Ok(TrainCases {
        fit: fit.iter().map(|&i| rows[i].clone()).collect(),
        val: val.iter().map(|&i| rows[i].clone()).collect(),
    })
}

fn read_log(path: &Path, keep: usize) -> Result<Vec<LogRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rows: Vec<LogRow> = formats::read_jsonl(path)?;
    rows.retain(|r| r.epoch <= keep);
    Ok(rows)
}

fn load_resume(path: &Path, adam_cfg: AdamConfig, param_count: usize, epochs: usize) -> Result<Option<ResumeState>> {
    if !path.exists() {
        return Ok(None);
    }
    let state = formats::decode_resume(path, &formats::read_bytes(path)?, adam_cfg)?;
    if state.params.len() != param_count {
        return Err(CliError::Config(format!(
            "{} was written for a different architecture; remove it to retrain",
            path.display()
        )));
    }
    if state.epochs_done > epochs {
        return Err(CliError::Config(format!(
            "{} is at epoch {} but the configuration asks for {epochs}",
            path.display(),
            state.epochs_done
        )));
    }
    Ok(Some(state))
}

fn save_checkpoint(layout: &Layout, key: ModelKey, snap: &Snapshot, bytes: &[u8]) -> Result<()> {
    let path = layout.checkpoint(key, snap.epoch);
    formats::write_atomic(&path, bytes)?;
    formats::write_json(
        &formats::sidecar_path(&path),
        &CheckpointMeta {
            epoch: snap.epoch,
            val_balanced_accuracy: snap.val_balanced_accuracy,
            mpp: snap.mpp,
            modality: snap.modality.as_str().into(),
        },
    )
}

/// Per-epoch bookkeeping shared by both modalities: log, selected
/// checkpoints and resume state.
struct EpochSink<'a> {
    layout: &'a Layout,
    key: ModelKey,
    log: Vec<LogRow>,
    keep: [usize; 2],
}

impl EpochSink<'_> {
    fn record(&mut self, rec: EpochRecord, snap: &Snapshot, model_bytes: &[u8], state: &ResumeState) -> Result<()> {
        self.log.push(rec.into());
        formats::write_jsonl(&self.layout.training_log(self.key), &self.log)?;
        if self.keep.contains(&rec.epoch) {
            save_checkpoint(self.layout, self.key, snap, model_bytes)?;
        }
        formats::write_atomic(&self.layout.resume_state(self.key), &formats::encode_resume(state))?;
        log::info!(
            "{} epoch {}: loss {:.4}, val balanced accuracy {:.4}",
            self.key.name(),
            rec.epoch,
            rec.train_loss,
            rec.val_balanced_accuracy
        );
        Ok(())
    }
}

fn train_wsi(cfg: &RunConfig, layout: &Layout, cases: &TrainCases, mpp: f64, stop_after: Option<usize>) -> Result<ModelReport> {
    let key = ModelKey::Wsi(mpp);
    let seed_value = model_seed(cfg, key);
    let tcfg = cfg.wsi.train_config(seed_value, mpp);
    let arch = cfg.wsi.arch();
    let adam_cfg = AdamConfig::with_lr(tcfg.learning_rate);
    let epochs = tcfg.epochs;
    let pick = snapshot_epochs(epochs);
    let resume = load_resume(&layout.resume_state(key), adam_cfg, arch.param_count(), epochs)?;
    let done = resume.as_ref().map_or(0, |s| s.epochs_done);
    let mut report = ModelReport {
        key,
        epochs_done: done,
        complete: done == epochs,
        snapshots: (pick.last, pick.earlier),
        degenerate: pick.degenerate,
        skipped: Vec::new(),
    };
    if report.complete {
        return Ok(report);
    }

    let stats: ChannelStats = formats::read_json::<StatsFile>(&layout.stats())?.into();
    let load = |rows: &[(String, ClassLabel)]| -> Result<Vec<(SlideTiles, ClassLabel)>> {
        rows.iter()
            .map(|(case, label)| Ok((load_slide_tiles(layout, case, mpp)?, *label)))
            .collect()
    };
    let fit = load(&cases.fit)?;
    let val = load(&cases.val)?;
    let fit_set: Vec<LabeledSlide<'_>> = fit.iter().map(|(t, l)| LabeledSlide { tiles: t, label: *l }).collect();
    let val_set: Vec<LabeledSlide<'_>> = val.iter().map(|(t, l)| LabeledSlide { tiles: t, label: *l }).collect();
    let labels: Vec<ClassLabel> = fit.iter().map(|f| f.1).collect();

    let mut model = MilModel::init(&arch, seed_value)?;
    let adam = match resume {
        Some(state) => {
            model.set_param_vector(&state.params)?;
            state.adam
        }
        None => Adam::new(adam_cfg, &model.param_sizes()),
    };
    let mut trainer = MilTrainer::resume(model, tcfg, &labels, adam, done)?;
    let mut sink = EpochSink {
        layout,
        key,
        log: read_log(&layout.training_log(key), done)?,
        keep: [pick.last, pick.earlier],
    };
    while trainer.epochs_done() < epochs {
        let out = trainer.run_epoch(&fit_set, &val_set, &stats)?;
        for s in &out.skipped {
            log::warn!("{}: slide {s} has no foreground tiles at {mpp} mpp, skipped", key.name());
        }
        report.skipped.extend(out.skipped);
        let snap = trainer.snapshot(out.record.val_balanced_accuracy);
        let state = ResumeState {
            epochs_done: trainer.epochs_done(),
            params: snap.params.clone(),
            adam: trainer.adam().clone(),
        };
        sink.record(out.record, &snap, &formats::encode_milnet(trainer.model()), &state)?;
        report.epochs_done = trainer.epochs_done();
        if stop_after == Some(report.epochs_done) {
            break;
        }
    }
    report.complete = report.epochs_done == epochs;
    report.skipped.sort();
    report.skipped.dedup();
    Ok(report)
}

/// Reads, crops, resizes and scales one case volume.
pub fn load_volume(cfg: &RunConfig, layout: &Layout, case: &str) -> Result<(Volume4D, Option<ClassLabel>)> {
    let (v, side) = formats::read_volume(&layout.volume(case))?;
    Ok((preprocess(&v, cfg.mri.target())?, side.label))
}

fn train_mri(cfg: &RunConfig, layout: &Layout, cases: &TrainCases, stop_after: Option<usize>) -> Result<ModelReport> {
    let key = ModelKey::Mri;
    let seed_value = model_seed(cfg, key);
    let tcfg = cfg.mri.train_config(seed_value);
    let arch = cfg.mri.arch();
    let adam_cfg = AdamConfig::with_lr(tcfg.learning_rate);
    let epochs = tcfg.epochs;
    let pick = snapshot_epochs(epochs);
    let resume = load_resume(&layout.resume_state(key), adam_cfg, arch.param_count(), epochs)?;
    let done = resume.as_ref().map_or(0, |s| s.epochs_done);
    let mut report = ModelReport {
        key,
        epochs_done: done,
        complete: done == epochs,
        snapshots: (pick.last, pick.earlier),
        degenerate: pick.degenerate,
        skipped: Vec::new(),
    };
    if report.complete {
        return Ok(report);
    }

    let load = |rows: &[(String, ClassLabel)]| -> Result<Vec<(Volume4D, ClassLabel)>> {
        rows.iter()
            .map(|(case, label)| Ok((load_volume(cfg, layout, case)?.0, *label)))
            .collect()
    };
    let fit = load(&cases.fit)?;
    let val = load(&cases.val)?;
    let fit_set: Vec<LabeledVolume<'_>> = fit.iter().map(|(v, l)| LabeledVolume { volume: v, label: *l }).collect();
    let val_set: Vec<LabeledVolume<'_>> = val.iter().map(|(v, l)| LabeledVolume { volume: v, label: *l }).collect();
    let labels: Vec<ClassLabel> = fit.iter().map(|f| f.1).collect();

    let mut model = MriClassifier::init(&arch, seed_value)?;
    let adam = match resume {
        Some(state) => {
            model.set_param_vector(&state.params)?;
            state.adam
        }
        None => Adam::new(adam_cfg, &model.param_sizes()),
    };
    let mut trainer = MriTrainer::resume(model, tcfg, &labels, adam, done)?;
    let mut sink = EpochSink {
        layout,
        key,
        log: read_log(&layout.training_log(key), done)?,
        keep: [pick.last, pick.earlier],
    };
    while trainer.epochs_done() < epochs {
        let out = trainer.run_epoch(&fit_set, &val_set)?;
        let snap = trainer.snapshot(out.record.val_balanced_accuracy);
        let state = ResumeState {
            epochs_done: trainer.epochs_done(),
            params: snap.params.clone(),
            adam: trainer.adam().clone(),
        };
        sink.record(out.record, &snap, &formats::encode_mrivol(trainer.model()), &state)?;
        report.epochs_done = trainer.epochs_done();
        if stop_after == Some(report.epochs_done) {
            break;
        }
    }
    report.complete = report.epochs_done == epochs;
    Ok(report)
}

/// Members for every configured model whose selected checkpoints exist, or
/// `None` while any is missing.
pub fn assemble_manifest(cfg: &RunConfig, layout: &Layout) -> Result<Option<EnsembleManifest>> {
    let mut members = Vec::new();
    for key in configured_models(cfg) {
        let epochs = match key {
            ModelKey::Wsi(_) => cfg.wsi.epochs,
            ModelKey::Mri => cfg.mri.epochs,
        };
        let pick = snapshot_epochs(epochs);
        let mut chosen = vec![pick.earlier, pick.last];
        chosen.dedup();
        for epoch in chosen {
            let path = layout.checkpoint(key, epoch);
            let side = formats::sidecar_path(&path);
            if !path.exists() || !side.exists() {
                return Ok(None);
            }
            let meta: CheckpointMeta = formats::read_json(&side)?;
            members.push(ManifestMember {
                checkpoint: layout.checkpoint_rel(key, epoch),
                modality: key.modality().as_str().into(),
                mpp: key.mpp(),
                val_score: meta.val_balanced_accuracy,
            });
        }
    }
    Ok(Some(EnsembleManifest {
        members,
        prune_count: cfg.ensemble.prune_count,
    }))
}

/// Trains `models` (resuming any interrupted run), then writes the ensemble
/// manifest once every configured model is complete.
pub fn train(cfg: &RunConfig, models: &[ModelKey], stop_after: Option<usize>) -> Result<TrainReport> {
    let layout = Layout::new(cfg.paths.clone());
    let cases = train_cases(cfg, &layout)?;
    let reports: Vec<Result<ModelReport>> = models
        .par_iter()
        .map(|&key| match key {
            ModelKey::Wsi(mpp) => train_wsi(cfg, &layout, &cases, mpp, stop_after),
            ModelKey::Mri => train_mri(cfg, &layout, &cases, stop_after),
        })
        .collect();
    let models = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = match assemble_manifest(cfg, &layout)? {
        Some(m) if models.iter().all(|r| r.complete) => {
            let path = layout.ensemble_manifest();
            formats::write_json(&path, &m)?;
            Some(path)
        }
        _ => None,
    };
    Ok(TrainReport { models, manifest })
}
