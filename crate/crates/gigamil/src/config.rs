//! Run configuration.
//!
//! The file is JSON; every field is optional and missing ones take the
//! desk-scale defaults. Relative paths resolve against the directory holding
//! the config file.
//!
//! ```json
//! {
//!   "seed": 0,
//!   "paths": {"data": "data", "tiles": "tiles", "checkpoints": "checkpoints", "outputs": "outputs"},
//!   "dataset": {"cases": 90, "eval_cases": 30, "slide_px": 4096, "native_mpp": 0.5, "volume_extents": [31, 48, 48]},
//!   "magnifications": [0.5, 1.0, 2.0, 4.0],
//!   "validation_fraction": 0.2,
//!   "wsi": {"latent": 64, "hidden": 8, "dropout": 0.5, "learning_rate": 5e-5, "epochs": 10,
//!           "slides_per_step": 4, "tiles_per_slide": 8, "validation_tiles": 16, "validation_repeats": 1,
//!           "weighting": "inverse_frequency"},
//!   "mri": {"out_channels": 8, "kernel": 7, "stride": 2, "padding": 3, "volume": 32,
//!           "learning_rate": 5e-4, "epochs": 10, "batch_size": 3, "augment": true,
//!           "weighting": "inverse_frequency"},
//!   "ensemble": {"prune_count": 2, "wsi_weight": 1.0, "mri_weight": 1.0},
//!   "inference": {"tiles": 32, "repeats": 3},
//!   "jobs": null
//! }
//! ```

use std::path::{Path, PathBuf};

use gigamil_core::milnet::{ClassWeighting, InferConfig, MilArch, TrainConfig};
use gigamil_core::mrivol::{MriArch, MriTrainConfig, MODALITIES};
use gigamil_core::slidepyr::{CROP_PX, MPP_LADDER};
use gigamil_core::NUM_CLASSES;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "GIGAMIL_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub tiles: PathBuf,
    pub checkpoints: PathBuf,
    pub outputs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "data".into(),
            tiles: "tiles".into(),
            checkpoints: "checkpoints".into(),
            outputs: "outputs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub cases: usize,
    pub eval_cases: usize,
    /// Side of the square synthetic slides at native resolution.
    pub slide_px: usize,
    pub native_mpp: f64,
    /// Native `[D, H, W]` grid of the synthetic volumes before preprocessing.
    pub volume_extents: [usize; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            cases: 90,
            eval_cases: 30,
            slide_px: 4096,
            native_mpp: 0.5,
            volume_extents: [31, 48, 48],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    InverseFrequency,
    Uniform,
}

impl From<Weighting> for ClassWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::InverseFrequency => ClassWeighting::InverseFrequency,
            Weighting::Uniform => ClassWeighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WsiConfig {
    pub latent: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub slides_per_step: usize,
    pub tiles_per_slide: usize,
    pub validation_tiles: usize,
    pub validation_repeats: usize,
    pub weighting: Weighting,
}

impl Default for WsiConfig {
    fn default() -> Self {
        WsiConfig {
            latent: 64,
            hidden: 8,
            dropout: 0.5,
            learning_rate: 5e-5,
            epochs: 10,
            slides_per_step: 4,
            tiles_per_slide: 8,
            validation_tiles: 16,
            validation_repeats: 1,
            weighting: Weighting::InverseFrequency,
        }
    }
}

impl WsiConfig {
    pub fn arch(&self) -> MilArch {
        MilArch {
            input_len: CROP_PX * CROP_PX * 3,
            hidden: self.hidden,
            latent: self.latent,
            classes: NUM_CLASSES,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self, seed: u64, mpp: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            slides_per_step: self.slides_per_step,
            tiles_per_slide: self.tiles_per_slide,
            seed,
            mpp,
            weighting: self.weighting.into(),
            crop: CROP_PX,
            validation: InferConfig {
                tiles: self.validation_tiles,
                repeats: self.validation_repeats,
                crop: CROP_PX,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MriConfig {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Cubic side after preprocessing.
    pub volume: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: bool,
    pub weighting: Weighting,
}

impl Default for MriConfig {
    fn default() -> Self {
        MriConfig {
            out_channels: 8,
            kernel: 7,
            stride: 2,
            padding: 3,
            volume: 32,
            learning_rate: 5e-4,
            epochs: 10,
            batch_size: 3,
            augment: true,
            weighting: Weighting::InverseFrequency,
        }
    }
}

impl MriConfig {
    pub fn arch(&self) -> MriArch {
        MriArch {
            in_channels: MODALITIES,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            classes: NUM_CLASSES,
        }
    }

    pub fn train_config(&self, seed: u64) -> MriTrainConfig {
        MriTrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            weighting: self.weighting.into(),
            augment: self.augment,
        }
    }

    pub fn target(&self) -> [usize; 3] {
        [self.volume; 3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub prune_count: usize,
    /// Soft-vote weight of every slide member; equal weights give the plain mean.
    pub wsi_weight: f64,
    pub mri_weight: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            prune_count: gigamil_core::ensemble::DEFAULT_PRUNE_COUNT,
            wsi_weight: 1.0,
            mri_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub tiles: usize,
    pub repeats: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig { tiles: 32, repeats: 3 }
    }
}

impl InferenceConfig {
    pub fn infer_config(&self) -> InferConfig {
        InferConfig {
            tiles: self.tiles,
            repeats: self.repeats,
            crop: CROP_PX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub dataset: DatasetConfig,
    pub magnifications: Vec<f64>,
    pub validation_fraction: f64,
    pub wsi: WsiConfig,
    pub mri: MriConfig,
    pub ensemble: EnsembleConfig,
    pub inference: InferenceConfig,
    /// Worker threads; `null` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            dataset: DatasetConfig::default(),
            magnifications: vec![0.5, 1.0, 2.0, 4.0],
            validation_fraction: 0.2,
            wsi: WsiConfig::default(),
            mri: MriConfig::default(),
            ensemble: EnsembleConfig::default(),
            inference: InferenceConfig::default(),
            jobs: None,
        }
    }
}

impl RunConfig {
    /// Desk-scale defaults.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Reference-scale model and schedule sizes; the synthetic dataset keeps its desk size.
    pub fn reference() -> Self {
        let mut c = Self::default();
        c.wsi.latent = 1280;
        c.wsi.hidden = 256;
        c.wsi.epochs = 50;
        c.wsi.tiles_per_slide = 50;
        c.wsi.validation_tiles = 200;
        c.mri.out_channels = 64;
        c.mri.volume = 128;
        c.mri.epochs = 200;
        c.inference = InferenceConfig { tiles: 200, repeats: 9 };
        c
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve_against(base);
        Ok(cfg)
    }

    /// Applies `GIGAMIL_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CliError::Config(m));
        if self.magnifications.is_empty() {
            return err("at least one magnification is required".into());
        }
        for (i, &m) in self.magnifications.iter().enumerate() {
            if !MPP_LADDER.contains(&m) {
                return err(format!("magnification {m} mpp is not one of {MPP_LADDER:?}"));
            }
            if self.magnifications[..i].contains(&m) {
                return err(format!("magnification {m} mpp listed twice"));
            }
            if m < self.dataset.native_mpp {
                return err(format!("magnification {m} mpp is finer than the native {}", self.dataset.native_mpp));
            }
        }
        let p = &self.paths;
        let all = [&p.data, &p.tiles, &p.checkpoints, &p.outputs];
        for i in 0..all.len() {
            for j in 0..i {
                if all[i] == all[j] {
                    return err(format!("paths must be distinct, {} is used twice", all[i].display()));
                }
            }
        }
        let d = &self.dataset;
        if d.cases < 2 * NUM_CLASSES || d.eval_cases == 0 || d.eval_cases >= d.cases {
            return err(format!(
                "dataset needs at least {} cases and 0 < eval_cases < cases (got {} / {})",
                2 * NUM_CLASSES,
                d.eval_cases,
                d.cases
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return err(format!("validation_fraction {} outside (0, 1)", self.validation_fraction));
        }
        if !(self.ensemble.wsi_weight > 0.0 && self.ensemble.mri_weight > 0.0) {
            return err("ensemble weights must be positive".into());
        }
        if self.inference.tiles == 0 || self.inference.repeats == 0 {
            return err("inference tiles and repeats must be positive".into());
        }
        if self.wsi.latent == 0 || self.wsi.hidden == 0 || self.mri.volume < 2 {
            return err("model sizes must be positive and volumes at least 2 voxels wide".into());
        }
        if self.jobs == Some(0) {
            return err("jobs must be positive".into());
        }
        self.wsi.train_config(0, 1.0).validate()?;
        self.mri.train_config(0).validate()?;
        Ok(())
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [&mut self.data, &mut self.tiles, &mut self.checkpoints, &mut self.outputs] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// All paths re-rooted under `root` when relative.
    pub fn rooted(mut self, root: &Path) -> Self {
        self.resolve_against(root);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for c in [RunConfig::desk(), RunConfig::reference()] {
            c.validate().unwrap();
            let text = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        }
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "wsi": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.wsi.epochs, 3);
        assert_eq!(c.wsi.latent, 64);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn rejects_bad_magnification_and_shared_paths() {
        let mut c = RunConfig::desk();
        c.magnifications = vec![0.5, 3.0];
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.paths.tiles = c.paths.data.clone();
        assert!(c.validate().is_err());
    }
}
