//! Where every artifact lives under the configured roots.
//!
//! ```text
//! data/slides/<case>.ppm (+ .json)      data/volumes/<case>.vol (+ .json)
//! data/split.json                       data/eval_labels.jsonl
//! tiles/<case>/<mpp>/r{row}_c{col}.ppm  tiles/<case>/<mpp>/manifest.jsonl
//! tiles/stats.json                      tiles/summary.json
//! checkpoints/<model>/log.jsonl         checkpoints/<model>/resume.state
//! checkpoints/<model>/epoch_NNN.{milnet,mrivol} (+ .json)
//! checkpoints/ensemble.json
//! outputs/predictions.jsonl             outputs/metrics.json
//! ```

use std::path::PathBuf;

use gigamil_core::ensemble::Modality;

use crate::config::Paths;

/// One trained model: a slide model at one magnification, or the MRI model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKey {
    Wsi(f64),
    Mri,
}

impl ModelKey {
    pub fn name(&self) -> String {
        match self {
            ModelKey::Wsi(mpp) => format!("wsi_mpp{mpp}"),
            ModelKey::Mri => "mri".into(),
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            ModelKey::Wsi(_) => Modality::Wsi,
            ModelKey::Mri => Modality::Mri,
        }
    }

    pub fn mpp(&self) -> Option<f64> {
        match self {
            ModelKey::Wsi(m) => Some(*m),
            ModelKey::Mri => None,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            ModelKey::Wsi(_) => "milnet",
            ModelKey::Mri => "mrivol",
        }
    }
}

pub fn case_id(i: usize) -> String {
    format!("case_{i:03}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub paths: Paths,
}

impl Layout {
    pub fn new(paths: Paths) -> Self {
        Layout { paths }
    }

    pub fn slide(&self, case: &str) -> PathBuf {
        self.paths.data.join("slides").join(format!("{case}.ppm"))
    }

    pub fn volume(&self, case: &str) -> PathBuf {
        self.paths.data.join("volumes").join(format!("{case}.vol"))
    }

    pub fn split(&self) -> PathBuf {
        self.paths.data.join("split.json")
    }

    pub fn eval_labels(&self) -> PathBuf {
        self.paths.data.join("eval_labels.jsonl")
    }

    pub fn tile_dir(&self, case: &str, mpp: f64) -> PathBuf {
        self.paths.tiles.join(case).join(format!("{mpp}"))
    }

    pub fn tile_manifest(&self, case: &str, mpp: f64) -> PathBuf {
        self.tile_dir(case, mpp).join("manifest.jsonl")
    }

    pub fn stats(&self) -> PathBuf {
        self.paths.tiles.join("stats.json")
    }

    pub fn tile_summary(&self) -> PathBuf {
        self.paths.tiles.join("summary.json")
    }

    pub fn model_dir(&self, key: ModelKey) -> PathBuf {
        self.paths.checkpoints.join(key.name())
    }

    pub fn training_log(&self, key: ModelKey) -> PathBuf {
        self.model_dir(key).join("log.jsonl")
    }

    pub fn resume_state(&self, key: ModelKey) -> PathBuf {
        self.model_dir(key).join("resume.state")
    }

    /// Checkpoint path relative to the checkpoint root, as recorded in the ensemble manifest.
    pub fn checkpoint_rel(&self, key: ModelKey, epoch: usize) -> String {
        format!("{}/epoch_{epoch:03}.{}", key.name(), key.extension())
    }

    pub fn checkpoint(&self, key: ModelKey, epoch: usize) -> PathBuf {
        self.paths.checkpoints.join(self.checkpoint_rel(key, epoch))
    }

    pub fn ensemble_manifest(&self) -> PathBuf {
        self.paths.checkpoints.join("ensemble.json")
    }

    pub fn predictions(&self) -> PathBuf {
        self.paths.outputs.join("predictions.jsonl")
    }

    pub fn metrics(&self) -> PathBuf {
        self.paths.outputs.join("metrics.json")
    }
}
