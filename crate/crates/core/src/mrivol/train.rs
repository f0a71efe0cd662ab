use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::augment::augment_volume;
use super::classifier::MriClassifier;
use super::volume::Volume4D;
use crate::ensemble::Modality;
use crate::error::{Error, Result};
use crate::evalm;
use crate::label::{argmax, ClassLabel};
use crate::milnet::{ClassWeighting, EpochOutcome, EpochRecord, Snapshot};
use crate::numkern::{softmax, Adam, AdamConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct MriTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weighting: ClassWeighting,
    /// Random zoom and rotation on training volumes.
    pub augment: bool,
}

impl Default for MriTrainConfig {
    fn default() -> Self {
        MriTrainConfig {
            learning_rate: 5e-4,
            epochs: 200,
            batch_size: 3,
            seed: 0,
            weighting: ClassWeighting::InverseFrequency,
            augment: true,
        }
    }
}

impl MriTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "learning rate must be non-negative; epochs and batch size positive".into(),
            ));
        }
        Ok(())
    }
}

/// A preprocessed volume with its case label.
#[derive(Debug, Clone, Copy)]
pub struct LabeledVolume<'a> {
    pub volume: &'a Volume4D,
    pub label: ClassLabel,
}

/// Resumable trainer for [`MriClassifier`]; random streams are keyed by epoch
/// and step exactly as for the slide models.
#[derive(Debug, Clone)]
pub struct MriTrainer {
    model: MriClassifier,
    adam: Adam,
    cfg: MriTrainConfig,
    weights: Vec<f64>,
    epochs_done: usize,
}

impl MriTrainer {
    pub fn new(model: MriClassifier, cfg: MriTrainConfig, train_labels: &[ClassLabel]) -> Result<Self> {
        let adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), &model.param_sizes());
        Self::resume(model, cfg, train_labels, adam, 0)
    }

    pub fn resume(
        model: MriClassifier,
        cfg: MriTrainConfig,
        train_labels: &[ClassLabel],
        adam: Adam,
        epochs_done: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let weights = cfg.weighting.weights(train_labels)?;
        Ok(MriTrainer {
            model,
            adam,
            cfg,
            weights,
            epochs_done,
        })
    }

    pub fn model(&self) -> &MriClassifier {
        &self.model
    }

    pub fn into_model(self) -> MriClassifier {
        self.model
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn snapshot(&self, val_balanced_accuracy: f64) -> Snapshot {
        Snapshot {
            epoch: self.epochs_done,
            params: self.model.param_vector(),
            val_balanced_accuracy,
            modality: Modality::Mri,
            mpp: None,
        }
    }

    fn step(&mut self, batch: &[LabeledVolume<'_>], epoch: usize, step: usize) -> Result<f64> {
        let mut rng = seed::rng(self.cfg.seed, &[seed::tag::STEP, epoch as u64, step as u64]);
        let mut owned = Vec::new();
        if self.cfg.augment {
            for v in batch {
                owned.push(augment_volume(v.volume, &mut rng)?);
            }
        }
        let vols: Vec<&Volume4D> = if self.cfg.augment {
            owned.iter().collect()
        } else {
            batch.iter().map(|v| v.volume).collect()
        };
        let labels: Vec<usize> = batch.iter().map(|v| v.label.index()).collect();
        let step_index = self.adam.steps_taken() as usize + 1;
        let (loss, grads) = self.model.loss_and_grad(&vols, &labels, &self.weights)?;
        if !loss.is_finite() {
            return Err(Error::Training { step: step_index });
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let mut params: Vec<&mut [f64]> = self.model.params_mut().into_iter().map(|t| t.data_mut()).collect();
        self.adam.step(&mut params, &grad_refs)?;
        Ok(loss)
    }

    pub fn validate_on(&self, val: &[LabeledVolume<'_>]) -> Result<f64> {
        let mut truth = Vec::with_capacity(val.len());
        let mut pred = Vec::with_capacity(val.len());
        for v in val {
            let p = softmax(&self.model.logits(v.volume)?);
            truth.push(v.label);
            pred.push(ClassLabel::from_index(argmax(p.data())).expect("classifier has three classes"));
        }
        let m = evalm::confusion(&truth, &pred)?;
        evalm::balanced_accuracy(&m)
    }

    pub fn run_epoch(&mut self, train: &[LabeledVolume<'_>], val: &[LabeledVolume<'_>]) -> Result<EpochOutcome> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let epoch = self.epochs_done + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(self.cfg.seed, &[seed::tag::EPOCH, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<LabeledVolume<'_>> = chunk.iter().map(|&i| train[i]).collect();
            loss_sum += self.step(&batch, epoch, step)?;
            steps += 1;
        }
        let val_ba = self.validate_on(val)?;
        self.epochs_done = epoch;
        Ok(EpochOutcome {
            record: EpochRecord {
                epoch,
                train_loss: loss_sum / steps as f64,
                val_balanced_accuracy: val_ba,
            },
            skipped: Vec::new(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct MriTrainOutcome {
    pub model: MriClassifier,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<EpochRecord>,
}

pub fn train_mri(
    model: MriClassifier,
    train: &[LabeledVolume<'_>],
    val: &[LabeledVolume<'_>],
    cfg: &MriTrainConfig,
) -> Result<MriTrainOutcome> {
    let labels: Vec<ClassLabel> = train.iter().map(|v| v.label).collect();
    let mut trainer = MriTrainer::new(model, cfg.clone(), &labels)?;
    let mut snapshots = Vec::with_capacity(cfg.epochs);
    let mut log = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let out = trainer.run_epoch(train, val)?;
        snapshots.push(trainer.snapshot(out.record.val_balanced_accuracy));
        log.push(out.record);
    }
    Ok(MriTrainOutcome {
        model: trainer.into_model(),
        snapshots,
        log,
    })
}
