use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::infer::{infer_slide, InferConfig};
use super::model::{dropout_mask, Embedder, MilModel};
use super::weights::ClassWeighting;
use crate::ensemble::{Epoch, Modality};
use crate::error::{Error, Result};
use crate::evalm;
use crate::label::ClassLabel;
use crate::numkern::{Adam, AdamConfig};
use crate::seed;
use crate::slidepyr::{sample_bag_cropped, ChannelStats, SlideTiles, CROP_PX};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub slides_per_step: usize,
    pub tiles_per_slide: usize,
    pub seed: u64,
    pub mpp: f64,
    pub weighting: ClassWeighting,
    pub crop: usize,
    /// Bag sampling used for the per-epoch local validation score.
    pub validation: InferConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            epochs: 50,
            slides_per_step: 4,
            tiles_per_slide: 50,
            seed: 0,
            mpp: 0.5,
            weighting: ClassWeighting::InverseFrequency,
            crop: CROP_PX,
            validation: InferConfig {
                tiles: 200,
                repeats: 1,
                crop: CROP_PX,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || self.epochs == 0 || self.slides_per_step == 0 || self.tiles_per_slide == 0 {
            return Err(Error::Config(
                "learning rate must be non-negative; epochs, slides per step and tiles per slide positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledSlide<'a> {
    pub tiles: &'a SlideTiles,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub record: EpochRecord,
    /// Slides skipped this epoch because they had no foreground tiles.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub params: Vec<f64>,
    pub val_balanced_accuracy: f64,
    pub modality: Modality,
    pub mpp: Option<f64>,
}

impl Epoch for Snapshot {
    fn epoch(&self) -> usize {
        self.epoch
    }
}

/// Resumable epoch-by-epoch optimizer for a [`MilModel`].
///
/// Every random draw of epoch `e` comes from streams derived from
/// `(seed, e)`, so a trainer restored after epoch `k` continues exactly as an
/// uninterrupted run would.
#[derive(Debug, Clone)]
pub struct MilTrainer<E: Embedder> {
    model: MilModel<E>,
    adam: Adam,
    cfg: TrainConfig,
    weights: Vec<f64>,
    epochs_done: usize,
}

impl<E: Embedder> MilTrainer<E> {
    pub fn new(model: MilModel<E>, cfg: TrainConfig, train_labels: &[ClassLabel]) -> Result<Self> {
        let adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), &model.param_sizes());
        Self::resume(model, cfg, train_labels, adam, 0)
    }

    pub fn resume(
        model: MilModel<E>,
        cfg: TrainConfig,
        train_labels: &[ClassLabel],
        adam: Adam,
        epochs_done: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let weights = cfg.weighting.weights(train_labels)?;
        Ok(MilTrainer {
            model,
            adam,
            cfg,
            weights,
            epochs_done,
        })
    }

    pub fn model(&self) -> &MilModel<E> {
        &self.model
    }

    pub fn into_model(self) -> MilModel<E> {
        self.model
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn snapshot(&self, val_balanced_accuracy: f64) -> Snapshot {
        Snapshot {
            epoch: self.epochs_done,
            params: self.model.param_vector(),
            val_balanced_accuracy,
            modality: Modality::Wsi,
            mpp: Some(self.cfg.mpp),
        }
    }

    fn step(
        &mut self,
        slides: &[LabeledSlide<'_>],
        stats: &ChannelStats,
        epoch: usize,
        step: usize,
        skipped: &mut Vec<String>,
    ) -> Result<Option<f64>> {
        let mut rng = seed::rng(self.cfg.seed, &[seed::tag::STEP, epoch as u64, step as u64]);
        let width = 2 * self.model.latent();
        let mut bags = Vec::with_capacity(slides.len());
        let mut labels = Vec::with_capacity(slides.len());
        let mut masks = Vec::with_capacity(slides.len());
        for s in slides {
            let bag = match sample_bag_cropped(s.tiles, self.cfg.tiles_per_slide, self.cfg.crop, stats, &mut rng, true) {
                Ok(bag) => bag,
                Err(Error::SlideSkip { slide_id, .. }) => {
                    skipped.push(slide_id);
                    continue;
                }
                Err(e) => return Err(e),
            };
            bags.push(bag.tensors);
            labels.push(s.label.index());
            masks.push((self.model.dropout > 0.0).then(|| dropout_mask(&mut rng, width, self.model.dropout)));
        }
        if bags.is_empty() {
            return Ok(None);
        }
        let step_index = self.adam.steps_taken() as usize + 1;
        let (loss, grads) = self.model.loss_and_grad(bags, &labels, &self.weights, masks)?;
        if !loss.is_finite() {
            return Err(Error::Training { step: step_index });
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let mut params: Vec<&mut [f64]> = self.model.params_mut().into_iter().map(|t| t.data_mut()).collect();
        self.adam.step(&mut params, &grad_refs)?;
        Ok(Some(loss))
    }

    /// Balanced accuracy of eval-mode slide predictions on `val`.
    pub fn validate_on(&self, val: &[LabeledSlide<'_>], stats: &ChannelStats, epoch: usize, skipped: &mut Vec<String>) -> Result<f64> {
        let mut truth = Vec::with_capacity(val.len());
        let mut pred = Vec::with_capacity(val.len());
        for (i, s) in val.iter().enumerate() {
            let mut rng = seed::rng(self.cfg.seed, &[seed::tag::VALIDATION, epoch as u64, i as u64]);
            match infer_slide(&self.model, s.tiles, &self.cfg.validation, stats, &mut rng) {
                Ok(p) => {
                    truth.push(s.label);
                    pred.push(p.label);
                }
                Err(Error::SlideSkip { slide_id, .. }) => skipped.push(slide_id),
                Err(e) => return Err(e),
            }
        }
        let m = evalm::confusion(&truth, &pred)?;
        evalm::balanced_accuracy(&m)
    }

    /// One pass over a random permutation of `train`, then local validation.
    pub fn run_epoch(&mut self, train: &[LabeledSlide<'_>], val: &[LabeledSlide<'_>], stats: &ChannelStats) -> Result<EpochOutcome> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let epoch = self.epochs_done + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(self.cfg.seed, &[seed::tag::EPOCH, epoch as u64]));
        let mut skipped = Vec::new();
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(self.cfg.slides_per_step).enumerate() {
            let slides: Vec<LabeledSlide<'_>> = chunk.iter().map(|&i| train[i]).collect();
            if let Some(loss) = self.step(&slides, stats, epoch, step, &mut skipped)? {
                loss_sum += loss;
                steps += 1;
            }
        }
        if steps == 0 {
            return Err(Error::Config("no training slide has foreground tiles".into()));
        }
        let val_ba = self.validate_on(val, stats, epoch, &mut skipped)?;
        self.epochs_done = epoch;
        skipped.sort();
        skipped.dedup();
        Ok(EpochOutcome {
            record: EpochRecord {
                epoch,
                train_loss: loss_sum / steps as f64,
                val_balanced_accuracy: val_ba,
            },
            skipped,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<E: Embedder> {
    pub model: MilModel<E>,
    /// One per epoch, in epoch order.
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<EpochRecord>,
    pub skipped: Vec<String>,
}

/// Runs `cfg.epochs` epochs and records a snapshot after each.
pub fn train<E: Embedder>(
    model: MilModel<E>,
    train: &[LabeledSlide<'_>],
    val: &[LabeledSlide<'_>],
    stats: &ChannelStats,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<E>> {
    let labels: Vec<ClassLabel> = train.iter().map(|s| s.label).collect();
    let mut trainer = MilTrainer::new(model, cfg.clone(), &labels)?;
    let mut snapshots = Vec::with_capacity(cfg.epochs);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut skipped = Vec::new();
    for _ in 0..cfg.epochs {
        let out = trainer.run_epoch(train, val, stats)?;
        snapshots.push(trainer.snapshot(out.record.val_balanced_accuracy));
        log.push(out.record);
        skipped.extend(out.skipped);
    }
    skipped.sort();
    skipped.dedup();
    Ok(TrainOutcome {
        model: trainer.into_model(),
        snapshots,
        log,
        skipped,
    })
}
