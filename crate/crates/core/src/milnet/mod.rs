//! Bag-of-tiles classifier: a shared tile embedder, per-feature max and mean
//! pooling across the bag, and a dropout + linear head.

mod infer;
pub(crate) mod model;
mod train;
mod weights;

pub use infer::{hard_vote, infer_slide, InferConfig, SlidePrediction};
pub use model::{dropout_mask, head_forward, pool_concat, Embedder, MilArch, MilModel, MlpEmbedder};
pub use train::{train, EpochOutcome, EpochRecord, LabeledSlide, MilTrainer, Snapshot, TrainConfig, TrainOutcome};
pub use weights::{class_weights, ClassWeighting};
