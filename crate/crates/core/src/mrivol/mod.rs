//! Four-modality MRI volumes: foreground cropping, resizing, nonzero standard
//! scaling, spatial augmentation and a single-convolution classifier.

mod augment;
mod classifier;
mod conv;
mod synth;
mod train;
mod volume;

pub use augment::{augment_volume, random_rotate, random_zoom, rotate, rotation_matrix, zoom, MAX_ROTATION_DEG, ZOOM_RANGE};
pub use classifier::{mri_classifier_forward, MriArch, MriClassifier};
pub use conv::{conv3d_forward, Conv3dSpec};
pub use synth::synth_volume;
pub use train::{train_mri, LabeledVolume, MriTrainConfig, MriTrainOutcome, MriTrainer};
pub use volume::{crop_foreground, preprocess, resize_trilinear, standard_scale_nonzero, Volume4D, MODALITIES, MODALITY_NAMES};
