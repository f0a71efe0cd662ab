//! Numeric core for multimodal tumor classification from whole slide images
//! and 4-modality MRI volumes.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! pipeline: a small reverse-mode autodiff kernel, slide pyramids and tiling,
//! the bag-of-tiles classifier with max/mean pooling, volumetric preprocessing
//! and classification, ensembling and the challenge metrics. All IO lives in
//! the `gigamil` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ensemble;
pub mod error;
pub mod evalm;
pub mod label;
pub mod milnet;
pub mod mrivol;
pub mod numkern;
pub mod seed;
pub mod slidepyr;
pub mod split;

pub use error::{Error, Result};
pub use label::{ClassLabel, NUM_CLASSES};
