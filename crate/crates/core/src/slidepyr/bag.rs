use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::augment::{augment_with, AugmentParams, CROP_PX};
use super::pyramid::SlidePyramid;
use super::stats::ChannelStats;
use super::tile::TileRecord;
use crate::error::{Error, Result};
use crate::numkern::Tensor;

/// Foreground tiles of one slide at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideTiles {
    pub slide_id: String,
    pub mpp: f64,
    pub tiles: Vec<TileRecord>,
}

impl SlideTiles {
    /// Keeps only the non-background tiles.
    pub fn from_tiles(slide_id: &str, mpp: f64, tiles: Vec<TileRecord>) -> Self {
        SlideTiles {
            slide_id: slide_id.into(),
            mpp,
            tiles: tiles.into_iter().filter(|t| !t.is_background).collect(),
        }
    }

    pub fn from_pyramid(pyramid: &SlidePyramid, mpp: f64, tile_px: usize) -> Result<Self> {
        Ok(Self::from_tiles(&pyramid.slide_id, mpp, pyramid.tiles(mpp, tile_px)?))
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

/// `n` preprocessed tiles from one slide, stored as an `[n, crop, crop, 3]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub slide_id: String,
    pub mpp: f64,
    pub tensors: Tensor,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.tensors.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values per tile.
    pub fn tile_len(&self) -> usize {
        self.tensors.numel() / self.len()
    }
}

/// Draws `n` tiles (without replacement when the slide has enough, with
/// replacement otherwise) and augments each one to a 224 px crop.
pub fn sample_bag<R: Rng + ?Sized>(
    slide: &SlideTiles,
    n: usize,
    stats: &ChannelStats,
    rng: &mut R,
    train: bool,
) -> Result<Bag> {
    let crop = slide.tiles.first().map_or(CROP_PX, |t| CROP_PX.min(t.size));
    sample_bag_cropped(slide, n, crop, stats, rng, train)
}

/// [`sample_bag`] with an explicit crop size.
pub fn sample_bag_cropped<R: Rng + ?Sized>(
    slide: &SlideTiles,
    n: usize,
    crop: usize,
    stats: &ChannelStats,
    rng: &mut R,
    train: bool,
) -> Result<Bag> {
    if slide.tiles.is_empty() {
        return Err(Error::SlideSkip {
            slide_id: slide.slide_id.clone(),
            mpp: slide.mpp,
        });
    }
    if n == 0 {
        return Err(Error::Input("bag size must be at least 1".into()));
    }
    let count = slide.tiles.len();
    let picks: Vec<usize> = if n <= count {
        let mut idx: Vec<usize> = (0..count).collect();
        let (chosen, _) = idx.partial_shuffle(rng, n);
        chosen.to_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..count)).collect()
    };
    if slide.tiles.iter().any(|t| t.size < crop) {
        return Err(Error::Input(alloc::format!(
            "crop of {crop} px exceeds tiles of slide {}",
            slide.slide_id
        )));
    }
    let per = crop * crop * 3;
    let mut data = vec![0.0; n * per];
    for (slot, &i) in data.chunks_mut(per).zip(&picks) {
        let tile = &slide.tiles[i];
        let params = if train {
            AugmentParams::sample(rng, tile.size, crop)
        } else {
            AugmentParams::eval(tile.size, crop)
        };
        augment_with(&tile.pixels, tile.size, &params, stats, slot);
    }
    Ok(Bag {
        slide_id: slide.slide_id.clone(),
        mpp: slide.mpp,
        tensors: Tensor::new(vec![n, crop, crop, 3], data)?,
    })
}
