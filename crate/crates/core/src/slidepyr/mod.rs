//! Slide pyramids, 512 px tiling, the background rule, per-channel
//! statistics, tile augmentation, bag sampling and synthetic slides.

mod augment;
mod bag;
mod pyramid;
mod raster;
mod stats;
pub mod synth;
mod tile;

pub use augment::{augment_tile, augment_with, AugmentParams, CROP_PX, JITTER_MAGNITUDE, HUE_MAGNITUDE};
pub use bag::{sample_bag, sample_bag_cropped, Bag, SlideTiles};
pub use pyramid::{build_pyramid, downsample_box, SlidePyramid, MPP_LADDER};
pub use raster::RasterImage;
pub use stats::{compute_channel_stats, ChannelAccumulator, ChannelStats};
pub use synth::synth_slide;
pub use tile::{
    is_background, is_background_pixels, tile_level, TileRecord, BACKGROUND_FRACTION,
    BACKGROUND_LEVEL, TILE_PX,
};
