use std::collections::BTreeMap;
use std::fs;

use gigamil_core::slidepyr::{build_pyramid, ChannelAccumulator, ChannelStats, TILE_PX};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{self, ManifestRow, SplitFile, StatsFile};
use crate::layout::Layout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideCounts {
    pub case_id: String,
    /// Foreground tiles per magnification, keyed by the mpp as written in the tile store.
    pub foreground: BTreeMap<String, usize>,
    pub total: BTreeMap<String, usize>,
}

/// Slides whose foreground count at one magnification falls in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: usize,
    pub hi: usize,
    pub slides: usize,
    pub tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSummary {
    pub slides: Vec<SlideCounts>,
    pub histogram: BTreeMap<String, Vec<HistogramBin>>,
    /// `(case, mpp)` pairs without any foreground tile.
    pub flagged: Vec<(String, String)>,
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileReport {
    pub summary: TileSummary,
    pub stats: ChannelStats,
}

const HISTOGRAM_BINS: usize = 10;

pub fn histogram(counts: &[usize]) -> Vec<HistogramBin> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let width = (max + 1).div_ceil(HISTOGRAM_BINS).max(1);
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|k| HistogramBin {
            lo: k * width,
            hi: (k + 1) * width,
            slides: 0,
            tiles: 0,
        })
        .collect();
    for &c in counts {
        let b = &mut bins[(c / width).min(HISTOGRAM_BINS - 1)];
        b.slides += 1;
        b.tiles += c;
    }
    bins
}

struct CaseTiles {
    counts: SlideCounts,
    acc: Option<ChannelAccumulator>,
}

fn tile_case(cfg: &RunConfig, layout: &Layout, case: &str, train: bool) -> Result<CaseTiles> {
    let (image, side) = formats::read_slide(&layout.slide(case))?;
    let pyramid = build_pyramid(case, image, side.label)?;
    let mut counts = SlideCounts {
        case_id: case.to_string(),
        foreground: BTreeMap::new(),
        total: BTreeMap::new(),
    };
    let mut acc = train.then(ChannelAccumulator::new);
    for &mpp in &cfg.magnifications {
        let tiles = pyramid.tiles(mpp, TILE_PX)?;
        let dir = layout.tile_dir(case, mpp);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let mut manifest = Vec::with_capacity(tiles.len());
        for t in &tiles {
            manifest.push(ManifestRow {
                row: t.grid_row,
                col: t.grid_col,
                is_background: t.is_background,
            });
            if t.is_background {
                continue;
            }
            formats::write_ppm(&dir.join(formats::tile_file_name(t.grid_row, t.grid_col)), t.size, t.size, &t.pixels)?;
            if let Some(a) = acc.as_mut() {
                a.add_pixels(&t.pixels);
            }
        }
        formats::write_jsonl(&layout.tile_manifest(case, mpp), &manifest)?;
        let fg = manifest.iter().filter(|r| !r.is_background).count();
        counts.foreground.insert(format!("{mpp}"), fg);
        counts.total.insert(format!("{mpp}"), manifest.len());
    }
    Ok(CaseTiles { counts, acc })
}

/// Builds pyramids, writes foreground tiles and manifests for every case, and
/// computes channel statistics over the training split's foreground tiles.
/// A slide that fails to load is reported and skipped.
pub fn tile(cfg: &RunConfig) -> Result<TileReport> {
    let layout = Layout::new(cfg.paths.clone());
    let split: SplitFile = formats::read_json(&layout.split())?;
    let mut cases: Vec<(String, bool)> = split
        .train
        .iter()
        .map(|c| (c.clone(), true))
        .chain(split.eval.iter().map(|c| (c.clone(), false)))
        .collect();
    cases.sort();

    let results: Vec<(String, Result<CaseTiles>)> = cases
        .par_iter()
        .map(|(case, train)| (case.clone(), tile_case(cfg, &layout, case, *train)))
        .collect();

    let mut acc = ChannelAccumulator::new();
    let mut slides = Vec::new();
    let mut failures = Vec::new();
    for (case, r) in results {
        match r {
            Ok(t) => {
                if let Some(a) = &t.acc {
                    acc.merge(a);
                }
                slides.push(t.counts);
            }
            Err(e) => {
                log::error!("{case}: {e}");
                failures.push((case, e.to_string()));
            }
        }
    }
    let stats = acc.finish()?;
    formats::write_json(&layout.stats(), &StatsFile::from(stats))?;

    let mut histogram_map = BTreeMap::new();
    let mut flagged = Vec::new();
    for &mpp in &cfg.magnifications {
        let key = format!("{mpp}");
        let counts: Vec<usize> = slides.iter().map(|s| s.foreground[&key]).collect();
        for s in &slides {
            if s.foreground[&key] == 0 {
                flagged.push((s.case_id.clone(), key.clone()));
            }
        }
        histogram_map.insert(key, histogram(&counts));
    }
    let summary = TileSummary {
        slides,
        histogram: histogram_map,
        flagged,
        failures,
    };
    formats::write_json(&layout.tile_summary(), &summary)?;
    Ok(TileReport { summary, stats })
}

/// Loads the foreground tiles of one slide at one magnification.
pub fn load_slide_tiles(layout: &Layout, case: &str, mpp: f64) -> Result<gigamil_core::slidepyr::SlideTiles> {
    let manifest: Vec<ManifestRow> = formats::read_jsonl(&layout.tile_manifest(case, mpp))?;
    let dir = layout.tile_dir(case, mpp);
    let mut tiles = Vec::new();
    for r in manifest.iter().filter(|r| !r.is_background) {
        let path = dir.join(formats::tile_file_name(r.row, r.col));
        let (w, h, pixels) = formats::read_ppm(&path)?;
        if w != TILE_PX || h != TILE_PX {
            return Err(CliError::format(&path, format!("tile is {w}x{h}, expected {TILE_PX}x{TILE_PX}")));
        }
        tiles.push(gigamil_core::slidepyr::TileRecord {
            slide_id: case.to_string(),
            mpp,
            grid_row: r.row,
            grid_col: r.col,
            size: TILE_PX,
            pixels,
            is_background: false,
        });
    }
    Ok(gigamil_core::slidepyr::SlideTiles::from_tiles(case, mpp, tiles))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_totals_match_counts() {
        let counts = [0, 3, 34, 34, 12, 7];
        let bins = histogram(&counts);
        assert_eq!(bins.iter().map(|b| b.slides).sum::<usize>(), counts.len());
        assert_eq!(bins.iter().map(|b| b.tiles).sum::<usize>(), counts.iter().sum::<usize>());
        assert_eq!(bins[0].slides, 2);
        assert_eq!(bins.iter().find(|b| b.lo <= 34 && 34 < b.hi).unwrap().slides, 2);
    }
}
