use gigamil_core::seed;
use gigamil_core::slidepyr::{
    build_pyramid, is_background_pixels, sample_bag_cropped, tile_level, ChannelStats, RasterImage,
    SlideTiles, TileRecord,
};
use proptest::prelude::*;
use rand::Rng;

fn random_image(seed_value: u64, w: usize, h: usize) -> RasterImage {
    let mut rng = seed::rng(seed_value, &[]);
    let pixels = (0..w * h * 3).map(|_| rng.gen()).collect();
    RasterImage::new(w, h, pixels, 0.5).unwrap()
}

fn boundary_tile(bright: usize, total: usize) -> Vec<u8> {
    let mut px = vec![181u8; total * 3];
    for p in px.chunks_exact_mut(3).skip(bright) {
        p.copy_from_slice(&[120, 60, 200]);
    }
    px
}

#[test]
fn background_boundary_at_three_quarters() {
    let total = 512 * 512;
    assert!(is_background_pixels(&boundary_tile(total * 3 / 4, total)));
    assert!(!is_background_pixels(&boundary_tile(total * 3 / 4 - 1, total)));
    assert!(!is_background_pixels(&vec![180u8; total * 3]));
    assert!(is_background_pixels(&vec![181u8; total * 3]));
}

#[test]
fn tiles_at_full_size_partition_the_grid() {
    let img = random_image(1, 1100, 1600);
    let tiles = tile_level("s", 0.5, &img, 512);
    assert_eq!(tiles.len(), 2 * 3);
    assert!(tiles.iter().all(|t| t.pixels.len() == 512 * 512 * 3));
}

fn bag_slide(seed_value: u64, count: usize) -> SlideTiles {
    let mut rng = seed::rng(seed_value, &[]);
    let tiles = (0..count)
        .map(|i| TileRecord {
            slide_id: "case_000".into(),
            mpp: 1.0,
            grid_row: i / 4,
            grid_col: i % 4,
            size: 24,
            pixels: (0..24 * 24 * 3).map(|_| rng.gen_range(0..170)).collect(),
            is_background: false,
        })
        .collect();
    SlideTiles::from_tiles("case_000", 1.0, tiles)
}

const STATS: ChannelStats = ChannelStats { mean: [0.6, 0.4, 0.7], std: [0.2, 0.25, 0.15] };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tiling_is_a_partition(w in 1usize..70, h in 1usize..70, t in 1usize..16, s in any::<u64>()) {
        let img = random_image(s, w, h);
        let tiles = tile_level("s", 0.5, &img, t);
        prop_assert_eq!(tiles.len(), (w / t) * (h / t));
        let mut cover = vec![0u32; w * h];
        for tile in &tiles {
            for dy in 0..t {
                for dx in 0..t {
                    let (x, y) = (tile.grid_col * t + dx, tile.grid_row * t + dy);
                    cover[y * w + x] += 1;
                    let got = &tile.pixels[(dy * t + dx) * 3..(dy * t + dx) * 3 + 3];
                    prop_assert_eq!(got, &img.pixel(x, y)[..]);
                }
            }
        }
        for y in 0..h {
            for x in 0..w {
                let inside = x < (w / t) * t && y < (h / t) * t;
                prop_assert_eq!(cover[y * w + x], inside as u32);
            }
        }
    }

    #[test]
    fn brightening_never_makes_background_foreground(
        base in prop::collection::vec(150u8..=255, 16 * 3),
        lift in prop::collection::vec(0u8..=80, 16 * 3),
    ) {
        let bright: Vec<u8> = base.iter().zip(&lift).map(|(b, l)| b.saturating_add(*l)).collect();
        if is_background_pixels(&base) {
            prop_assert!(is_background_pixels(&bright));
        }
    }

    #[test]
    fn coarser_levels_preserve_mean_intensity(w in 4usize..60, h in 4usize..60, s in any::<u64>()) {
        let pyr = build_pyramid("s", random_image(s, w, h), None).unwrap();
        for pair in pyr.levels.windows(2) {
            let (fine, coarse) = (&pair[0].1, &pair[1].1);
            prop_assert_eq!(coarse.width, fine.width / 2);
            prop_assert_eq!(coarse.height, fine.height / 2);
            prop_assert_eq!(pair[1].0, 2.0 * pair[0].0);
            for c in 0..3 {
                let mut fsum = 0.0;
                for y in 0..2 * coarse.height {
                    for x in 0..2 * coarse.width {
                        fsum += fine.pixel(x, y)[c] as f64;
                    }
                }
                let fmean = fsum / (4 * coarse.width * coarse.height) as f64;
                let cmean = (0..coarse.height)
                    .flat_map(|y| (0..coarse.width).map(move |x| (x, y)))
                    .map(|(x, y)| coarse.pixel(x, y)[c] as f64)
                    .sum::<f64>()
                    / (coarse.width * coarse.height) as f64;
                prop_assert!((fmean - cmean).abs() <= 0.5, "channel {}: {} vs {}", c, fmean, cmean);
            }
        }
    }

    #[test]
    fn bags_are_reproducible(s in any::<u64>(), n in 1usize..20, count in 1usize..12, train in any::<bool>()) {
        let slide = bag_slide(s, count);
        let a = sample_bag_cropped(&slide, n, 16, &STATS, &mut seed::rng(s, &[7]), train).unwrap();
        let b = sample_bag_cropped(&slide, n, 16, &STATS, &mut seed::rng(s, &[7]), train).unwrap();
        prop_assert_eq!(a.tensors.shape(), &[n, 16, 16, 3][..]);
        let bits = |t: &gigamil_core::numkern::Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.tensors), bits(&b.tensors));
    }
}

#[test]
fn empty_slide_is_skipped() {
    let slide = SlideTiles::from_tiles("case_001", 2.0, Vec::new());
    let err = sample_bag_cropped(&slide, 4, 16, &STATS, &mut seed::rng(0, &[]), false).unwrap_err();
    assert!(matches!(err, gigamil_core::Error::SlideSkip { .. }));
}
