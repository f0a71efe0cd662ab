use gigamil_core::mrivol::{
    conv3d_forward, crop_foreground, preprocess, rotate, standard_scale_nonzero, zoom, Conv3dSpec,
    Volume4D, MODALITIES,
};
use gigamil_core::numkern::Tensor;
use gigamil_core::seed;
use proptest::prelude::*;
use rand::Rng;

/// Direct sliding-window definition, one output voxel at a time.
fn brute_conv(x: &[f64], inp: [usize; 4], w: &[f64], b: &[f64], cout: usize, k: usize, s: usize, p: usize) -> (Vec<usize>, Vec<f64>) {
    let [cin, d, h, wd] = inp;
    let out_n = |n: usize| (n + 2 * p - k) / s + 1;
    let (od, oh, ow) = (out_n(d), out_n(h), out_n(wd));
    let mut out = Vec::with_capacity(cout * od * oh * ow);
    for o in 0..cout {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b[o];
                    for c in 0..cin {
                        for kz in 0..k {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iz = (z * s + kz) as isize - p as isize;
                                    let iy = (y * s + ky) as isize - p as isize;
                                    let ix = (xx * s + kx) as isize - p as isize;
                                    if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xi = ((c * d + iz as usize) * h + iy as usize) * wd + ix as usize;
                                    let wi = (((o * cin + c) * k + kz) * k + ky) * k + kx;
                                    acc += x[xi] * w[wi];
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    (vec![cout, od, oh, ow], out)
}

fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, [usize; 3], u64)> {
    (1usize..4, 1usize..4, 1usize..6, 1usize..4, 0usize..3, [1usize..9, 1usize..9, 1usize..9], any::<u64>())
        .prop_filter("padded extent fits the kernel", |(_, _, k, _, p, e, _)| e.iter().all(|n| n + 2 * p >= *k))
}

/// Zero background with a random box of strictly positive intensities.
fn boxed_volume(s: u64, ext: [usize; 3]) -> Volume4D {
    let mut rng = seed::rng(s, &[]);
    let lo: Vec<usize> = ext.iter().map(|&n| rng.gen_range(0..n)).collect();
    let hi: Vec<usize> = ext.iter().zip(&lo).map(|(&n, &l)| rng.gen_range(l + 1..=n)).collect();
    let mut v = Volume4D::zeros(ext).unwrap();
    for m in 0..MODALITIES {
        for d in lo[0]..hi[0] {
            for h in lo[1]..hi[1] {
                for w in lo[2]..hi[2] {
                    if rng.gen_bool(0.7) || (d, h, w) == (lo[0], lo[1], lo[2]) || (d, h, w) == (hi[0] - 1, hi[1] - 1, hi[2] - 1) {
                        v.set(m, d, h, w, rng.gen_range(0.1..5.0));
                    }
                }
            }
        }
    }
    v
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conv3d_matches_sliding_window((cin, cout, k, s, p, ext, sd) in conv_case()) {
        let mut rng = seed::rng(sd, &[]);
        let inp = [cin, ext[0], ext[1], ext[2]];
        let x: Vec<f64> = (0..inp.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..cout * cin * k * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = Conv3dSpec::new(
            Tensor::new(vec![cout, cin, k, k, k], w.clone()).unwrap(),
            Tensor::vector(b.clone()).unwrap(),
            s,
            p,
        ).unwrap();
        let got = conv3d_forward(&Tensor::new(inp.to_vec(), x.clone()).unwrap(), &spec).unwrap();
        let (shape, want) = brute_conv(&x, inp, &w, &b, cout, k, s, p);
        prop_assert_eq!(got.shape(), shape.as_slice());
        prop_assert_eq!(spec.output_shape(&inp).unwrap().to_vec(), shape);
        for (a, e) in got.data().iter().zip(&want) {
            prop_assert!((a - e).abs() <= 1e-10, "{} vs {}", a, e);
        }
    }

    #[test]
    fn crop_is_idempotent(s in any::<u64>(), ext in [2usize..10, 2usize..10, 2usize..10]) {
        let once = crop_foreground(&boxed_volume(s, ext)).unwrap();
        let twice = crop_foreground(&once).unwrap();
        prop_assert_eq!(once.extents(), twice.extents());
        prop_assert_eq!(once.data(), twice.data());
    }

    #[test]
    fn scaling_keeps_the_mask_and_standardizes(s in any::<u64>(), ext in [2usize..10, 2usize..10, 2usize..10]) {
        let v = boxed_volume(s, ext);
        // ensure at least two distinct nonzero values per modality
        let mut v = v;
        for m in 0..MODALITIES {
            v.set(m, 0, 0, 0, 7.5);
            v.set(m, ext[0] - 1, ext[1] - 1, ext[2] - 1, 0.3);
        }
        let scaled = standard_scale_nonzero(&v).unwrap();
        for m in 0..MODALITIES {
            let (src, dst) = (v.modality(m), scaled.modality(m));
            for (a, b) in src.iter().zip(dst) {
                prop_assert_eq!(*a == 0.0, *b == 0.0);
            }
            let nz: Vec<f64> = dst.iter().copied().filter(|x| *x != 0.0).collect();
            let (mean, std) = mean_std(&nz);
            prop_assert!(mean.abs() <= 1e-9, "mean {}", mean);
            prop_assert!((std - 1.0).abs() <= 1e-9, "std {}", std);
        }
    }

    #[test]
    fn augmentations_are_identity_at_the_center(s in any::<u64>(), ext in [2usize..9, 2usize..9, 2usize..9]) {
        let v = boxed_volume(s, ext);
        for out in [zoom(&v, 1.0).unwrap(), rotate(&v, [0.0, 0.0, 0.0]).unwrap()] {
            prop_assert_eq!(out.extents(), v.extents());
            for (a, b) in out.data().iter().zip(v.data()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn preprocess_reaches_the_target_grid(s in any::<u64>(), ext in [4usize..12, 4usize..12, 4usize..12]) {
        let mut v = boxed_volume(s, ext);
        for m in 0..MODALITIES {
            v.set(m, 0, 0, 0, 1.0);
            v.set(m, ext[0] - 1, ext[1] - 1, ext[2] - 1, 2.0);
        }
        let out = preprocess(&v, [6, 5, 7]).unwrap();
        prop_assert_eq!(out.extents(), [6, 5, 7]);
    }
}

#[test]
fn reference_geometry_shape() {
    use gigamil_core::numkern::conv::ConvGeometry;
    let g = ConvGeometry { in_channels: 4, out_channels: 64, kernel: 7, stride: 2, padding: 3 };
    assert_eq!(g.output_shape(&[4, 128, 128, 128]).unwrap(), [64, 64, 64, 64]);
}

#[test]
fn all_zero_volume_cannot_be_cropped() {
    assert!(crop_foreground(&Volume4D::zeros([3, 3, 3]).unwrap()).is_err());
}
