//! Synthetic skull-stripped 4-modality volumes.
//!
//! A noisy brain ellipsoid on a zero background carries one lesion whose
//! appearance depends on the class:
//!
//! | class | signature                                   |
//! |-------|---------------------------------------------|
//! | A     | bright FLAIR lesion, mild T2                 |
//! | O     | bright T2 lesion, dark T1                    |
//! | G     | T1c enhancing ring around a dark core, FLAIR edema |

use rand::Rng;

use super::volume::{Volume4D, MODALITIES};
use crate::error::{Error, Result};
use crate::label::ClassLabel;
use crate::seed;

/// Baseline tissue intensities per modality (T1, T1c, T2, FLAIR).
const TISSUE: [f64; MODALITIES] = [0.62, 0.55, 0.40, 0.45];

pub fn synth_volume(seed_value: u64, label: ClassLabel, extents: [usize; 3]) -> Result<Volume4D> {
    if extents.iter().any(|&n| n < 8) {
        return Err(Error::Input(alloc::format!(
            "synthetic volumes need every extent ≥ 8, got {extents:?}"
        )));
    }
    let mut rng = seed::rng(seed_value, &[seed::tag::SYNTH_VOLUME]);
    let ext = extents.map(|n| n as f64);
    let c = ext.map(|n| (n - 1.0) / 2.0);
    // brain semi-axes, a little short of the grid so the crop has work to do
    let radius: [f64; 3] = core::array::from_fn(|a| ext[a] * rng.gen_range(0.36..0.42));
    // lesion center inside the inner half of the brain
    let lesion_c: [f64; 3] = core::array::from_fn(|a| c[a] + radius[a] * rng.gen_range(-0.2..0.2));
    let lesion_r = radius.iter().copied().fold(f64::INFINITY, f64::min) * rng.gen_range(0.55..0.75);
    let gain = rng.gen_range(0.9..1.1);

    let mut v = Volume4D::zeros(extents)?;
    let n = v.voxels();
    let data_len = v.data().len();
    let mut noise = alloc::vec![0.0; data_len];
    noise.iter_mut().for_each(|x| *x = rng.gen_range(-0.05..0.05));
    for z in 0..extents[0] {
        for y in 0..extents[1] {
            for x in 0..extents[2] {
                let p = [z as f64, y as f64, x as f64];
                let b: f64 = (0..3).map(|a| sq((p[a] - c[a]) / radius[a])).sum();
                if b > 1.0 {
                    continue;
                }
                let dl = libm::sqrt((0..3).map(|a| sq(p[a] - lesion_c[a])).sum::<f64>()) / lesion_r;
                let mut t = TISSUE;
                // gentle gray/white contrast towards the center
                for (m, tv) in t.iter_mut().enumerate() {
                    *tv += 0.08 * (1.0 - b) * if m == 0 { 1.0 } else { -0.5 };
                }
                apply_lesion(&mut t, label, dl, gain);
                let i = v.index(z, y, x);
                for (m, &tv) in t.iter().enumerate() {
                    let val = (tv + noise[m * n + i]).max(0.02);
                    v.modality_mut(m)[i] = val;
                }
            }
        }
    }
    Ok(v)
}

fn sq(x: f64) -> f64 {
    x * x
}

fn apply_lesion(t: &mut [f64; MODALITIES], label: ClassLabel, dl: f64, gain: f64) {
    let inside = (1.0 - dl).clamp(0.0, 1.0);
    let halo = (1.6 - dl).clamp(0.0, 0.6) / 0.6;
    match label {
        ClassLabel::A => {
            t[3] += 0.9 * gain * inside;
            t[2] += 0.25 * gain * inside;
        }
        ClassLabel::O => {
            t[2] += 0.9 * gain * inside;
            t[0] -= 0.3 * gain * inside;
        }
        ClassLabel::G => {
            let ring = if (0.7..1.15).contains(&dl) { 1.0 } else { 0.0 };
            t[1] += 0.9 * gain * ring;
            if dl < 0.7 {
                t[1] -= 0.3 * gain;
            }
            t[3] += 0.4 * gain * halo;
        }
    }
}
