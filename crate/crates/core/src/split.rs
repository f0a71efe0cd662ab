use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::label::ClassLabel;
use crate::seed;

/// Stratified hold-out split. Each class contributes `round(fraction · n_c)`
/// cases (at least one when it has two or more) to the held-out side.
/// Returns `(kept, held_out)` index lists, both ascending.
pub fn stratified_split(labels: &[ClassLabel], fraction: f64, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed_value, &[seed::tag::SPLIT]);
    let mut held = Vec::new();
    for class in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let mut take = libm::round(fraction * idx.len() as f64) as usize;
        if take == 0 && fraction > 0.0 && idx.len() >= 2 {
            take = 1;
        }
        held.extend_from_slice(&idx[..take.min(idx.len())]);
    }
    held.sort_unstable();
    let kept = (0..labels.len()).filter(|i| held.binary_search(i).is_err()).collect();
    (kept, held)
}
