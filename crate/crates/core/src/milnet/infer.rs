use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::model::{Embedder, MilModel};
use crate::error::{Error, Result};
use crate::label::{argmax, ClassLabel, NUM_CLASSES};
use crate::slidepyr::{ChannelStats, SlideTiles, CROP_PX};
use crate::slidepyr::sample_bag_cropped;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferConfig {
    /// Tiles per bag.
    pub tiles: usize,
    /// Independent bags per slide.
    pub repeats: usize,
    pub crop: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            tiles: 200,
            repeats: 9,
            crop: CROP_PX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidePrediction {
    pub label: ClassLabel,
    /// Mean of the per-bag probability vectors.
    pub probabilities: Vec<f64>,
    pub votes: Vec<ClassLabel>,
}

/// Plurality vote. Ties go to the tied class with the higher mean
/// probability, then to the lower class index.
pub fn hard_vote(labels: &[ClassLabel], tie_probs: Option<&[f64]>) -> Result<ClassLabel> {
    if labels.is_empty() {
        return Err(Error::Input("hard vote needs at least one label".into()));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let top = *counts.iter().max().expect("non-empty");
    let mut best: Option<usize> = None;
    for c in 0..NUM_CLASSES {
        if counts[c] != top {
            continue;
        }
        best = match (best, tie_probs) {
            (None, _) => Some(c),
            (Some(b), Some(p)) if p[c] > p[b] => Some(c),
            (keep, _) => keep,
        };
    }
    Ok(ClassLabel::ALL[best.expect("some class has the top count")])
}

/// Draws `repeats` eval-mode bags, predicts each, and hard-votes the labels.
pub fn infer_slide<E: Embedder, R: Rng + ?Sized>(
    model: &MilModel<E>,
    slide: &SlideTiles,
    cfg: &InferConfig,
    stats: &ChannelStats,
    rng: &mut R,
) -> Result<SlidePrediction> {
    if cfg.repeats == 0 {
        return Err(Error::Config("inference needs at least one bag per slide".into()));
    }
    let mut mean = vec![0.0; model.classes()];
    let mut votes = Vec::with_capacity(cfg.repeats);
    for _ in 0..cfg.repeats {
        let bag = sample_bag_cropped(slide, cfg.tiles, cfg.crop, stats, rng, false)?;
        let probs = model.slide_probs(bag.tensors)?;
        votes.push(ClassLabel::ALL[argmax(&probs)]);
        for (m, p) in mean.iter_mut().zip(&probs) {
            *m += p;
        }
    }
    for m in mean.iter_mut() {
        *m /= cfg.repeats as f64;
    }
    let label = hard_vote(&votes, Some(&mean))?;
    Ok(SlidePrediction {
        label,
        probabilities: mean,
        votes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::*;

    #[test]
    fn vote_examples() {
        assert_eq!(hard_vote(&[G, G, O], None).unwrap(), G);
        assert_eq!(hard_vote(&[A, O], Some(&[0.3, 0.6, 0.1])).unwrap(), O);
        assert_eq!(hard_vote(&[A, O], None).unwrap(), A);
        assert_eq!(hard_vote(&[O], None).unwrap(), O);
        assert_eq!(hard_vote(&[A, A, O, G, A], None).unwrap(), A);
        assert!(hard_vote(&[], None).is_err());
    }
}
