//! Snapshot selection, pruning of the weakest members and soft voting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{argmax, ClassLabel};

/// Distance, in epochs, between the two snapshots kept per training run.
pub const SNAPSHOT_GAP: usize = 10;

pub const DEFAULT_PRUNE_COUNT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Modality {
    Wsi,
    Mri,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Wsi => "wsi",
            Modality::Mri => "mri",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Checkpoint identifier (a path in the CLI).
    pub snapshot: String,
    pub modality: Modality,
    pub mpp: Option<f64>,
    /// Local validation balanced accuracy.
    pub score: f64,
}

/// Epoch pair kept from a run of `total_epochs` epochs (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotEpochs {
    pub last: usize,
    pub earlier: usize,
    /// Set when the run was too short for the full gap and epoch 1 was used instead.
    pub degenerate: bool,
}

pub fn snapshot_epochs(total_epochs: usize) -> SnapshotEpochs {
    if total_epochs > SNAPSHOT_GAP {
        SnapshotEpochs {
            last: total_epochs,
            earlier: total_epochs - SNAPSHOT_GAP,
            degenerate: false,
        }
    } else {
        SnapshotEpochs {
            last: total_epochs,
            earlier: 1,
            degenerate: true,
        }
    }
}

/// Anything with a 1-based epoch index.
pub trait Epoch {
    fn epoch(&self) -> usize;
}

/// Picks the last-epoch snapshot and the one ten epochs before it from a
/// per-epoch history. Returns `(last, earlier, degenerate)`.
pub fn select_snapshots<S: Epoch + Clone>(history: &[S]) -> Result<(S, S, bool)> {
    let total = history
        .iter()
        .map(Epoch::epoch)
        .max()
        .ok_or_else(|| Error::Input("empty snapshot history".into()))?;
    let pick = snapshot_epochs(total);
    let find = |e: usize| {
        history
            .iter()
            .find(|s| s.epoch() == e)
            .cloned()
            .ok_or_else(|| Error::Input(format!("snapshot for epoch {e} missing from history")))
    };
    Ok((find(pick.last)?, find(pick.earlier)?, pick.degenerate))
}

/// Drops the `k` lowest-scoring members. Among equal scores the later list
/// position goes first; survivors keep their order.
pub fn prune_members(members: &[Member], k: usize) -> Result<Vec<Member>> {
    if k >= members.len() {
        return Err(Error::Config(format!(
            "cannot prune {k} of {} members; at least one must remain",
            members.len()
        )));
    }
    let mut order: Vec<usize> = (0..members.len()).collect();
    // ascending score, later position first among ties
    order.sort_by(|&a, &b| {
        members[a]
            .score
            .total_cmp(&members[b].score)
            .then(b.cmp(&a))
    });
    let mut dropped = vec![false; members.len()];
    for &i in order.iter().take(k) {
        dropped[i] = true;
    }
    Ok(members
        .iter()
        .zip(dropped)
        .filter(|(_, d)| !d)
        .map(|(m, _)| m.clone())
        .collect())
}

const ROW_TOLERANCE: f64 = 1e-9;

fn check_rows(probs: &[Vec<f64>]) -> Result<usize> {
    let c = probs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Input("soft vote needs at least one member".into()))?;
    for (i, row) in probs.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.len() != c || (sum - 1.0).abs() > ROW_TOLERANCE || row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Input(format!(
                "member {i} probability row is not normalized (sum {sum})"
            )));
        }
    }
    Ok(c)
}

/// Unweighted mean of member probability vectors; label is the argmax with
/// ties going to the lower class index.
pub fn soft_vote(probs: &[Vec<f64>]) -> Result<(ClassLabel, Vec<f64>)> {
    let weights = vec![1.0; probs.len()];
    soft_vote_weighted(probs, &weights)
}

/// Weighted mean of member probability vectors.
pub fn soft_vote_weighted(probs: &[Vec<f64>], weights: &[f64]) -> Result<(ClassLabel, Vec<f64>)> {
    let c = check_rows(probs)?;
    if weights.len() != probs.len() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Input("soft vote weights must be positive, one per member".into()));
    }
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; c];
    for (row, w) in probs.iter().zip(weights) {
        for (m, p) in mean.iter_mut().zip(row) {
            *m += w * p;
        }
    }
    for m in mean.iter_mut() {
        *m /= total;
    }
    let label = ClassLabel::from_index(argmax(&mean))
        .ok_or_else(|| Error::Input(format!("{c} classes in probability rows")))?;
    Ok((label, mean))
}
