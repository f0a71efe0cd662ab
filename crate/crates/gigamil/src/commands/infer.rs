use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gigamil_core::ensemble::{prune_members, soft_vote, soft_vote_weighted, Member, Modality};
use gigamil_core::milnet::{infer_slide, MilModel};
use gigamil_core::mrivol::{mri_classifier_forward, MriClassifier};
use gigamil_core::seed::{self, tag};
use gigamil_core::slidepyr::{ChannelStats, SlideTiles};
use gigamil_core::{ClassLabel, Error as CoreError};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{self, EnsembleManifest, PredictionRow, SplitFile, StatsFile};
use crate::layout::Layout;

use super::tile::load_slide_tiles;
use super::train::load_volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseSet {
    Eval,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferRequest {
    pub manifest: PathBuf,
    /// Members of other modalities are dropped before pruning.
    pub modalities: Vec<Modality>,
    pub cases: CaseSet,
    pub out: PathBuf,
}

impl InferRequest {
    pub fn defaults(cfg: &RunConfig) -> Self {
        let layout = Layout::new(cfg.paths.clone());
        InferRequest {
            manifest: layout.ensemble_manifest(),
            modalities: vec![Modality::Wsi, Modality::Mri],
            cases: CaseSet::Eval,
            out: layout.predictions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferReport {
    pub rows: Vec<PredictionRow>,
    /// Checkpoints removed by pruning.
    pub pruned: Vec<String>,
    pub failures: Vec<(String, String)>,
}

enum Loaded {
    Wsi { mpp: f64, model: MilModel },
    Mri(MriClassifier),
}

struct LoadedMember {
    key: String,
    weight: f64,
    model: Loaded,
}

pub fn parse_modality(s: &str) -> Option<Modality> {
    match s {
        "wsi" => Some(Modality::Wsi),
        "mri" => Some(Modality::Mri),
        _ => None,
    }
}

fn manifest_members(path: &Path, manifest: &EnsembleManifest) -> Result<Vec<Member>> {
    manifest
        .members
        .iter()
        .map(|m| {
            let modality = parse_modality(&m.modality)
                .ok_or_else(|| CliError::format(path, format!("unknown modality {:?}", m.modality)))?;
            if modality == Modality::Wsi && m.mpp.is_none() {
                return Err(CliError::format(path, format!("slide member {} has no mpp", m.checkpoint)));
            }
            Ok(Member {
                snapshot: m.checkpoint.clone(),
                modality,
                mpp: m.mpp,
                score: m.val_score,
            })
        })
        .collect()
}

/// Probability vectors of every member for one case, keyed by checkpoint.
fn case_probs(
    cfg: &RunConfig,
    layout: &Layout,
    case: &str,
    members: &[LoadedMember],
    stats: Option<&ChannelStats>,
) -> Result<Vec<(usize, [f64; 3])>> {
    let infer_cfg = cfg.inference.infer_config();
    let mut tiles: BTreeMap<u64, SlideTiles> = BTreeMap::new();
    let mut volume = None;
    let mut out = Vec::with_capacity(members.len());
    for (i, m) in members.iter().enumerate() {
        let probs = match &m.model {
            Loaded::Wsi { mpp, model } => {
                let bits = mpp.to_bits();
                if let Entry::Vacant(e) = tiles.entry(bits) {
                    e.insert(load_slide_tiles(layout, case, *mpp)?);
                }
                let mut rng = seed::rng(cfg.seed, &[tag::INFERENCE, seed::hash_id(case), seed::hash_id(&m.key)]);
                let stats = stats.expect("stats are loaded whenever a slide member is present");
                match infer_slide(model, &tiles[&bits], &infer_cfg, stats, &mut rng) {
                    Ok(p) => p.probabilities,
                    Err(CoreError::SlideSkip { .. }) => {
                        log::warn!("{case}: no foreground tiles at {mpp} mpp, member {} abstains", m.key);
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Loaded::Mri(model) => {
                if volume.is_none() {
                    volume = Some(load_volume(cfg, layout, case)?.0);
                }
                mri_classifier_forward(volume.as_ref().expect("loaded above"), model)?.into_data()
            }
        };
        let arr: [f64; 3] = probs
            .try_into()
            .map_err(|_| CliError::Config(format!("member {} does not emit three classes", m.key)))?;
        out.push((i, arr));
    }
    Ok(out)
}

/// Runs every surviving ensemble member on every case of the chosen set and
/// soft-votes. Cases that fail are listed in the report and left out of the
/// predictions file.
pub fn infer(cfg: &RunConfig, req: &InferRequest) -> Result<InferReport> {
    let layout = Layout::new(cfg.paths.clone());
    let manifest: EnsembleManifest = formats::read_json(&req.manifest)?;
    let base = req.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let missing: Vec<String> = manifest
        .members
        .iter()
        .filter(|m| !base.join(&m.checkpoint).exists())
        .map(|m| base.join(&m.checkpoint).display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingCheckpoints(missing));
    }

    let all = manifest_members(&req.manifest, &manifest)?;
    let total = all.len();
    let selected: Vec<Member> = all.into_iter().filter(|m| req.modalities.contains(&m.modality)).collect();
    if selected.is_empty() {
        return Err(CliError::Config("no ensemble member matches the requested modalities".into()));
    }
    let mut prune = manifest.prune_count;
    if selected.len() < total && prune >= selected.len() {
        // a single-modality subset may be smaller than the prune count
        prune = selected.len() - 1;
        log::warn!(
            "only {} members match the requested modalities; pruning {prune} instead of {}",
            selected.len(),
            manifest.prune_count
        );
    }
    let kept = prune_members(&selected, prune)?;
    let pruned: Vec<String> = selected
        .iter()
        .filter(|m| !kept.iter().any(|k| k.snapshot == m.snapshot))
        .map(|m| m.snapshot.clone())
        .collect();
    for p in &pruned {
        log::info!("pruned {p}");
    }

    let mut members = Vec::with_capacity(kept.len());
    for m in &kept {
        let path = base.join(&m.snapshot);
        let bytes = formats::read_bytes(&path)?;
        let (model, weight) = match m.modality {
            Modality::Wsi => (
                Loaded::Wsi {
                    mpp: m.mpp.expect("checked when reading the manifest"),
                    model: formats::decode_milnet(&path, &bytes)?,
                },
                cfg.ensemble.wsi_weight,
            ),
            Modality::Mri => (Loaded::Mri(formats::decode_mrivol(&path, &bytes)?), cfg.ensemble.mri_weight),
        };
        members.push(LoadedMember {
            key: m.snapshot.clone(),
            weight,
            model,
        });
    }
    let stats: Option<ChannelStats> = if kept.iter().any(|m| m.modality == Modality::Wsi) {
        Some(formats::read_json::<StatsFile>(&layout.stats())?.into())
    } else {
        None
    };

    let split: SplitFile = formats::read_json(&layout.split())?;
    let mut cases: Vec<String> = match req.cases {
        CaseSet::Eval => split.eval,
        CaseSet::Train => split.train,
        CaseSet::All => split.train.into_iter().chain(split.eval).collect(),
    };
    cases.sort();

    let uniform = members.iter().all(|m| m.weight == members[0].weight);
    let results: Vec<(String, Result<PredictionRow>)> = cases
        .par_iter()
        .map(|case| {
            let row = case_probs(cfg, &layout, case, &members, stats.as_ref()).and_then(|probs| {
                if probs.is_empty() {
                    return Err(CliError::Config("no ensemble member could score this case".into()));
                }
                let rows: Vec<Vec<f64>> = probs.iter().map(|(_, p)| p.to_vec()).collect();
                let (label, mean): (ClassLabel, Vec<f64>) = if uniform {
                    soft_vote(&rows)?
                } else {
                    let w: Vec<f64> = probs.iter().map(|(i, _)| members[*i].weight).collect();
                    soft_vote_weighted(&rows, &w)?
                };
                Ok(PredictionRow {
                    case_id: case.clone(),
                    label,
                    probabilities: [mean[0], mean[1], mean[2]],
                    member_probs: probs.iter().map(|(i, p)| (members[*i].key.clone(), *p)).collect(),
                })
            });
            (case.clone(), row)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (case, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::error!("{case}: {e}");
                failures.push((case, e.to_string()));
            }
        }
    }
    formats::write_jsonl(&req.out, &rows)?;
    Ok(InferReport { rows, pruned, failures })
}

/// Cases whose predicted label differs between two prediction sets, as
/// `(case, left, right)`.
pub fn diff_predictions(left: &[PredictionRow], right: &[PredictionRow]) -> Vec<(String, ClassLabel, ClassLabel)> {
    let right: BTreeMap<&str, ClassLabel> = right.iter().map(|r| (r.case_id.as_str(), r.label)).collect();
    left.iter()
        .filter_map(|l| match right.get(l.case_id.as_str()) {
            Some(&r) if r != l.label => Some((l.case_id.clone(), l.label, r)),
            _ => None,
        })
        .collect()
}
