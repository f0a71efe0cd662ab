use gigamil_core::mrivol::synth_volume;
use gigamil_core::seed::{self, tag};
use gigamil_core::slidepyr::synth_slide;
use gigamil_core::split::stratified_split;
use gigamil_core::{ClassLabel, NUM_CLASSES};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::formats::{self, LabelRow, SlideSidecar, SplitFile, VolumeSidecar};
use crate::layout::{case_id, Layout};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub class_counts: [usize; NUM_CLASSES],
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

/// Balanced class labels in a seed-determined order.
pub fn assign_labels(cases: usize, seed_value: u64) -> Vec<ClassLabel> {
    let mut labels: Vec<ClassLabel> = (0..cases).map(|i| ClassLabel::ALL[i % NUM_CLASSES]).collect();
    labels.shuffle(&mut seed::rng(seed_value, &[tag::LABELS]));
    labels
}

/// Writes one slide and one volume per case plus the train/eval split.
/// Labels of evaluation cases go only to `eval_labels.jsonl`.
pub fn synth(cfg: &RunConfig) -> Result<SynthReport> {
    let layout = Layout::new(cfg.paths.clone());
    let d = &cfg.dataset;
    let labels = assign_labels(d.cases, cfg.seed);
    let fraction = d.eval_cases as f64 / d.cases as f64;
    let (train_idx, eval_idx) = stratified_split(&labels, fraction, seed::derive(cfg.seed, &[tag::SPLIT]));
    let mut is_eval = vec![false; d.cases];
    for &i in &eval_idx {
        is_eval[i] = true;
    }

    (0..d.cases).into_par_iter().try_for_each(|i| -> Result<()> {
        let id = case_id(i);
        let label = labels[i];
        let visible = (!is_eval[i]).then_some(label);
        let slide = synth_slide(
            seed::derive(cfg.seed, &[tag::SYNTH_SLIDE, i as u64]),
            label,
            d.slide_px,
            d.slide_px,
            d.native_mpp,
        );
        formats::write_slide(
            &layout.slide(&id),
            &slide,
            &SlideSidecar {
                slide_id: id.clone(),
                native_mpp: d.native_mpp,
                label: visible,
            },
        )?;
        drop(slide);
        let vol = synth_volume(seed::derive(cfg.seed, &[tag::SYNTH_VOLUME, i as u64]), label, d.volume_extents)?;
        formats::write_volume(&layout.volume(&id), &vol, &VolumeSidecar { case_id: id, label: visible })?;
        log::debug!("synthesized {} ({label})", case_id(i));
        Ok(())
    })?;

    let train: Vec<String> = train_idx.iter().map(|&i| case_id(i)).collect();
    let eval: Vec<String> = eval_idx.iter().map(|&i| case_id(i)).collect();
    formats::write_json(&layout.split(), &SplitFile { train: train.clone(), eval: eval.clone() })?;
    let truth: Vec<LabelRow> = eval_idx
        .iter()
        .map(|&i| LabelRow {
            case_id: case_id(i),
            label: labels[i],
        })
        .collect();
    formats::write_jsonl(&layout.eval_labels(), &truth)?;

    let mut class_counts = [0; NUM_CLASSES];
    for l in &labels {
        class_counts[l.index()] += 1;
    }
    Ok(SynthReport { class_counts, train, eval })
}
