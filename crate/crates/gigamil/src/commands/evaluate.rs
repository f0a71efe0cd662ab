use std::collections::BTreeMap;
use std::path::Path;

use gigamil_core::evalm;

use crate::error::{CliError, Result};
use crate::formats::{self, LabelRow, MetricsFile, PredictionRow};

/// Scores predictions against ground truth; every predicted case needs a
/// label and every labelled case a prediction.
pub fn evaluate_rows(predictions: &[PredictionRow], truth: &[LabelRow]) -> Result<MetricsFile> {
    let by_case: BTreeMap<&str, _> = truth.iter().map(|t| (t.case_id.as_str(), t.label)).collect();
    let mut y_true = Vec::with_capacity(predictions.len());
    let mut y_pred = Vec::with_capacity(predictions.len());
    for p in predictions {
        let t = by_case
            .get(p.case_id.as_str())
            .ok_or_else(|| CliError::Core(gigamil_core::Error::Input(format!("case {} has no ground-truth label", p.case_id))))?;
        y_true.push(*t);
        y_pred.push(p.label);
    }
    if let Some(t) = truth.iter().find(|t| !predictions.iter().any(|p| p.case_id == t.case_id)) {
        return Err(CliError::Core(gigamil_core::Error::Input(format!(
            "case {} has no prediction",
            t.case_id
        ))));
    }
    let m = evalm::evaluate(&y_true, &y_pred)?;
    Ok(MetricsFile {
        balanced_accuracy: m.balanced_accuracy,
        kappa: m.kappa,
        f1_micro: m.f1_micro,
        confusion: m.confusion.rows(),
    })
}

pub fn evaluate(predictions: &Path, truth: &Path, out: &Path) -> Result<MetricsFile> {
    let preds: Vec<PredictionRow> = formats::read_jsonl(predictions)?;
    let labels: Vec<LabelRow> = formats::read_jsonl(truth)?;
    let metrics = evaluate_rows(&preds, &labels)?;
    formats::write_json(out, &metrics)?;
    Ok(metrics)
}
