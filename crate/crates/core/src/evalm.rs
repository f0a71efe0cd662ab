//! Challenge metrics over a confusion matrix: balanced accuracy, Cohen's
//! kappa and micro-averaged F1.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{ClassLabel, NUM_CLASSES};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if c == 0 || rows.iter().any(|r| r.len() != c) {
            return Err(Error::Input("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix {
            classes: c,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    pub fn col_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(|r| r.to_vec()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

pub fn confusion(y_true: &[ClassLabel], y_pred: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Input(format!(
            "label lists differ in length: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Input("no cases to score".into()));
    }
    let mut m = ConfusionMatrix::zeros(NUM_CLASSES);
    for (t, p) in y_true.iter().zip(y_pred) {
        m.add(t.index(), p.index());
    }
    Ok(m)
}

/// Mean per-class recall.
pub fn balanced_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    for c in 0..m.classes() {
        let support = m.row_total(c);
        if support == 0 {
            let name = ClassLabel::from_index(c).map(|l| l.as_str()).unwrap_or("?");
            return Err(Error::Metric(format!(
                "balanced accuracy needs every true class; class {c} ({name}) has no cases"
            )));
        }
        sum += m.get(c, c) as f64 / support as f64;
    }
    Ok(sum / m.classes() as f64)
}

/// `κ = (p_o − p_e)/(1 − p_e)`.
pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<f64> {
    let n = m.total();
    if n == 0 {
        return Err(Error::Metric("kappa of an empty table".into()));
    }
    let n = n as f64;
    let p_o = m.trace() as f64 / n;
    let mut chance: u128 = 0;
    for c in 0..m.classes() {
        chance += m.row_total(c) as u128 * m.col_total(c) as u128;
    }
    let p_e = chance as f64 / (n * n);
    if chance == (m.total() as u128) * (m.total() as u128) {
        return Err(Error::Metric("kappa undefined: expected agreement is 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Micro-averaged F1: pooled `TP / (TP + (FP + FN)/2)`.
pub fn f1_micro(m: &ConfusionMatrix) -> f64 {
    let tp = m.trace();
    let off = m.total() - tp;
    // every off-diagonal count is one FP (its column) and one FN (its row)
    let (fp, fn_) = (off, off);
    tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub balanced_accuracy: f64,
    pub kappa: f64,
    pub f1_micro: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(y_true: &[ClassLabel], y_pred: &[ClassLabel]) -> Result<Metrics> {
    let m = confusion(y_true, y_pred)?;
    Ok(Metrics {
        balanced_accuracy: balanced_accuracy(&m)?,
        kappa: cohen_kappa(&m)?,
        f1_micro: f1_micro(&m),
        confusion: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::*;

    #[test]
    fn confusion_counts() {
        let m = confusion(&[A, O, G], &[A, O, G]).unwrap();
        assert_eq!(m.rows(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let single = confusion(&[A], &[G]).unwrap();
        assert_eq!(single.get(0, 2), 1);
        assert_eq!(single.total(), 1);
        assert!(confusion(&[A, O], &[A]).is_err());
    }

    #[test]
    fn balanced_accuracy_examples() {
        let diag = ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 5]]).unwrap();
        assert_eq!(balanced_accuracy(&diag).unwrap(), 1.0);
        // recalls 1.0, 0.5, 0.75
        let m = ConfusionMatrix::from_rows(&[vec![4, 0, 0], vec![1, 1, 0], vec![0, 1, 3]]).unwrap();
        assert!((balanced_accuracy(&m).unwrap() - 0.75).abs() < 1e-15);
        let missing = ConfusionMatrix::from_rows(&[vec![1, 0, 0], vec![0, 0, 0], vec![0, 0, 1]]).unwrap();
        match balanced_accuracy(&missing) {
            Err(Error::Metric(msg)) => assert!(msg.contains("class 1 (O)")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kappa_two_class_table() {
        let m = ConfusionMatrix::from_rows(&[vec![25, 5], vec![10, 10]]).unwrap();
        let k = cohen_kappa(&m).unwrap();
        assert!((k - 0.16 / 0.46).abs() < 1e-12);
        let single = ConfusionMatrix::from_rows(&[vec![5, 0], vec![0, 0]]).unwrap();
        assert!(cohen_kappa(&single).is_err());
    }

    #[test]
    fn f1_is_trace_over_total() {
        let m = ConfusionMatrix::from_rows(&[vec![3, 1, 0], vec![0, 3, 1], vec![1, 0, 3]]).unwrap();
        assert_eq!(m.total(), 12);
        assert_eq!(f1_micro(&m), 0.75);
    }
}
