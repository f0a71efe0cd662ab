use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::label::{ClassLabel, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassWeighting {
    /// `w_c = N / (C · n_c)`.
    #[default]
    InverseFrequency,
    Uniform,
}

/// Inverse-frequency weights normalized so that a balanced set gets all ones.
pub fn class_weights(labels: &[ClassLabel]) -> Result<Vec<f64>> {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let n = labels.len() as f64;
    let mut w = vec![0.0; NUM_CLASSES];
    for (c, &k) in counts.iter().enumerate() {
        if k == 0 {
            return Err(Error::Config(format!(
                "class {} has no training examples",
                ClassLabel::ALL[c]
            )));
        }
        w[c] = n / (NUM_CLASSES as f64 * k as f64);
    }
    Ok(w)
}

impl ClassWeighting {
    pub fn weights(self, labels: &[ClassLabel]) -> Result<Vec<f64>> {
        match self {
            ClassWeighting::InverseFrequency => class_weights(labels),
            ClassWeighting::Uniform => {
                // still require every class to be present
                class_weights(labels)?;
                Ok(vec![1.0; NUM_CLASSES])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::*;

    #[test]
    fn examples() {
        let balanced: Vec<ClassLabel> = [A, O, G].iter().cycle().take(30).copied().collect();
        assert_eq!(class_weights(&balanced).unwrap(), vec![1.0, 1.0, 1.0]);
        let w = class_weights(&[A, A, O, G]).unwrap();
        assert_eq!(w, vec![4.0 / 6.0, 4.0 / 3.0, 4.0 / 3.0]);
        match class_weights(&[A, O]) {
            Err(Error::Config(msg)) => assert!(msg.contains("class G")),
            other => panic!("{other:?}"),
        }
    }
}
