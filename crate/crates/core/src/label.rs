use core::fmt;
use core::str::FromStr;

use crate::error::Error;

pub const NUM_CLASSES: usize = 3;

/// Diagnostic class. The index order A=0, O=1, G=2 is used by every
/// probability vector, confusion matrix and file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    /// Astrocytoma.
    A,
    /// Oligodendroglioma.
    O,
    /// Glioblastoma multiforme.
    G,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [ClassLabel::A, ClassLabel::O, ClassLabel::G];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::A => "A",
            ClassLabel::O => "O",
            ClassLabel::G => "G",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(ClassLabel::A),
            "O" => Ok(ClassLabel::O),
            "G" => Ok(ClassLabel::G),
            other => Err(Error::Input(alloc::format!("unknown class label {other:?}"))),
        }
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
