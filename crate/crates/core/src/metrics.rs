//! Classification metrics over the four veracity classes.

use serde::{Deserialize, Serialize};

use crate::data::Veracity;

const R: usize = Veracity::COUNT;

/// Confusion counts, rows = true class, columns = predicted class.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; R]; R]);

impl Confusion {
    pub fn from_pairs(labels: &[usize], predictions: &[usize]) -> Self {
        let mut m = [[0; R]; R];
        for (&y, &p) in labels.iter().zip(predictions) {
            m[y][p] += 1;
        }
        Self(m)
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..R).map(|c| self.0[c][c]).sum::<usize>() as f64 / total as f64
    }

    /// 2TP/(2TP+FP+FN) per class; 0 when the class never occurs in either
    /// labels or predictions.
    pub fn f1_per_class(&self) -> [f64; R] {
        let mut out = [0.0; R];
        for (c, f1) in out.iter_mut().enumerate() {
            let tp = self.0[c][c];
            let fn_ = self.0[c].iter().sum::<usize>() - tp;
            let fp = (0..R).map(|y| self.0[y][c]).sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            if denom > 0 {
                *f1 = 2.0 * tp as f64 / denom as f64;
            }
        }
        out
    }

    pub fn macro_f1(&self) -> f64 {
        self.f1_per_class().iter().sum::<f64>() / R as f64
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
