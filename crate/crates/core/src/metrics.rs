//! Confusion matrices and mean intersection-over-union.

use crate::error::{Error, Result};
use crate::heads::LabelMap;

/// `k × k` pixel counts; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, pred: &LabelMap, truth: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (truth.height(), truth.width()) {
            return Err(Error::usage(format!(
                "prediction is {}×{} but ground truth is {}×{}",
                pred.height(),
                pred.width(),
                truth.height(),
                truth.width()
            )));
        }
        pred.validate(self.k)?;
        truth.validate(self.k)?;
        for (&p, &t) in pred.classes().iter().zip(truth.classes()) {
            self.counts[t as usize * self.k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::usage(format!(
                "cannot merge {}-class and {}-class confusion matrices",
                self.k, other.k
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// IOU per class; `None` where the class has an empty union.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..self.k).map(|p| self.get(c, p)).sum();
                let col: u64 = (0..self.k).map(|t| self.get(t, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    /// Mean IOU over classes with a non-empty union, in `[0, 1]`. `None` when
    /// no class is present at all.
    pub fn miou(&self) -> Option<f64> {
        let present: Vec<f64> = self.class_iou().into_iter().flatten().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }

    /// Mean IOU on the 0 to 100 scale used in reports.
    pub fn miou_percent(&self) -> Option<f64> {
        self.miou().map(|m| 100.0 * m)
    }
}
