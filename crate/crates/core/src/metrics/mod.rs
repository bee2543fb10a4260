//! Overlap, surface-distance and distribution metrics for binary masks.
//!
//! Conventions for empty masks:
//! - DSC and IoU are 1 when both masks are empty.
//! - Precision is 1 when the prediction is empty and so is the ground truth,
//!   0 when the prediction is empty but the ground truth is not.
//! - Recall is 1 when the ground truth is empty.
//! - HD95 is 0 when both masks are empty and undefined (`None`) when exactly
//!   one is.

mod ged;
mod hausdorff;
mod sweep;

pub use ged::{ged_squared_deterministic, ged_squared_general, iou_distance, GedReport};
pub use hausdorff::{hausdorff95, percentile_linear, squared_distance_transform};
pub use sweep::{
    default_thresholds, mean_std, parse_threshold_range, threshold_sweep, MeanStd, MetricRow, Sweep,
    SweepSummary,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::{ensure_same_shape, BinaryMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let predicted = self.tp + self.fp;
        if predicted == 0 {
            if self.fn_ == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.tp as f64 / predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let actual = self.tp + self.fn_;
        if actual == 0 {
            1.0
        } else {
            self.tp as f64 / actual as f64
        }
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    ensure_same_shape(pred.shape(), gt.shape(), "confusion(pred, gt)")?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(confusion(pred, gt)?.dice())
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(confusion(pred, gt)?.iou())
}

/// `(precision, recall)` of `pred` against `gt`.
pub fn precision_recall(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    let c = confusion(pred, gt)?;
    Ok((c.precision(), c.recall()))
}
