use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same_shape, threshold, SoftMask};

use super::{confusion, hausdorff95};

/// Metrics of one prediction/ground-truth pair, both thresholded at `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub threshold: f64,
    pub dsc: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    /// `None` when exactly one of the two masks is empty.
    pub hd95: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub dsc: MeanStd,
    pub iou: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    /// `None` when every row's HD95 was undefined.
    pub hd95: Option<MeanStd>,
    pub hd95_skipped: usize,
}

impl SweepSummary {
    pub fn from_rows(rows: &[MetricRow]) -> Result<Self> {
        let col = |f: fn(&MetricRow) -> f64| -> Result<MeanStd> {
            mean_std(&rows.iter().map(f).collect::<Vec<_>>())
                .ok_or_else(|| Error::InvalidArgument("summary of zero rows".into()))
        };
        let hd: Vec<f64> = rows.iter().filter_map(|r| r.hd95).collect();
        Ok(Self {
            dsc: col(|r| r.dsc)?,
            iou: col(|r| r.iou)?,
            precision: col(|r| r.precision)?,
            recall: col(|r| r.recall)?,
            hd95: mean_std(&hd),
            hd95_skipped: rows.len() - hd.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<MetricRow>,
    pub summary: SweepSummary,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt(), count: values.len() })
}

/// Confidence thresholds 10%, 20%, ..., 90%.
pub fn default_thresholds() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Parse `start:stop:step`, inclusive of both ends.
///
/// Values are snapped to a 1e-9 grid so that `0.1:0.9:0.1` yields the same
/// doubles as the decimal literals `0.1, 0.2, ..., 0.9`.
pub fn parse_threshold_range(range: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("threshold range {range:?} is not start:stop:step"));
    let parts: Vec<f64> = range
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    let values: Vec<f64> = (0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect();
    if let Some(t) = values.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::InvalidArgument(format!("threshold {t} is outside (0, 1)")));
    }
    Ok(values)
}

/// Threshold both `pred` and `gt` at every `tau` and compute all metrics.
pub fn threshold_sweep(pred: &SoftMask, gt: &SoftMask, thresholds: &[f64]) -> Result<Sweep> {
    ensure_same_shape(pred.shape(), gt.shape(), "threshold_sweep(pred, gt)")?;
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("threshold list is empty".into()));
    }
    let rows = thresholds
        .iter()
        .map(|&tau| {
            let p = threshold(pred, tau)?;
            let g = threshold(gt, tau)?;
            let c = confusion(&p, &g)?;
            Ok(MetricRow {
                threshold: tau,
                dsc: c.dice(),
                iou: c.iou(),
                precision: c.precision(),
                recall: c.recall(),
                hd95: hausdorff95(&p, &g)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = SweepSummary::from_rows(&rows)?;
    Ok(Sweep { rows, summary })
}
