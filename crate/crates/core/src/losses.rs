//! Soft-target losses over a single-channel probability raster.
//!
//! Both losses return the scalar value and its gradient with respect to the
//! probabilities `p`, so the trainer can seed backpropagation with it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same_shape, SoftMask};

/// Log clamp applied to `p` before taking logarithms.
pub const CE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// dLoss/dp, same shape as the input raster.
    pub grad: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl LossValue {
    /// A loss that does not depend on `p` at all.
    pub fn detached(value: f64, width: usize, height: usize) -> Self {
        Self { value, grad: vec![0.0; width * height], width, height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "ce")]
    CrossEntropy,
    #[serde(rename = "dice")]
    Dice,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "ce",
            LossKind::Dice => "dice",
        }
    }

    pub fn evaluate(self, p: &SoftMask, g: &SoftMask) -> Result<LossValue> {
        match self {
            LossKind::CrossEntropy => cross_entropy(p, g),
            LossKind::Dice => dice_loss(p, g),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::CrossEntropy),
            "dice" => Ok(LossKind::Dice),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}, expected \"ce\" or \"dice\""))),
        }
    }
}

/// Mean binary cross-entropy of predictions `p` against soft targets `g`.
pub fn cross_entropy(p: &SoftMask, g: &SoftMask) -> Result<LossValue> {
    ensure_same_shape(p.shape(), g.shape(), "cross_entropy(p, g)")?;
    let n = p.len() as f64;
    let mut value = 0.0;
    let grad = p
        .values()
        .iter()
        .zip(g.values())
        .map(|(&p, &g)| {
            let p = p.clamp(CE_EPSILON, 1.0 - CE_EPSILON);
            value -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
            (p - g) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok(LossValue { value: value / n, grad, width: p.width(), height: p.height() })
}

/// `1 - 2 sum(g p) / sum(g + p)`, with no smoothing terms.
///
/// When both rasters are all-zero the loss is 0 with a zero gradient.
pub fn dice_loss(p: &SoftMask, g: &SoftMask) -> Result<LossValue> {
    ensure_same_shape(p.shape(), g.shape(), "dice_loss(p, g)")?;
    let (w, h) = p.shape();
    let inter: f64 = p.values().iter().zip(g.values()).map(|(p, g)| p * g).sum();
    let denom: f64 = p.values().iter().zip(g.values()).map(|(p, g)| p + g).sum();
    if denom == 0.0 {
        return Ok(LossValue::detached(0.0, w, h));
    }
    let value = 1.0 - 2.0 * inter / denom;
    let d2 = denom * denom;
    let grad = g.values().iter().map(|&g| -2.0 * (g * denom - inter) / d2).collect();
    Ok(LossValue { value, grad, width: w, height: h })
}

/// Mean per-pixel Bernoulli entropy of `g`, the lower bound of `cross_entropy(., g)`.
pub fn binary_entropy(g: &SoftMask) -> f64 {
    let h: f64 = g
        .values()
        .iter()
        .map(|&g| {
            let a = if g > 0.0 { -g * g.ln() } else { 0.0 };
            let b = if g < 1.0 { -(1.0 - g) * (1.0 - g).ln() } else { 0.0 };
            a + b
        })
        .sum();
    h / g.len() as f64
}
