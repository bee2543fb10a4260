//! Raster mask types and multi-annotator fusion.
//!
//! Masks are single-channel, row-major rasters. A [`BinaryMask`] holds one
//! annotator's segmentation (or a thresholded prediction); a [`SoftMask`]
//! holds per-pixel foreground probabilities, either fused from several
//! annotators or predicted by a model.

use crate::error::{Error, Result};

/// A `{0,1}`-valued raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(Error::InvalidValue(format!(
                "binary mask value {} at index {i} is not 0 or 1",
                values[i]
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn from_bools(width: usize, height: usize, values: &[bool]) -> Result<Self> {
        Self::new(width, height, values.iter().map(|&b| b as u8).collect())
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![1; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    /// True when no pixel is foreground.
    pub fn is_blank(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Integer coordinates `(x, y)` of every foreground pixel, row-major.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// A `[0,1]`-valued probability raster.
///
/// Masks produced by [`fuse_mean`] remember their annotator count so that
/// downstream consumers ([`variance_map`]) can work in exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
    annotators: Option<u32>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidValue(format!(
                "soft mask value {} at index {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { width, height, values, annotators: None })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Annotator count when the mask came out of [`fuse_mean`].
    pub fn annotators(&self) -> Option<u32> {
        self.annotators
    }
}

impl From<&BinaryMask> for SoftMask {
    fn from(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            values: mask.values.iter().map(|&v| v as f64).collect(),
            annotators: Some(1),
        }
    }
}

/// `N >= 1` same-shaped binary annotations of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    annotations: Vec<BinaryMask>,
}

impl AnnotationSet {
    pub fn new(annotations: Vec<BinaryMask>) -> Result<Self> {
        let first = annotations
            .first()
            .ok_or_else(|| Error::InvalidArgument("annotation set is empty".into()))?;
        let shape = first.shape();
        for (i, a) in annotations.iter().enumerate().skip(1) {
            if a.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "annotation {i} is {}x{}, annotation 0 is {}x{}",
                    a.width, a.height, shape.0, shape.1
                )));
            }
        }
        Ok(Self { annotations })
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        self.annotations[0].shape()
    }

    pub fn annotations(&self) -> &[BinaryMask] {
        &self.annotations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BinaryMask> {
        self.annotations.iter()
    }
}

impl<'a> IntoIterator for &'a AnnotationSet {
    type Item = &'a BinaryMask;
    type IntoIter = std::slice::Iter<'a, BinaryMask>;

    fn into_iter(self) -> Self::IntoIter {
        self.annotations.iter()
    }
}

/// The set `{i/N : i = 0..=N}` of values a fused label can take.
#[derive(Debug, Clone, PartialEq)]
pub struct GranularitySet {
    n: u32,
    levels: Vec<f64>,
}

impl GranularitySet {
    pub fn annotators(&self) -> u32 {
        self.n
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Exact (bitwise) membership.
    pub fn contains(&self, value: f64) -> bool {
        self.levels.iter().any(|&l| l.to_bits() == value.to_bits())
    }
}

pub fn granularity(n_annotators: u32) -> Result<GranularitySet> {
    if n_annotators == 0 {
        return Err(Error::InvalidArgument("granularity requires at least one annotator".into()));
    }
    let n = n_annotators;
    let levels = (0..=n).map(|i| level(i, n)).collect();
    Ok(GranularitySet { n, levels })
}

// Exact integer vote count divided once, so every fused value is the
// correctly rounded `i/N` and compares bit-equal to the granularity level.
#[inline]
fn level(votes: u32, n: u32) -> f64 {
    votes as f64 / n as f64
}

/// Per-pixel mean of the annotations.
pub fn fuse_mean(set: &AnnotationSet) -> SoftMask {
    let (width, height) = set.shape();
    let n = set.len() as u32;
    let mut votes = vec![0u32; width * height];
    for mask in set {
        for (acc, &v) in votes.iter_mut().zip(mask.values()) {
            *acc += v as u32;
        }
    }
    SoftMask {
        width,
        height,
        values: votes.into_iter().map(|k| level(k, n)).collect(),
        annotators: Some(n),
    }
}

/// Fuse a raw list of annotations, rejecting empty lists and mismatched shapes.
pub fn fuse_masks(masks: &[BinaryMask]) -> Result<SoftMask> {
    Ok(fuse_mean(&AnnotationSet::new(masks.to_vec())?))
}

/// Bernoulli variance `m - m^2` of every pixel.
///
/// For masks produced by [`fuse_mean`] the vote count `k` is recovered and
/// the variance computed as the rational `k(N-k)/N^2`, which equals the
/// population variance of the votes exactly.
pub fn variance_map(mean: &SoftMask) -> Vec<f64> {
    match mean.annotators {
        Some(n) if n > 0 => {
            let n = n as u64;
            mean.values
                .iter()
                .map(|&m| {
                    let k = (m * n as f64).round() as u64;
                    (k * (n - k)) as f64 / (n * n) as f64
                })
                .collect()
        }
        _ => mean.values.iter().map(|&m| m - m * m).collect(),
    }
}

/// Foreground where `mask >= tau`.
pub fn threshold(mask: &SoftMask, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {tau} is outside (0, 1)")));
    }
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        values: mask.values.iter().map(|&v| (v >= tau) as u8).collect(),
    })
}

pub(crate) fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("raster dimensions {width}x{height} must be >= 1")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::ShapeMismatch(format!(
            "{width}x{height} raster needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_shape(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
