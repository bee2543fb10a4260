use crate::error::{Error, Result};
use crate::mask::check_dims;

/// Multi-channel input image, stored channel-planar (`[C, H, W]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// `data` is channel-planar: all of channel 0 row-major, then channel 1, ...
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, width * height)?;
        if channels == 0 {
            return Err(Error::InvalidArgument("image needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite image value at index {i}")));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn from_planes_unchecked(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self { width, height, channels, data }
    }
}
