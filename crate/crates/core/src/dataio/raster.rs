//! `SSEG` float rasters.
//!
//! ```text
//! offset 0   "SSEG"
//! offset 4   u32 LE width
//! offset 8   u32 LE height
//! offset 12  u32 LE channels
//! offset 16  width*height*channels f32 LE, row-major, channel-interleaved
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::SoftMask;

use super::atomic_write;

pub const SSEG_MAGIC: &[u8; 4] = b"SSEG";
pub const SSEG_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterFile {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    /// Interleaved: pixel 0 channels, pixel 1 channels, ...
    pub data: Vec<f32>,
}

impl RasterFile {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize * channels as usize;
        if width == 0 || height == 0 || channels == 0 || data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} raster needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn from_image(image: &Image) -> Self {
        let (w, h, c) = (image.width(), image.height(), image.channels());
        let mut data = Vec::with_capacity(w * h * c);
        for i in 0..w * h {
            for ch in 0..c {
                data.push(image.plane(ch)[i] as f32);
            }
        }
        Self { width: w as u32, height: h as u32, channels: c as u32, data }
    }

    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        Self { width: width as u32, height: height as u32, channels: 1, data: values.iter().map(|&v| v as f32).collect() }
    }

    pub fn to_image(&self) -> Result<Image> {
        let (w, h, c) = (self.width as usize, self.height as usize, self.channels as usize);
        let mut planar = vec![0.0; w * h * c];
        for (i, px) in self.data.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                planar[ch * w * h + i] = v as f64;
            }
        }
        Image::new(w, h, c, planar)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SSEG_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(SSEG_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub fn decode_raster(bytes: &[u8], path: &Path) -> Result<RasterFile> {
    if bytes.len() < SSEG_HEADER_LEN {
        return Err(Error::format(
            path,
            format!("truncated header: expected {SSEG_HEADER_LEN} bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[..4] != SSEG_MAGIC {
        return Err(Error::format(path, "bad magic at byte offset 0, expected \"SSEG\""));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let (width, height, channels) = (word(4), word(8), word(12));
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::format(path, format!("zero dimension in header {width}x{height}x{channels} at byte offset 4")));
    }
    let count = width as u64 * height as u64 * channels as u64;
    let expected = SSEG_HEADER_LEN as u64 + 4 * count;
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            path,
            format!(
                "{} payload: expected {expected} bytes in total, got {}",
                if (bytes.len() as u64) < expected { "truncated" } else { "oversized" },
                bytes.len()
            ),
        ));
    }
    let data = bytes[SSEG_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(RasterFile { width, height, channels, data })
}

pub fn read_raster(path: &Path) -> Result<RasterFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes, path)
}

pub fn write_raster(path: &Path, raster: &RasterFile) -> Result<()> {
    atomic_write(path, &raster.encode())
}

/// Read a single-channel raster whose values must all lie in `[0, 1]`.
pub fn read_mask_raster(path: &Path) -> Result<SoftMask> {
    let r = read_raster(path)?;
    if r.channels != 1 {
        return Err(Error::format(path, format!("mask raster must have 1 channel, has {}", r.channels)));
    }
    if let Some(i) = r.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        let what = if r.data[i].is_nan() { "NaN".to_string() } else { format!("value {}", r.data[i]) };
        return Err(Error::format(
            path,
            format!("{what} in mask channel at byte offset {}", SSEG_HEADER_LEN + 4 * i),
        ));
    }
    SoftMask::new(r.width as usize, r.height as usize, r.data.iter().map(|&v| v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_size_arithmetic() {
        let r = RasterFile::new(2, 2, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        assert_eq!(r.encode().len(), 16 + 16);
    }

    #[test]
    fn roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.sseg");
        let data: Vec<f32> = vec![0.1, -3.5, f32::MIN_POSITIVE, 7.0, 1e-30, 0.0];
        let r = RasterFile::new(1, 3, 2, data).unwrap();
        write_raster(&p, &r).unwrap();
        let back = read_raster(&p).unwrap();
        assert_eq!(
            back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            r.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back, r);
    }

    #[test]
    fn truncated_reports_byte_counts() {
        let bytes = RasterFile::new(2, 2, 1, vec![0.0; 4]).unwrap().encode();
        let msg = decode_raster(&bytes[..30], Path::new("t.sseg")).unwrap_err().to_string();
        assert!(msg.contains("expected 32") && msg.contains("got 30"), "{msg}");
        assert!(decode_raster(&bytes[..10], Path::new("t")).is_err());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = RasterFile::new(1, 1, 1, vec![0.0]).unwrap().encode();
        bytes[1] = b'X';
        let msg = decode_raster(&bytes, Path::new("m")).unwrap_err().to_string();
        assert!(msg.contains("offset 0"), "{msg}");
    }

    #[test]
    fn nan_in_mask_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.sseg");
        write_raster(&p, &RasterFile::new(3, 1, 1, vec![0.5, f32::NAN, 1.0]).unwrap()).unwrap();
        let msg = read_mask_raster(&p).unwrap_err().to_string();
        assert!(msg.contains("NaN") && msg.contains("offset 20"), "{msg}");
    }

    #[test]
    fn image_interleaving() {
        let img = Image::new(2, 1, 2, vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let r = RasterFile::from_image(&img);
        assert_eq!(r.data, vec![1.0, 10.0, 2.0, 20.0]);
        assert_eq!(r.to_image().unwrap(), img);
    }
}
