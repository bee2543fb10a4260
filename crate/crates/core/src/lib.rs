//! Soft-label fusion of multi-annotator segmentation masks, calibration-aware
//! segmentation metrics, and a small from-scratch U-Net trainer used to
//! contrast cross-entropy and dice training.

pub mod augment;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod image;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use image::Image;
pub use mask::{AnnotationSet, BinaryMask, SoftMask};
