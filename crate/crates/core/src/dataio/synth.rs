//! Synthetic multi-annotator segmentation data.
//!
//! Each case has a latent field: the radial signed distance (pixels,
//! positive inside) to the boundary of a random star-shaped object, either
//! an ellipse or a blob with a few random low-order harmonics. The image is
//! a soft-edged rendering of the object plus Gaussian noise. Annotator `k`
//! marks `latent + b_k + n_k(x, y) >= 0`, where `b_k` is a per-case bias and
//! `n_k` a smooth random field, so annotators agree in the interior and
//! disagree along the boundary.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{fuse_mean, AnnotationSet, BinaryMask};
use crate::rng::{stream_for, Purpose, StreamRng};

use super::{write_pgm, write_raster, CaseEntry, Manifest, RasterFile, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Ellipse,
    Blob,
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipse" => Ok(Self::Ellipse),
            "blob" => Ok(Self::Blob),
            other => Err(Error::InvalidArgument(format!("unknown shape family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Side length in pixels (square images).
    pub size: usize,
    pub cases: usize,
    pub annotators: usize,
    /// The last `val_cases` cases are tagged for validation.
    pub val_cases: usize,
    pub family: ShapeFamily,
    /// Std of each annotator's smooth boundary perturbation, in pixels.
    pub boundary_noise: f64,
    /// Std of each annotator's per-case threshold offset, in pixels.
    pub bias_scale: f64,
    /// Std of additive image noise.
    pub image_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 32,
            cases: 48,
            annotators: 5,
            val_cases: 8,
            family: ShapeFamily::Ellipse,
            boundary_noise: 0.75,
            bias_scale: 1.5,
            image_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 || self.cases == 0 || self.annotators == 0 {
            return Err(Error::InvalidArgument(format!(
                "synthetic config needs size >= 4, cases >= 1, annotators >= 1; got {}, {}, {}",
                self.size, self.cases, self.annotators
            )));
        }
        if self.val_cases > self.cases {
            return Err(Error::InvalidArgument(format!(
                "{} validation cases requested out of {}",
                self.val_cases, self.cases
            )));
        }
        let scales = [self.boundary_noise, self.bias_scale, self.image_noise];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument("noise scales must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn split_of(&self, index: usize) -> Split {
        if index >= self.cases - self.val_cases {
            Split::Val
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub id: String,
    pub image: Image,
    pub annotations: AnnotationSet,
    /// Radial signed distance to the object boundary, row-major.
    pub latent: Vec<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub cases: usize,
    /// Mean number of distinct fused-label values per case.
    pub mean_distinct_levels: f64,
}

fn gaussian(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Boundary radius as a function of polar angle.
enum Outline {
    Ellipse { a: f64, b: f64, phi: f64 },
    Blob { r0: f64, harmonics: Vec<(f64, f64)> },
}

impl Outline {
    fn radius(&self, theta: f64) -> f64 {
        match self {
            Outline::Ellipse { a, b, phi } => {
                let (s, c) = (theta - phi).sin_cos();
                1.0 / ((c / a).powi(2) + (s / b).powi(2)).sqrt()
            }
            Outline::Blob { r0, harmonics } => {
                let wobble: f64 = harmonics
                    .iter()
                    .enumerate()
                    .map(|(i, (amp, phase))| amp * ((i + 2) as f64 * theta + phase).cos())
                    .sum();
                r0 * (1.0 + wobble)
            }
        }
    }
}

/// Smooth zero-mean, unit-variance random field: three random plane waves.
struct SmoothField {
    waves: [(f64, f64, f64); 3],
}

impl SmoothField {
    fn sample(rng: &mut StreamRng) -> Self {
        let mut wave = || (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(0.0..2.0 * PI));
        Self { waves: [wave(), wave(), wave()] }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|(fx, fy, ph)| (fx * x + fy * y + ph).cos()).sum::<f64>() / 1.5f64.sqrt()
    }
}

/// Generate case `index` in memory. Depends only on `config` and `index`.
pub fn synthesize_case(config: &SynthConfig, index: usize) -> Result<SynthCase> {
    config.validate()?;
    let s = config.size;
    let sf = s as f64;
    let mut rng = stream_for(config.seed, Purpose::Synth, index as u32);

    let cx = rng.gen_range(0.35..0.65) * sf;
    let cy = rng.gen_range(0.35..0.65) * sf;
    let outline = match config.family {
        ShapeFamily::Ellipse => Outline::Ellipse {
            a: rng.gen_range(0.15..0.28) * sf,
            b: rng.gen_range(0.15..0.28) * sf,
            phi: rng.gen_range(0.0..PI),
        },
        ShapeFamily::Blob => Outline::Blob {
            r0: rng.gen_range(0.18..0.28) * sf,
            harmonics: (0..3).map(|_| (rng.gen_range(-0.12..0.12), rng.gen_range(0.0..2.0 * PI))).collect(),
        },
    };

    let mut latent = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let dist = dx.hypot(dy);
            latent.push(outline.radius(dy.atan2(dx)) - dist);
        }
    }

    // Stored as f32 on disk; quantise now so in-memory and on-disk data agree.
    let pixels: Vec<f64> = latent
        .iter()
        .map(|&l| {
            let v = 0.2 + 0.6 / (1.0 + (-l / 0.7).exp()) + config.image_noise * gaussian(&mut rng);
            v as f32 as f64
        })
        .collect();
    let image = Image::new(s, s, 1, pixels)?;

    let mut masks = Vec::with_capacity(config.annotators);
    for _ in 0..config.annotators {
        let bias = config.bias_scale * gaussian(&mut rng);
        let field = SmoothField::sample(&mut rng);
        let values = (0..s * s)
            .map(|i| {
                let (x, y) = ((i % s) as f64, (i / s) as f64);
                (latent[i] + bias + config.boundary_noise * field.at(x, y) >= 0.0) as u8
            })
            .collect();
        masks.push(BinaryMask::new(s, s, values)?);
    }

    Ok(SynthCase {
        id: format!("case_{index:03}"),
        image,
        annotations: AnnotationSet::new(masks)?,
        latent,
        split: config.split_of(index),
    })
}

fn distinct_levels(case: &SynthCase) -> usize {
    fuse_mean(&case.annotations).values().iter().map(|v| v.to_bits()).collect::<BTreeSet<_>>().len()
}

/// Write the dataset and its `manifest.json` under `out_dir`.
///
/// Layout: `manifest.json`, `cases/<id>/image.sseg`, `cases/<id>/ann_<k>.pgm`.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<SynthSummary> {
    config.validate()?;
    let cases: Vec<SynthCase> =
        (0..config.cases).into_par_iter().map(|i| synthesize_case(config, i)).collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(cases.len());
    for case in &cases {
        let rel_dir = PathBuf::from("cases").join(&case.id);
        let dir = out_dir.join(&rel_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let image_rel = rel_dir.join("image.sseg");
        write_raster(&out_dir.join(&image_rel), &RasterFile::from_image(&case.image))?;
        let mut annotations = Vec::with_capacity(config.annotators);
        for (k, mask) in case.annotations.iter().enumerate() {
            let rel = rel_dir.join(format!("ann_{k}.pgm"));
            write_pgm(&out_dir.join(&rel), mask)?;
            annotations.push(rel);
        }
        entries.push(CaseEntry { id: case.id.clone(), image: image_rel, annotations, split: Some(case.split) });
    }

    let manifest_path = out_dir.join("manifest.json");
    Manifest { version: 1, seed: Some(config.seed), cases: entries }.save(&manifest_path)?;

    let mean_distinct_levels = cases.iter().map(distinct_levels).sum::<usize>() as f64 / cases.len() as f64;
    Ok(SynthSummary { manifest: manifest_path, cases: cases.len(), mean_distinct_levels })
}
