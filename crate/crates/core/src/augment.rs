//! Online geometric augmentation and the growing-batch regime.
//!
//! A sample's translation, rotation, zoom and flips are composed into one
//! affine map about the image centre and applied in a single bilinear
//! resampling pass, identically to the image and its soft label.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::Image;
use crate::mask::{ensure_same_shape, SoftMask};

/// Ranges and probabilities of the random transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Maximum |translation| as a fraction of width/height.
    pub translate: f64,
    /// Maximum |rotation| in degrees.
    pub rotate_deg: f64,
    /// Maximum |zoom - 1|.
    pub zoom: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true, translate: 0.10, rotate_deg: 15.0, zoom: 0.10, hflip_prob: 0.5, vflip_prob: 0.5 }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub tx: f64,
    pub ty: f64,
    pub angle_deg: f64,
    pub zoom: f64,
    pub hflip: bool,
    pub vflip: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { tx: 0.0, ty: 0.0, angle_deg: 0.0, zoom: 1.0, hflip: false, vflip: false }
    }
}

/// Draw transform parameters with the default ranges and the given
/// vertical-flip probability.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, vflip_prob: f64) -> AugmentParams {
    sample_with(rng, &AugmentConfig { vflip_prob, ..AugmentConfig::default() })
}

/// Draw transform parameters. Always consumes the same number of draws.
pub fn sample_with<R: Rng + ?Sized>(rng: &mut R, cfg: &AugmentConfig) -> AugmentParams {
    let mut sym = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { rng.gen::<f64>() * 0.0 };
    let tx = sym(cfg.translate);
    let ty = sym(cfg.translate);
    let angle_deg = sym(cfg.rotate_deg);
    let zoom = 1.0 + sym(cfg.zoom);
    let hflip = rng.gen::<f64>() < cfg.hflip_prob;
    let vflip = rng.gen::<f64>() < cfg.vflip_prob;
    AugmentParams { tx, ty, angle_deg, zoom, hflip, vflip }
}

/// Maps an output pixel back to the source coordinate it samples.
struct InverseMap {
    cx: f64,
    cy: f64,
    shift_x: f64,
    shift_y: f64,
    cos: f64,
    sin: f64,
    inv_zoom: f64,
    fx: f64,
    fy: f64,
}

impl InverseMap {
    fn new(w: usize, h: usize, p: &AugmentParams) -> Self {
        let theta = p.angle_deg.to_radians();
        Self {
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            shift_x: p.tx * w as f64,
            shift_y: p.ty * h as f64,
            cos: theta.cos(),
            sin: theta.sin(),
            inv_zoom: 1.0 / p.zoom,
            fx: if p.hflip { -1.0 } else { 1.0 },
            fy: if p.vflip { -1.0 } else { 1.0 },
        }
    }

    // forward: u -> flip(zoom * rot(u + t)); inverted step by step
    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        let u = (x as f64 - self.cx) * self.fx * self.inv_zoom;
        let v = (y as f64 - self.cy) * self.fy * self.inv_zoom;
        let ru = self.cos * u + self.sin * v;
        let rv = -self.sin * u + self.cos * v;
        (ru - self.shift_x + self.cx, rv - self.shift_y + self.cy)
    }
}

fn bilinear(plane: &[f64], w: usize, h: usize, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let (ax, ay) = (sx - x0, sy - y0);
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            plane[yi as usize * w + xi as usize]
        }
    };
    let top = at(x0, y0) * (1.0 - ax) + at(x0 + 1.0, y0) * ax;
    let bottom = at(x0, y0 + 1.0) * (1.0 - ax) + at(x0 + 1.0, y0 + 1.0) * ax;
    top * (1.0 - ay) + bottom * ay
}

/// Warp `image` and `label` with the same transform. Out-of-bounds samples
/// read as 0; label values are clamped to `[0, 1]`.
pub fn apply(image: &Image, label: &SoftMask, params: &AugmentParams) -> Result<(Image, SoftMask)> {
    ensure_same_shape(image.shape(), label.shape(), "augment image vs label")?;
    let (w, h) = image.shape();
    let map = InverseMap::new(w, h, params);
    let coords: Vec<(f64, f64)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| map.source(x, y)).collect();

    let mut data = Vec::with_capacity(image.data().len());
    for c in 0..image.channels() {
        let plane = image.plane(c);
        data.extend(coords.iter().map(|&(sx, sy)| bilinear(plane, w, h, sx, sy)));
    }
    let lab = coords
        .iter()
        .map(|&(sx, sy)| bilinear(label.values(), w, h, sx, sy).clamp(0.0, 1.0))
        .collect();
    Ok((Image::from_planes_unchecked(w, h, image.channels(), data), SoftMask::new(w, h, lab)?))
}

/// Originals first, then three augmented copies of each original in order.
pub fn grow_batch<R: Rng + ?Sized>(
    batch: &[(Image, SoftMask)],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<(Image, SoftMask)>> {
    if !cfg.enabled {
        return Ok(batch.to_vec());
    }
    let mut out = Vec::with_capacity(batch.len() * 4);
    out.extend_from_slice(batch);
    for (image, label) in batch {
        for _ in 0..3 {
            let p = sample_with(rng, cfg);
            out.push(apply(image, label, &p)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn pattern(w: usize, h: usize) -> (Image, SoftMask) {
        let vals: Vec<f64> = (0..w * h).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        (Image::new(w, h, 1, vals.clone()).unwrap(), SoftMask::new(w, h, vals).unwrap())
    }

    #[test]
    fn sampled_ranges_and_rates() {
        let mut rng = stream(1, Purpose::Augment);
        let n = 100_000;
        let mut hflips = 0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..n {
            let p = sample_params(&mut rng, 0.5);
            lo = lo.min(p.angle_deg);
            hi = hi.max(p.angle_deg);
            assert!(p.tx.abs() <= 0.10 && p.ty.abs() <= 0.10);
            assert!((0.90..=1.10).contains(&p.zoom));
            hflips += p.hflip as usize;
        }
        assert!(lo >= -15.0 && hi <= 15.0);
        assert!(lo < -14.9 && hi > 14.9);
        assert!((hflips as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn zero_vflip_prob() {
        let mut rng = stream(2, Purpose::Augment);
        assert!((0..10_000).all(|_| !sample_params(&mut rng, 0.0).vflip));
    }

    #[test]
    fn same_seed_same_params() {
        let draw = || {
            let mut rng = stream(5, Purpose::Augment);
            (0..20).map(|_| sample_params(&mut rng, 0.5)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn identity_is_exact() {
        let (img, lab) = pattern(5, 4);
        let (i2, l2) = apply(&img, &lab, &AugmentParams::identity()).unwrap();
        assert_eq!(i2, img);
        assert_eq!(l2, lab);
    }

    #[test]
    fn double_hflip_is_identity() {
        let (img, lab) = pattern(6, 5);
        let flip = AugmentParams { hflip: true, ..AugmentParams::identity() };
        let (i1, l1) = apply(&img, &lab, &flip).unwrap();
        assert_ne!(i1, img);
        assert_eq!(i1.plane(0)[0], img.plane(0)[5]);
        let (i2, l2) = apply(&i1, &l1, &flip).unwrap();
        for (a, b) in i2.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in l2.values().iter().zip(lab.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn quarter_turn_permutes_pixels() {
        // Asymmetric 4x4 pattern; value encodes its own coordinates.
        let w = 4;
        let vals: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let img = Image::new(w, w, 1, vals.clone()).unwrap();
        let lab = SoftMask::new(w, w, vals.clone()).unwrap();
        let rot = AugmentParams { angle_deg: 90.0, ..AugmentParams::identity() };
        let (out, out_lab) = apply(&img, &lab, &rot).unwrap();
        // Output (x, y) samples source rot^-1 about centre (1.5, 1.5):
        // u = x - 1.5, v = y - 1.5 -> source (v + 1.5, -u + 1.5) = (y, 3 - x)
        for y in 0..w {
            for x in 0..w {
                let expected = vals[(3 - x) * w + y];
                assert!((out.plane(0)[y * w + x] - expected).abs() < 1e-12, "({x},{y})");
                assert!((out_lab.values()[y * w + x] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn preserves_label_range_and_shape() {
        let mut rng = stream(3, Purpose::Augment);
        let (img, lab) = pattern(8, 8);
        for _ in 0..10_000 {
            let p = sample_params(&mut rng, 0.5);
            let (i2, l2) = apply(&img, &lab, &p).unwrap();
            assert_eq!(i2.shape(), img.shape());
            assert!(l2.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let img = Image::zeros(4, 4, 1).unwrap();
        let lab = SoftMask::constant(4, 2, 0.0).unwrap();
        assert!(apply(&img, &lab, &AugmentParams::identity()).is_err());
    }

    #[test]
    fn grow_batch_layout() {
        let batch = vec![pattern(4, 4), pattern(4, 4)];
        let mut rng = stream(4, Purpose::Augment);
        let grown = grow_batch(&batch, &AugmentConfig::default(), &mut rng).unwrap();
        assert_eq!(grown.len(), 8);
        assert_eq!(&grown[..2], &batch[..]);
        let off = grow_batch(&batch, &AugmentConfig::disabled(), &mut rng).unwrap();
        assert_eq!(off, batch);
    }
}
