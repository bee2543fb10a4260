//! A small U-Net: `depth` encoder levels of conv3x3 + ReLU + 2x2 average
//! pooling, a conv3x3 + ReLU bottleneck, and a mirrored decoder of 2x
//! nearest upsampling, skip concatenation and conv3x3 + ReLU. A 1x1 conv and
//! a sigmoid produce the foreground probability.
//!
//! Level `l` carries `base_channels * 2^l` feature maps; the bottleneck sits
//! at level `depth`.
//!
//! Parameter order: encoder levels (weight, bias) from shallow to deep, the
//! bottleneck, decoder levels from deep to shallow, then the output conv.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::LossValue;
use crate::mask::SoftMask;
use crate::rng::StreamRng;

use super::init::{kaiming_init, xavier_init};
use super::tape::{Gradients, Tape};
use super::Tensor;

const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyUNetConfig {
    pub input_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
}

impl Default for TinyUNetConfig {
    fn default() -> Self {
        Self { input_channels: 1, base_channels: 16, depth: 2 }
    }
}

impl TinyUNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.base_channels == 0 || self.depth == 0 {
            return Err(Error::InvalidArgument(format!(
                "model config needs input_channels, base_channels and depth >= 1, got {self:?}"
            )));
        }
        if self.depth > 16 {
            return Err(Error::InvalidArgument(format!("depth {} is unreasonably deep", self.depth)));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Side lengths must be divisible by this.
    pub fn granule(&self) -> usize {
        1 << self.depth
    }

    pub fn check_input(&self, width: usize, height: usize, channels: usize) -> Result<()> {
        if channels != self.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} input channels, image has {channels}",
                self.input_channels
            )));
        }
        let g = self.granule();
        if width % g != 0 || height % g != 0 {
            let pad = |n: usize| (g - n % g) % g;
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} input is not divisible by {g} (2^depth); pad by {}x{} to {}x{}",
                pad(width),
                pad(height),
                width + pad(width),
                height + pad(height)
            )));
        }
        Ok(())
    }

    /// Shapes of every parameter tensor in canonical order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut conv = |c_out: usize, c_in: usize, k: usize| {
            shapes.push(vec![c_out, c_in, k, k]);
            shapes.push(vec![c_out]);
        };
        let mut c_in = self.input_channels;
        for level in 0..self.depth {
            conv(self.channels(level), c_in, KERNEL);
            c_in = self.channels(level);
        }
        conv(self.channels(self.depth), c_in, KERNEL);
        for level in (0..self.depth).rev() {
            conv(self.channels(level), self.channels(level + 1) + self.channels(level), KERNEL);
        }
        conv(1, self.channels(0), 1);
        shapes
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let c = |l: usize| self.channels(l);
        let k2 = KERNEL * KERNEL;
        let encoder: usize = (0..self.depth)
            .map(|l| {
                let c_in = if l == 0 { self.input_channels } else { c(l - 1) };
                k2 * c_in * c(l) + c(l)
            })
            .sum();
        let bottleneck = k2 * c(self.depth - 1) * c(self.depth) + c(self.depth);
        let decoder: usize = (0..self.depth).map(|l| k2 * (c(l + 1) + c(l)) * c(l) + c(l)).sum();
        encoder + bottleneck + decoder + c(0) + 1
    }
}

/// Kaiming-normal hidden convolutions, Xavier-uniform output layer, zero biases.
pub fn init_params(config: &TinyUNetConfig, rng: &mut StreamRng) -> Result<Vec<Tensor>> {
    config.validate()?;
    let shapes = config.param_shapes();
    let last_weight = shapes.len() - 2;
    shapes
        .into_iter()
        .enumerate()
        .map(|(i, shape)| {
            if shape.len() == 1 {
                return Ok(Tensor::zeros(shape));
            }
            let fan_in = shape[1] * shape[2] * shape[3];
            if i == last_weight {
                let fan_out = shape[0] * shape[2] * shape[3];
                xavier_init(shape, fan_in, fan_out, rng)
            } else {
                kaiming_init(shape, fan_in, rng)
            }
        })
        .collect()
}

pub fn check_params(config: &TinyUNetConfig, params: &[Tensor]) -> Result<()> {
    let shapes = config.param_shapes();
    if shapes.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "model config needs {} parameter tensors, got {}",
            shapes.len(),
            params.len()
        )));
    }
    for (i, (s, p)) in shapes.iter().zip(params).enumerate() {
        if s.as_slice() != p.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {i} has shape {:?}, config expects {s:?}",
                p.shape()
            )));
        }
    }
    Ok(())
}

/// Run the network on one image, returning probabilities and the recorded tape.
pub fn forward(config: &TinyUNetConfig, params: &[Tensor], image: &Image) -> Result<(SoftMask, Tape)> {
    config.validate()?;
    check_params(config, params)?;
    config.check_input(image.width(), image.height(), image.channels())?;
    let (w, h) = image.shape();

    let mut tape = Tape::new(params);
    let mut x = tape.input(Tensor::new(vec![image.channels(), h, w], image.data().to_vec())?)?;
    let mut p = 0;
    let mut skips = Vec::with_capacity(config.depth);
    for _ in 0..config.depth {
        let c = tape.conv(x, p, p + 1)?;
        p += 2;
        let a = tape.relu(c);
        skips.push(a);
        x = tape.avg_pool2(a)?;
    }
    let c = tape.conv(x, p, p + 1)?;
    p += 2;
    x = tape.relu(c);
    for skip in skips.into_iter().rev() {
        let up = tape.upsample2(x);
        let cat = tape.concat(up, skip)?;
        let c = tape.conv(cat, p, p + 1)?;
        p += 2;
        x = tape.relu(c);
    }
    let logits = tape.conv(x, p, p + 1)?;
    let out = tape.sigmoid(logits);
    tape.set_output(out);

    let probs = SoftMask::new(w, h, tape.value(out).values().to_vec())?;
    Ok((probs, tape))
}

pub fn predict(config: &TinyUNetConfig, params: &[Tensor], image: &Image) -> Result<SoftMask> {
    forward(config, params, image).map(|(p, _)| p)
}

/// Gradients of `loss` with respect to every parameter of the tape.
pub fn backward(tape: &Tape, loss: &LossValue) -> Result<Gradients> {
    let out = tape.output().ok_or(Error::EmptyTape)?;
    tape.backward_from(out, &loss.grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::cross_entropy;
    use crate::rng::{stream, Purpose};

    fn image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        use rand::Rng;
        let mut rng = stream(seed, Purpose::Synth);
        Image::new(w, h, c, (0..w * h * c).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn param_count_closed_form() {
        for cfg in [
            TinyUNetConfig::default(),
            TinyUNetConfig { input_channels: 4, base_channels: 3, depth: 3 },
            TinyUNetConfig { input_channels: 2, base_channels: 1, depth: 1 },
        ] {
            let params = init_params(&cfg, &mut stream(0, Purpose::Init)).unwrap();
            let n: usize = params.iter().map(Tensor::len).sum();
            assert_eq!(n, cfg.param_count(), "{cfg:?}");
        }
        // 16-channel, depth 2, one input channel
        let enc = (9 * 16 + 16) + (9 * 16 * 32 + 32);
        let bottleneck = 9 * 32 * 64 + 64;
        let dec = (9 * 96 * 32 + 32) + (9 * 48 * 16 + 16);
        assert_eq!(TinyUNetConfig::default().param_count(), enc + bottleneck + dec + 17);
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let cfg = TinyUNetConfig { base_channels: 4, ..Default::default() };
        let mut params = init_params(&cfg, &mut stream(1, Purpose::Init)).unwrap();
        let n = params.len();
        params[n - 2] = Tensor::zeros(params[n - 2].shape().to_vec());
        let p = predict(&cfg, &params, &image(8, 8, 1, 2)).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn output_shape_matches_input() {
        let cfg = TinyUNetConfig { base_channels: 2, ..Default::default() };
        let params = init_params(&cfg, &mut stream(1, Purpose::Init)).unwrap();
        for s in [32, 64] {
            let p = predict(&cfg, &params, &image(s, s, 1, 3)).unwrap();
            assert_eq!(p.shape(), (s, s));
            assert!(p.values().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let p = predict(&cfg, &params, &image(12, 8, 1, 3)).unwrap();
        assert_eq!(p.shape(), (12, 8));
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let cfg = TinyUNetConfig { base_channels: 4, ..Default::default() };
        let run = || {
            let params = init_params(&cfg, &mut stream(42, Purpose::Init)).unwrap();
            predict(&cfg, &params, &image(16, 16, 1, 5)).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn indivisible_input_names_padding() {
        let cfg = TinyUNetConfig::default();
        let params = init_params(&cfg, &mut stream(0, Purpose::Init)).unwrap();
        let msg = predict(&cfg, &params, &image(30, 32, 1, 0)).unwrap_err().to_string();
        assert!(msg.contains("pad by 2x0 to 32x32"), "{msg}");
        assert!(predict(&cfg, &params, &image(32, 32, 2, 0)).is_err());
    }

    #[test]
    fn mismatched_params_rejected() {
        let cfg = TinyUNetConfig::default();
        let other = TinyUNetConfig { base_channels: 8, ..cfg };
        let params = init_params(&other, &mut stream(0, Purpose::Init)).unwrap();
        assert!(predict(&cfg, &params, &image(8, 8, 1, 0)).is_err());
        assert!(TinyUNetConfig { depth: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn detached_loss_zero_gradients() {
        let cfg = TinyUNetConfig { base_channels: 2, depth: 1, input_channels: 1 };
        let params = init_params(&cfg, &mut stream(0, Purpose::Init)).unwrap();
        let (_, tape) = forward(&cfg, &params, &image(8, 8, 1, 1)).unwrap();
        let g = backward(&tape, &LossValue::detached(0.3, 8, 8)).unwrap();
        assert!(g.params().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_rejected() {
        assert!(matches!(backward(&Tape::default(), &LossValue::detached(0.0, 1, 1)), Err(Error::EmptyTape)));
    }

    #[test]
    fn ce_at_target_is_stationary() {
        let cfg = TinyUNetConfig { base_channels: 2, depth: 1, input_channels: 1 };
        let params = init_params(&cfg, &mut stream(0, Purpose::Init)).unwrap();
        let (p, tape) = forward(&cfg, &params, &image(8, 8, 1, 1)).unwrap();
        let loss = cross_entropy(&p, &p).unwrap();
        let g = backward(&tape, &loss).unwrap();
        assert!(g.params().iter().flatten().all(|v| v.abs() < 1e-12));
    }
}
