use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{grow_batch, AugmentConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::LossKind;
use crate::mask::{ensure_same_shape, SoftMask};
use crate::metrics::{default_thresholds, mean_std, threshold_sweep};
use crate::rng::{stream, Purpose};

use super::optim::{AdamState, CosineSchedule};
use super::unet::{backward, forward, init_params, predict, TinyUNetConfig};
use super::Tensor;

/// One training or validation case: input image and fused soft label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub label: SoftMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Epochs over which the learning rate ramps linearly up to the cosine curve.
    pub warmup_epochs: usize,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 8,
            seed: 0,
            loss: LossKind::CrossEntropy,
            lr_start: 1e-2,
            lr_end: 1e-4,
            warmup_epochs: 4,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        CosineSchedule::new(self.lr_start, self.lr_end, 1).map(|_| ())
    }
}

/// Calibration-oriented statistics of a model on a set of cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub loss: f64,
    /// Mean |p - g| over all pixels.
    pub mean_abs_error: f64,
    /// Mean min(p, 1 - p) over pixels whose label is at least one vote (g >= 1/N).
    pub saturation: f64,
    /// Mean over thresholds of the case-averaged sweep DSC.
    pub dsc_mean: f64,
    /// Population std over thresholds of the case-averaged sweep DSC.
    pub dsc_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val: Option<ValidationStats>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Vec<Tensor>,
    pub history: Vec<EpochRecord>,
}

pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    model: &TinyUNetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(train_set, val_set, model, cfg, |_| {})
}

/// Train from scratch, calling `on_epoch` after every epoch.
///
/// Deterministic for a given seed: initialisation, batch order and
/// augmentation each draw from their own stream.
pub fn train_with(
    train_set: &[Sample],
    val_set: &[Sample],
    model: &TinyUNetConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        ensure_same_shape(s.image.shape(), s.label.shape(), &format!("case {} image vs label", s.id))?;
        model.check_input(s.image.width(), s.image.height(), s.image.channels())?;
    }

    let mut params = init_params(model, &mut stream(cfg.seed, Purpose::Init))?;
    let mut batch_rng = stream(cfg.seed, Purpose::Batching);
    let mut aug_rng = stream(cfg.seed, Purpose::Augment);
    let mut adam = AdamState::new(&params);

    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches_per_epoch;
    let schedule = CosineSchedule::new(cfg.lr_start, cfg.lr_end, total.saturating_sub(1))?;
    let warmup = cfg.warmup_epochs * batches_per_epoch;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut batch_rng);
        let mut loss_sum = 0.0;
        let mut lr = cfg.lr_start;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Image, SoftMask)> =
                chunk.iter().map(|&i| (train_set[i].image.clone(), train_set[i].label.clone())).collect();
            let batch = grow_batch(&batch, &cfg.augment, &mut aug_rng)?;

            let scale = 1.0 / batch.len() as f64;
            let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
            let mut batch_loss = 0.0;
            for (image, label) in &batch {
                let (p, tape) = forward(model, &params, image)?;
                let loss = cfg.loss.evaluate(&p, label)?;
                if !loss.value.is_finite() {
                    return Err(Error::NonFinite { epoch, step });
                }
                batch_loss += loss.value * scale;
                let g = backward(&tape, &loss)?;
                for (acc, g) in grads.iter_mut().zip(g.params()) {
                    acc.iter_mut().zip(g).for_each(|(a, g)| *a += g * scale);
                }
            }
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { epoch, step });
            }
            lr = schedule.lr(step)? * warmup_factor(step, warmup);
            adam.step(&mut params, &grads, lr)?;
            loss_sum += batch_loss;
            step += 1;
        }
        let val = if val_set.is_empty() { None } else { Some(evaluate(model, &params, val_set, cfg.loss)?) };
        let record = EpochRecord { epoch, lr, train_loss: loss_sum / batches_per_epoch as f64, val };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { params, history })
}

/// Multiplier `min(1, (step + 1) / warmup)`; 1 when `warmup` is 0.
pub fn warmup_factor(step: usize, warmup: usize) -> f64 {
    if step >= warmup {
        1.0
    } else {
        (step + 1) as f64 / warmup as f64
    }
}

/// Loss, calibration and threshold-sweep statistics over `cases`.
pub fn evaluate(model: &TinyUNetConfig, params: &[Tensor], cases: &[Sample], loss: LossKind) -> Result<ValidationStats> {
    let preds = cases
        .iter()
        .map(|s| predict(model, params, &s.image))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<&SoftMask> = cases.iter().map(|s| &s.label).collect();
    calibration_stats(&preds, &labels, loss)
}

pub fn calibration_stats(preds: &[SoftMask], labels: &[&SoftMask], loss: LossKind) -> Result<ValidationStats> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::InvalidArgument("calibration stats need matching, non-empty case lists".into()));
    }
    let thresholds = default_thresholds();
    let mut loss_sum = 0.0;
    let (mut abs_sum, mut abs_n) = (0.0, 0usize);
    let (mut sat_sum, mut sat_n) = (0.0, 0usize);
    let mut dsc_per_tau = vec![0.0; thresholds.len()];
    for (p, g) in preds.iter().zip(labels) {
        loss_sum += loss.evaluate(p, g)?.value;
        let floor = g.annotators().map_or(f64::MIN_POSITIVE, |n| 1.0 / n as f64);
        for (&pv, &gv) in p.values().iter().zip(g.values()) {
            abs_sum += (pv - gv).abs();
            abs_n += 1;
            if gv >= floor {
                sat_sum += pv.min(1.0 - pv);
                sat_n += 1;
            }
        }
        let sweep = threshold_sweep(p, g, &thresholds)?;
        for (acc, row) in dsc_per_tau.iter_mut().zip(&sweep.rows) {
            *acc += row.dsc / preds.len() as f64;
        }
    }
    let dsc = mean_std(&dsc_per_tau).expect("nine thresholds");
    Ok(ValidationStats {
        loss: loss_sum / preds.len() as f64,
        mean_abs_error: abs_sum / abs_n as f64,
        saturation: if sat_n == 0 { 0.0 } else { sat_sum / sat_n as f64 },
        dsc_mean: dsc.mean,
        dsc_std: dsc.std,
    })
}
