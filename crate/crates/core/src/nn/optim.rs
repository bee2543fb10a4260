use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Tensor;

/// Adam with bias correction. Weight decay is fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {i}: param {} / grad {} / state {} values",
                    p.len(),
                    g.len(),
                    self.first[i].len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for (((w, &g), m), v) in p.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn new(lr_start: f64, lr_end: f64, total_steps: usize) -> Result<Self> {
        if !(lr_start > lr_end && lr_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cosine schedule needs lr_start > lr_end > 0, got {lr_start} and {lr_end}"
            )));
        }
        Ok(Self { lr_start, lr_end, total_steps })
    }

    /// 1e-2 annealed to 1e-4.
    pub fn standard(total_steps: usize) -> Self {
        Self { lr_start: 1e-2, lr_end: 1e-4, total_steps }
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        cosine_lr(self, step)
    }
}

pub fn cosine_lr(schedule: &CosineSchedule, step: usize) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} beyond schedule length {}",
            schedule.total_steps
        )));
    }
    if schedule.total_steps == 0 || step == 0 {
        return Ok(schedule.lr_start);
    }
    if step == schedule.total_steps {
        return Ok(schedule.lr_end);
    }
    let progress = step as f64 / schedule.total_steps as f64;
    Ok(schedule.lr_end
        + 0.5 * (schedule.lr_start - schedule.lr_end) * (1.0 + (std::f64::consts::PI * progress).cos()))
}
