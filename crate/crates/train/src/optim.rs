//! AdamW, learning-rate schedules, gradient clipping and parameter EMA.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LrSchedule {
    /// Linear ramp from `init` to `peak` over `warmup_steps`, then cosine
    /// decay to `final_lr` at the last step.
    Cosine {
        warmup_steps: usize,
        init: f64,
        peak: f64,
        final_lr: f64,
    },
    /// `values[k]` applies from step `boundaries[k-1]` (inclusive) onwards;
    /// `values` has one more entry than `boundaries`.
    Piecewise {
        boundaries: Vec<usize>,
        values: Vec<f64>,
    },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Cosine {
            warmup_steps: 200,
            init: 1e-6,
            peak: 2e-4,
            final_lr: 1e-6,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LrSchedule::Cosine {
                init,
                peak,
                final_lr,
                ..
            } => [*init, *peak, *final_lr].iter().all(|v| *v > 0.0 && v.is_finite()),
            LrSchedule::Piecewise { boundaries, values } => {
                values.len() == boundaries.len() + 1
                    && values.iter().all(|v| *v > 0.0 && v.is_finite())
                    && boundaries.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(TrainError::Invalid(format!("bad learning-rate schedule {self:?}")))
        }
    }

    /// Rate for optimizer step `step` of `total` (0-based).
    pub fn rate(&self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Cosine {
                warmup_steps,
                init,
                peak,
                final_lr,
            } => {
                if step < *warmup_steps {
                    return init + (peak - init) * (step + 1) as f64 / *warmup_steps as f64;
                }
                let span = total.saturating_sub(*warmup_steps).max(1);
                let frac = ((step - warmup_steps) as f64 / span as f64).min(1.0);
                final_lr + 0.5 * (peak - final_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
            }
            LrSchedule::Piecewise { boundaries, values } => {
                values[boundaries.iter().take_while(|&&b| step >= b).count()]
            }
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            *p -= lr * (update + self.weight_decay * *p);
        }
    }
}

/// Rescales `grad` to global norm `max_norm` when it is larger. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Exponential moving average of parameters.
///
/// With `warmup` the effective decay at update `k` is
/// `min(decay, (1 + k) / (10 + k))`, so short runs are not dominated by the
/// initial weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Ema {
    pub decay: f64,
    pub warmup: bool,
    pub params: Vec<f64>,
    updates: u64,
}

impl Ema {
    pub fn new(params: &[f64], decay: f64, warmup: bool) -> Self {
        Self {
            decay,
            warmup,
            params: params.to_vec(),
            updates: 0,
        }
    }

    pub fn effective_decay(&self) -> f64 {
        if self.warmup {
            let k = self.updates as f64;
            self.decay.min((1.0 + k) / (10.0 + k))
        } else {
            self.decay
        }
    }

    pub fn update(&mut self, raw: &[f64]) {
        let d = self.effective_decay();
        for (e, &r) in self.params.iter_mut().zip(raw) {
            *e = d * *e + (1.0 - d) * r;
        }
        self.updates += 1;
    }
}
