//! Training configuration, read from TOML.
//!
//! ```toml
//! objective = "avgflow"            # avgflow | condot | kabschot
//! epochs = 200
//! batch_size = 4
//! samples_per_molecule = 1
//! ema_decay = 0.999
//! ema_warmup = true
//! seed = 0
//! full_ensemble = false            # one conformer per molecule per epoch otherwise
//! val_fraction = 0.1
//! val_probes = 4                   # validation draws per held-out molecule
//! grad_clip = 1.0
//! weight_decay = 0.0
//! workers = 0                      # 0 = all available cores
//! track_field_error = false
//!
//! [interpolant]
//! kind = "integrated"              # or "linear"
//! steps = 20
//!
//! [t_sampler]
//! kind = "uniform"                 # or "exponential" with `lambda = -1.2`
//!
//! [schedule]
//! kind = "cosine"                  # or "piecewise" with `boundaries`, `values`
//! warmup_steps = 200
//! init = 1e-6
//! peak = 2e-4
//! final_lr = 1e-6
//!
//! [model]
//! hidden_width = 32
//! n_layers = 3
//! time_embed_width = 16
//! pe_width = 8
//! use_pair_bias = true
//! ```
//!
//! Every key is optional; missing keys take the values shown.

use avgflow_core::InterpolantKind;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::model::ModelConfig;
use crate::optim::LrSchedule;
use crate::timesample::TimeSampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Regress the closed-form SO(3)-averaged velocity.
    AvgFlow,
    /// Regress `x1 - x0` on the straight line to the (randomly rotated) data.
    CondOT,
    /// Regress `x1 - x0` after rotating the data onto the noise.
    KabschOT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub interpolant: InterpolantKind,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub samples_per_molecule: usize,
    pub ema_decay: f64,
    pub ema_warmup: bool,
    pub seed: u64,
    pub t_sampler: TimeSampler,
    pub full_ensemble: bool,
    pub val_fraction: f64,
    pub val_probes: usize,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub workers: usize,
    pub track_field_error: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::AvgFlow,
            interpolant: InterpolantKind::default(),
            schedule: LrSchedule::default(),
            batch_size: 4,
            epochs: 200,
            samples_per_molecule: 1,
            ema_decay: 0.999,
            ema_warmup: true,
            seed: 0,
            t_sampler: TimeSampler::Uniform,
            full_ensemble: false,
            val_fraction: 0.1,
            val_probes: 4,
            grad_clip: 1.0,
            weight_decay: 0.0,
            workers: 0,
            track_field_error: false,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for reflow and distillation fine-tuning.
    pub fn finetune() -> Self {
        Self {
            t_sampler: TimeSampler::Exponential { lambda: -1.2 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Invalid(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 || self.samples_per_molecule == 0 {
            return bad("batch_size, epochs and samples_per_molecule must be positive");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("ema_decay must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if !(self.grad_clip > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("grad_clip must be positive and weight_decay nonnegative");
        }
        self.interpolant.validate()?;
        self.t_sampler.validate()?;
        self.schedule.validate()?;
        self.model.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self =
            toml::from_str(text).map_err(|e| TrainError::Invalid(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
