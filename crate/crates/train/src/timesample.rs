//! Training-time distributions over `t ∈ [0, 1]`.

use avgflow_core::random::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TimeSampler {
    Uniform,
    /// Density proportional to `exp(λ t)` on `[0, 1]`.
    Exponential { lambda: f64 },
}

impl TimeSampler {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeSampler::Exponential { lambda } if lambda == 0.0 || !lambda.is_finite() => Err(
                TrainError::Invalid("exponential t-sampler needs a finite nonzero lambda".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Inverse-CDF draw `t = log(1 + u (e^λ - 1)) / λ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            TimeSampler::Uniform => u,
            TimeSampler::Exponential { lambda } => {
                ((u * lambda.exp_m1()).ln_1p() / lambda).clamp(0.0, 1.0)
            }
        }
    }

    /// `P(T ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match *self {
            TimeSampler::Uniform => t,
            TimeSampler::Exponential { lambda } => (lambda * t).exp_m1() / lambda.exp_m1(),
        }
    }
}

/// One draw from the `t-sampling` stream of `seed`.
pub fn sample_t(sampler: TimeSampler, seed: u64) -> f64 {
    sampler.sample(&mut stream_rng(seed, "t-sampling"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        let s = TimeSampler::Exponential { lambda: -1.2 };
        for u in [0.0, 0.1, 0.5, 0.93, 1.0] {
            assert!((s.cdf(s.quantile(u)) - u).abs() < 1e-14);
        }
        assert_eq!(s.quantile(0.0), 0.0);
        assert_eq!(s.quantile(1.0), 1.0);
    }

    #[test]
    fn zero_lambda_is_rejected() {
        assert!(TimeSampler::Exponential { lambda: 0.0 }.validate().is_err());
        assert!(TimeSampler::Uniform.validate().is_ok());
    }
}
