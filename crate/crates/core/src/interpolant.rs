//! Training-time interpolants between prior noise and data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Coords;
use crate::ode::{integrate, Solver};
use crate::scalar::Real;
use crate::so3::Quadrature;
use crate::target::{avg_flow_target_with, ConformerEnsemble, FlowQuery, MetricSpec};

pub const DEFAULT_INTEGRATION_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterpolantKind {
    /// `x_t = (1 - t) x0 + t x1`.
    Linear,
    /// Euler integration of the averaged flow from `x0` up to `t`.
    Integrated { steps: usize },
}

impl Default for InterpolantKind {
    fn default() -> Self {
        InterpolantKind::Integrated {
            steps: DEFAULT_INTEGRATION_STEPS,
        }
    }
}

impl InterpolantKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            InterpolantKind::Integrated { steps: 0 } => Err(Error::InvalidArgument(
                "integrated interpolant needs steps >= 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// `(1 - t) x0 + t x1`, so `t = 0` is noise and `t = 1` is data.
pub fn linear_interpolant<T: Real>(x0: &Coords<T>, x1: &Coords<T>, t: T) -> Result<Coords<T>> {
    if x0.len() != x1.len() {
        return Err(Error::LengthMismatch {
            what: "interpolant endpoints",
            left: x0.len(),
            right: x1.len(),
        });
    }
    Ok(x0.lincomb(T::one() - t, x1, t))
}

/// Integrates `dx/dτ = u_τ(x)` from `τ = 0` to `t` with `steps` Euler steps.
pub fn integration_interpolant<T: Real>(
    x0: &Coords<T>,
    ensemble: &ConformerEnsemble<T>,
    metric: &MetricSpec<T>,
    t: T,
    steps: usize,
) -> Result<Coords<T>> {
    integration_interpolant_with(
        x0,
        ensemble,
        metric,
        t,
        steps,
        Solver::Euler,
        &Quadrature::default(),
    )
}

/// [`integration_interpolant`] with an explicit solver and quadrature.
pub fn integration_interpolant_with<T: Real>(
    x0: &Coords<T>,
    ensemble: &ConformerEnsemble<T>,
    metric: &MetricSpec<T>,
    t: T,
    steps: usize,
    solver: Solver,
    quadrature: &Quadrature,
) -> Result<Coords<T>> {
    if !(t >= T::zero() && t < T::one()) {
        return Err(Error::TimeOutOfRange(t.to_f64_lossy()));
    }
    let traj = integrate(
        solver,
        x0,
        T::zero(),
        t,
        steps,
        false,
        |x: &Coords<T>, tau| {
            let q = FlowQuery::new(tau, x.clone())?;
            avg_flow_target_with(&q, ensemble, metric, quadrature).map(|r| r.velocity)
        },
    )?;
    Ok(traj.last().clone())
}
