//! Fixed-step generation from a vector field.

use avgflow_core::{integrate, Coords, Solver, Trajectory};

use crate::error::{Result, TrainError};
use crate::features::GraphFeatures;
use crate::model::VectorFieldNet;

/// Step counts of the sampler sweep.
pub const STEP_SWEEP: [usize; 8] = [1, 2, 3, 5, 10, 20, 50, 100];

/// Integrates `field` from `t = 0` to `t = 1` in `steps` uniform steps,
/// recording every state.
pub fn sample_with<F>(solver: Solver, x0: &Coords<f64>, steps: usize, field: F) -> Result<Trajectory<f64>>
where
    F: FnMut(&Coords<f64>, f64) -> Result<Coords<f64>>,
{
    integrate::<f64, TrainError, F>(solver, x0, 0.0, 1.0, steps, true, field)
}

pub fn euler_sample(
    net: &VectorFieldNet,
    feats: &GraphFeatures,
    x0: &Coords<f64>,
    steps: usize,
) -> Result<Trajectory<f64>> {
    sample_with(Solver::Euler, x0, steps, |x, t| net.forward(feats, x, t))
}

pub fn midpoint_sample(
    net: &VectorFieldNet,
    feats: &GraphFeatures,
    x0: &Coords<f64>,
    steps: usize,
) -> Result<Trajectory<f64>> {
    sample_with(Solver::Midpoint, x0, steps, |x, t| net.forward(feats, x, t))
}

/// `x0 + v(x0, 0)`: the one-step map of a distilled model.
pub fn one_step(net: &VectorFieldNet, feats: &GraphFeatures, x0: &Coords<f64>) -> Result<Coords<f64>> {
    let v = net.forward(feats, x0, 0.0)?;
    Ok(x0.lincomb(1.0, &v, 1.0))
}
