//! Fixed-step integration of `dx/dt = v(x, t)` and trajectory geometry.
//!
//! The same kernel drives the training-time integration interpolant and the
//! samplers, so both produce bit-identical states at equal discretizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Coords;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Euler,
    Midpoint,
}

/// Ordered `(t, x)` states produced by an integrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Coords<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &Coords<T> {
        &self.states[0]
    }

    pub fn last(&self) -> &Coords<T> {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    /// Long-format CSV: `time_index,t,atom,x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_index,t,atom,x,y,z\n");
        for (k, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            for (i, r) in s.rows().iter().enumerate() {
                out.push_str(&format!("{k},{t},{i},{},{},{}\n", r[0], r[1], r[2]));
            }
        }
        out
    }
}

/// Integrates from `t0` to `t1` in `steps` uniform steps.
///
/// Step `j` starts at `t0 + j·dt` with `dt = (t1 - t0) / steps`; the recorded
/// final time is exactly `t1`. When `record` is false only the endpoints are kept.
pub fn integrate<T, E, F>(
    solver: Solver,
    x0: &Coords<T>,
    t0: T,
    t1: T,
    steps: usize,
    record: bool,
    mut field: F,
) -> std::result::Result<Trajectory<T>, E>
where
    T: Real,
    E: From<Error>,
    F: FnMut(&Coords<T>, T) -> std::result::Result<Coords<T>, E>,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("integration needs at least one step".into()).into());
    }
    let dt = (t1 - t0) / T::from_usize_lossy(steps);
    let half = T::lit(0.5);
    let mut x = x0.clone();
    let mut times = vec![t0];
    let mut states = vec![x0.clone()];
    for j in 0..steps {
        let t = t0 + T::from_usize_lossy(j) * dt;
        let v = match solver {
            Solver::Euler => field(&x, t)?,
            Solver::Midpoint => {
                let k1 = field(&x, t)?;
                let mut xm = x.clone();
                xm.axpy(half * dt, &k1);
                field(&xm, t + half * dt)?
            }
        };
        x.axpy(dt, &v);
        if !x.is_finite() {
            return Err(Error::NonFiniteState { step: j }.into());
        }
        if record || j + 1 == steps {
            times.push(if j + 1 == steps { t1 } else { t + dt });
            states.push(x.clone());
        }
    }
    Ok(Trajectory { times, states })
}

/// Straightness measurement of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Straightness {
    /// Mean per-atom distance from the chord over interior states, divided
    /// by the root-mean-square per-atom chord length.
    pub value: f64,
    /// The chord had zero length; `value` is then the unnormalized deviation.
    pub degenerate: bool,
}

/// Deviation of a trajectory from the straight chord between its endpoints.
///
/// At interior time `t` (rescaled to `[0, 1]` over the trajectory's span) the
/// chord point is `(1 - t) x(0) + t x(1)`.
pub fn straightness<T: Real>(traj: &Trajectory<T>) -> Result<Straightness> {
    if traj.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "straightness needs at least 3 states, got {}",
            traj.len()
        )));
    }
    if traj.times.len() != traj.states.len() {
        return Err(Error::LengthMismatch {
            what: "trajectory times vs states",
            left: traj.times.len(),
            right: traj.states.len(),
        });
    }
    let x0 = traj.first();
    let x1 = traj.last();
    let n = x0.len();
    let (ta, tb) = (traj.times[0], *traj.times.last().unwrap());
    let span = tb - ta;
    if !(span > T::zero()) {
        return Err(Error::InvalidArgument(
            "trajectory times must increase".into(),
        ));
    }

    let chord_sq: T = x0
        .rows()
        .iter()
        .zip(x1.rows())
        .map(|(a, b)| (0..3).map(|k| (b[k] - a[k]) * (b[k] - a[k])).sum::<T>())
        .sum::<T>()
        / T::from_usize_lossy(n);
    let chord = chord_sq.sqrt();

    let interior = traj.len() - 2;
    let mut total = T::zero();
    for (t, s) in traj.times[1..traj.len() - 1]
        .iter()
        .zip(&traj.states[1..traj.len() - 1])
    {
        let u = (*t - ta) / span;
        let line = x0.lincomb(T::one() - u, x1, u);
        let mean_dev: T = s
            .rows()
            .iter()
            .zip(line.rows())
            .map(|(p, q)| {
                ((p[0] - q[0]) * (p[0] - q[0])
                    + (p[1] - q[1]) * (p[1] - q[1])
                    + (p[2] - q[2]) * (p[2] - q[2]))
                    .sqrt()
            })
            .sum::<T>()
            / T::from_usize_lossy(n);
        total += mean_dev;
    }
    let mean = total / T::from_usize_lossy(interior);
    if chord > T::zero() {
        Ok(Straightness {
            value: (mean / chord).to_f64_lossy(),
            degenerate: false,
        })
    } else {
        Ok(Straightness {
            value: mean.to_f64_lossy(),
            degenerate: true,
        })
    }
}
