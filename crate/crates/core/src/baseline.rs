//! Baseline flow matching targets and the Gaussian prior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kabsch::kabsch_rotation;
use crate::linalg::Coords;
use crate::random::{standard_normal_coords, stream_rng};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Straight line from noise to the data sample as given.
    CondOT,
    /// Straight line to the data sample rotated onto the noise.
    KabschOT,
}

/// A coupled pair with its straight-line velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePair<T> {
    pub x0: Coords<T>,
    /// The data endpoint actually used (rotated for `KabschOT`).
    pub x1: Coords<T>,
    pub velocity: Coords<T>,
}

impl<T: Real> BaselinePair<T> {
    /// Point on the chord at time `t`.
    pub fn interpolate(&self, t: T) -> Coords<T> {
        self.x0.lincomb(T::one() - t, &self.x1, t)
    }
}

pub fn baseline_target<T: Real>(
    kind: BaselineKind,
    x0: &Coords<T>,
    x1: &Coords<T>,
) -> Result<BaselinePair<T>> {
    if x0.len() != x1.len() {
        return Err(Error::LengthMismatch {
            what: "baseline endpoints",
            left: x0.len(),
            right: x1.len(),
        });
    }
    let x1 = match kind {
        BaselineKind::CondOT => x1.clone(),
        BaselineKind::KabschOT => {
            let r = kabsch_rotation(x0, x1)?;
            x1.rotate(&r)
        }
    };
    let velocity = &x1 - x0;
    Ok(BaselinePair {
        x0: x0.clone(),
        x1,
        velocity,
    })
}

/// Centered standard normal coordinates from generator `rng`.
pub fn sample_prior_with<T: Real, R: Rng + ?Sized>(n_atoms: usize, rng: &mut R) -> Coords<T> {
    standard_normal_coords(n_atoms, rng).centered()
}

/// Centered standard normal coordinates for `n_atoms` atoms, reproducible per seed.
pub fn sample_prior<T: Real>(n_atoms: usize, seed: u64) -> Result<Coords<T>> {
    if n_atoms == 0 {
        return Err(Error::InvalidArgument(
            "prior needs at least one atom".into(),
        ));
    }
    Ok(sample_prior_with(n_atoms, &mut stream_rng(seed, "prior")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_endpoints_have_zero_velocity() {
        let x = sample_prior::<f64>(6, 1).unwrap();
        for kind in [BaselineKind::CondOT, BaselineKind::KabschOT] {
            let pair = baseline_target(kind, &x, &x).unwrap();
            assert!(pair.velocity.max_abs_diff(&Coords::zeros(6)) < 1e-12);
        }
    }

    #[test]
    fn cond_ot_velocity_is_the_difference() {
        let a = Coords::new(vec![[1.0, 2.0, 3.0]]);
        let b = Coords::new(vec![[0.5, -1.0, 4.0]]);
        let pair = baseline_target(BaselineKind::CondOT, &a, &b).unwrap();
        assert_eq!(pair.velocity, Coords::new(vec![[-0.5, -3.0, 1.0]]));
        assert_eq!(pair.interpolate(1.0), b);
    }

    #[test]
    fn kabsch_never_increases_transport_cost() {
        for seed in 0..20 {
            let x0 = sample_prior::<f64>(7, seed).unwrap();
            let x1 = sample_prior::<f64>(7, 1000 + seed).unwrap().scale(2.0);
            let cond = baseline_target(BaselineKind::CondOT, &x0, &x1).unwrap();
            let kab = baseline_target(BaselineKind::KabschOT, &x0, &x1).unwrap();
            assert!(kab.velocity.norm_sq() <= cond.velocity.norm_sq() + 1e-12);
        }
    }

    #[test]
    fn prior_is_reproducible_and_centered() {
        let a = sample_prior::<f64>(9, 42).unwrap();
        let b = sample_prior::<f64>(9, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_prior::<f64>(9, 43).unwrap());
        assert!(a.centroid().iter().all(|c| c.abs() < 1e-14));
        assert!(sample_prior::<f64>(0, 1).is_err());
    }
}
