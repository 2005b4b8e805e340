//! Optimal proper-rotation alignment of centered point sets.

use crate::error::{Error, Result};
use crate::linalg::{Coords, Mat3};
use crate::scalar::Real;
use crate::so3::signed_svd;

/// Proper rotation maximizing `tr(Mᵀ R)` for `M = Pᵀ Q`, i.e. minimizing
/// `‖P - Q Rᵀ‖_F`. Always succeeds; the answer is not unique when `M` has
/// rank below two.
fn optimal_rotation<T: Real>(p: &Coords<T>, q: &Coords<T>) -> Result<(Mat3<T>, [T; 3])> {
    let svd = signed_svd(&p.gram(q))?;
    Ok((svd.u * svd.v.transpose(), svd.spectrum.to_array()))
}

/// Kabsch rotation `R` (det +1) minimizing `‖P - Q Rᵀ‖_F`.
///
/// Both inputs are expected to be centered already.
pub fn kabsch_rotation<T: Real>(p: &Coords<T>, q: &Coords<T>) -> Result<Mat3<T>> {
    check_lengths(p, q)?;
    if p.is_empty() {
        return Err(Error::InvalidArgument(
            "kabsch needs at least one atom".into(),
        ));
    }
    let (r, s) = optimal_rotation(p, q)?;
    let tol = T::lit(1e-10) * s[0].max(T::min_positive_value());
    let rank = s.iter().filter(|v| v.abs() > tol).count();
    if rank < 2 {
        return Err(Error::DegenerateCovariance { rank });
    }
    Ok(r)
}

/// RMSD between `a` and `b` after centering both and rotating `b` onto `a`.
pub fn rmsd_kabsch<T: Real>(a: &Coords<T>, b: &Coords<T>) -> Result<T> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Err(Error::InvalidArgument(
            "rmsd needs at least one atom".into(),
        ));
    }
    let (a, b) = (a.centered(), b.centered());
    let (r, _) = optimal_rotation(&a, &b)?;
    let resid = (&a - &b.rotate(&r)).norm_sq();
    Ok((resid / T::from_usize_lossy(a.len())).sqrt())
}

/// `b` centered and rotated onto centered `a`.
pub fn align_onto<T: Real>(a: &Coords<T>, b: &Coords<T>) -> Result<Coords<T>> {
    check_lengths(a, b)?;
    let (a, b) = (a.centered(), b.centered());
    let (r, _) = optimal_rotation(&a, &b)?;
    Ok(b.rotate(&r))
}

fn check_lengths<T: Real>(a: &Coords<T>, b: &Coords<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "atom count",
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{standard_normal_coords, stream_rng, uniform_rotation};

    fn cloud(n: usize, seed: u64) -> Coords<f64> {
        let mut rng = stream_rng(seed, "kabsch");
        standard_normal_coords::<f64, _>(n, &mut rng).centered()
    }

    #[test]
    fn identical_sets_give_identity() {
        let p = cloud(6, 1);
        let r = kabsch_rotation(&p, &p).unwrap();
        assert!(r.max_abs_diff(&Mat3::identity()) < 1e-12);
    }

    #[test]
    fn recovers_a_known_rotation() {
        let p = cloud(7, 2);
        let r0: Mat3<f64> = uniform_rotation(&mut stream_rng(3, "r"));
        // Q = P R0, so P = Q R0ᵀ exactly.
        let q = p.mul_mat(&r0);
        let r = kabsch_rotation(&p, &q).unwrap();
        assert!(r.max_abs_diff(&r0) < 1e-8);
        assert!((&p - &q.rotate(&r)).norm_sq().sqrt() < 1e-8);
        assert!(rmsd_kabsch(&p, &q).unwrap() < 1e-8);
    }

    #[test]
    fn never_returns_a_reflection() {
        let p = cloud(5, 4);
        let mirrored = p.mul_mat(&Mat3::diag([1.0, 1.0, -1.0]));
        let r = kabsch_rotation(&p, &mirrored).unwrap();
        assert!((r.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_covariance_is_rejected() {
        let line = Coords::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert!(matches!(
            kabsch_rotation(&line, &line),
            Err(Error::DegenerateCovariance { rank: 1 })
        ));
        // RMSD is still defined.
        assert!(rmsd_kabsch(&line, &line).unwrap() < 1e-15);
    }

    #[test]
    fn rmsd_ignores_translation_and_rotation() {
        let a = cloud(8, 5);
        let r: Mat3<f64> = uniform_rotation(&mut stream_rng(6, "r"));
        let mut b = a.rotate(&r);
        for row in b.rows_mut() {
            row[0] += 3.0;
            row[2] -= 1.5;
        }
        assert!(rmsd_kabsch(&a, &b).unwrap() < 1e-8);
    }

    #[test]
    fn rmsd_rejects_mismatched_sizes() {
        assert!(rmsd_kabsch(&cloud(3, 7), &cloud(4, 8)).is_err());
    }
}
