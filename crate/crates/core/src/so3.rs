//! Closed-form evaluation of `F ↦ log ∫_{SO(3)} exp(tr(Fᵀ R)) dR` and its gradient.
//!
//! The Haar measure is normalized to unit mass, so the log-normalizer vanishes
//! at `F = 0`. Writing `F = U diag(s1, s2, s3) Vᵀ` with `U`, `V` proper rotations
//! (the *signed* SVD), the integral depends on `F` only through `(s1, s2, s3)`
//! and reduces to a one-dimensional integral over `[0, 1]` of products of
//! exponentially scaled Bessel functions `I₀(z) e^{-|z|}`. That integral is
//! evaluated with a fixed-node rule (Gauss-Legendre by default, trapezoid on
//! request); when the exponential decay rate `a = 2 (s1 + s3)` exceeds one the
//! substitution `y = e^{-a x}` is used so the nodes follow the mass.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd3, Mat3};
use crate::scalar::Real;

/// Number of quadrature nodes used by default.
pub const DEFAULT_QUADRATURE_NODES: usize = 512;

/// Decay rate above which the exponential substitution branch is used.
pub const SUBSTITUTION_THRESHOLD: f64 = 1.0;

/// Lower clamp of the decay rate inside the substitution branch.
const MIN_SUBSTITUTION_RATE: f64 = 0.5;

/// Singular values sorted descending with the last one carrying `sign(det F)`.
///
/// Invariant: `s1 ≥ s2 ≥ |s3|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedSpectrum<T> {
    pub s1: T,
    pub s2: T,
    pub s3: T,
}

impl<T: Real> SignedSpectrum<T> {
    pub fn new(s1: T, s2: T, s3: T) -> Self {
        Self { s1, s2, s3 }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.s1, self.s2, self.s3]
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite() && self.s3.is_finite()
    }

    /// True when two singular values (in absolute value) are closer than a
    /// relative `1e-8`; the gradient formula is less accurate there.
    pub fn is_degenerate(&self) -> bool {
        let tol = T::lit(1e-8) * (T::one() + self.s1.abs());
        (self.s1 - self.s2).abs() < tol || (self.s2 - self.s3.abs()).abs() < tol
    }
}

/// Signed SVD `F = U diag(s1, s2, s3) Vᵀ` with `det U = det V = +1`.
#[derive(Clone, Copy, Debug)]
pub struct SignedSvd<T> {
    pub u: Mat3<T>,
    pub spectrum: SignedSpectrum<T>,
    pub v: Mat3<T>,
}

/// Computes the signed SVD of `f`.
///
/// A singular `f` (exactly zero smallest singular value) yields `s3 = +0`.
pub fn signed_svd<T: Real>(f: &Mat3<T>) -> Result<SignedSvd<T>> {
    let svd = svd3(f)?;
    let (mut u, mut v) = (svd.u, svd.v);
    let mut s3 = svd.s[2];
    if u.det() < T::zero() {
        u.set_column(2, u.column(2).map(|x| -x));
        s3 = -s3;
    }
    if v.det() < T::zero() {
        v.set_column(2, v.column(2).map(|x| -x));
        s3 = -s3;
    }
    if s3 == T::zero() {
        s3 = T::zero();
    }
    Ok(SignedSvd {
        u,
        spectrum: SignedSpectrum::new(svd.s[0], svd.s[1], s3),
        v,
    })
}

/// Singular values of `f`, descending, with the smallest one signed by `det(U Vᵀ)`.
pub fn signed_svdvals<T: Real>(f: &Mat3<T>) -> Result<SignedSpectrum<T>> {
    signed_svd(f).map(|s| s.spectrum)
}

/// Exponentially scaled modified Bessel function of order zero, `I₀(x) e^{-|x|}`.
///
/// Polynomial approximations on `|x| ≤ 3.75` and `|x| > 3.75`
/// (absolute error below `2e-7` relative to `I₀(x) e^{-|x|}`).
pub fn bessel0_scaled<T: Real>(x: T) -> T {
    const SMALL: [f64; 7] = [
        1.0,
        3.5156229,
        3.0899424,
        1.2067492,
        0.2659732,
        0.360768e-1,
        0.45813e-2,
    ];
    const LARGE: [f64; 9] = [
        0.39894228,
        0.1328592e-1,
        0.225319e-2,
        -0.157565e-2,
        0.916281e-2,
        -0.2057706e-1,
        0.2635537e-1,
        -0.1647633e-1,
        0.392377e-2,
    ];
    let lim = T::lit(3.75);
    let ax = x.abs();
    if ax <= lim {
        let y = (ax / lim) * (ax / lim);
        horner(&SMALL, y) * (-ax).exp()
    } else {
        horner(&LARGE, lim / ax) / ax.sqrt()
    }
}

#[inline]
fn horner<T: Real>(coeffs: &[f64], x: T) -> T {
    coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Node placement on `[0, 1]` for the one-dimensional factor integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Gauss-Legendre nodes and weights.
    GaussLegendre,
    /// Uniform nodes with trapezoid weights.
    Trapezoid,
}

/// Quadrature settings for the SO(3) normalizer.
///
/// Both rules share the same two branches: uniform coordinates `x` when
/// `a ≤ 1`, and `y = e^{-a x}` otherwise.
#[derive(Clone, Debug)]
pub struct Quadrature {
    rule: QuadratureRule,
    /// `(node, weight)` pairs on `[0, 1]`.
    table: Arc<[(f64, f64)]>,
}

impl Default for Quadrature {
    fn default() -> Self {
        static TABLE: OnceLock<Arc<[(f64, f64)]>> = OnceLock::new();
        Self {
            rule: QuadratureRule::GaussLegendre,
            table: TABLE
                .get_or_init(|| {
                    build_table(QuadratureRule::GaussLegendre, DEFAULT_QUADRATURE_NODES)
                })
                .clone(),
        }
    }
}

impl PartialEq for Quadrature {
    fn eq(&self, other: &Self) -> bool {
        self.rule == other.rule && self.table.len() == other.table.len()
    }
}

fn build_table(rule: QuadratureRule, n: usize) -> Arc<[(f64, f64)]> {
    match rule {
        QuadratureRule::Trapezoid => {
            let h = 1.0 / (n - 1) as f64;
            (0..n)
                .map(|k| {
                    let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
                    (if k == n - 1 { 1.0 } else { k as f64 * h }, w)
                })
                .collect()
        }
        QuadratureRule::GaussLegendre => gauss_legendre(n)
            .into_iter()
            .map(|(x, w)| (0.5 * (1.0 + x), 0.5 * w))
            .collect(),
    }
}

/// Gauss-Legendre nodes on `[-1, 1]` by Newton iteration on `P_n`, ascending.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out[i] = (-z, w);
        out[n - 1 - i] = (z, w);
    }
    out
}

/// Value and gradient of the log-normalizer at a matrix argument.
#[derive(Clone, Copy, Debug)]
pub struct LogcfGrad<T> {
    pub value: T,
    /// `∂/∂F log ∫ exp(tr(Fᵀ R)) dR`, which equals the mean rotation `E[R]`.
    pub grad: Mat3<T>,
    pub spectrum: SignedSpectrum<T>,
    /// Set when singular values nearly coincide.
    pub degenerate: bool,
}

impl Quadrature {
    pub fn new(rule: QuadratureRule, nodes: usize) -> Self {
        assert!(nodes >= 2, "quadrature needs at least two nodes");
        Self {
            rule,
            table: build_table(rule, nodes),
        }
    }

    /// Default rule with a custom node count.
    pub fn with_nodes(nodes: usize) -> Self {
        Self::new(QuadratureRule::GaussLegendre, nodes)
    }

    pub fn nodes(&self) -> usize {
        self.table.len()
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    /// `∫₀¹ (1-2x)^[add_x] I₀((s2-s3)x) I₀((s2+s3)(1-x)) e^{-(s2-s3)x-(s2+s3)(1-x)} e^{-2(s1+s3)x} dx`.
    ///
    /// Dispatches on `a = 2 (s1 + s3)`: substitution branch when `a > 1`,
    /// direct integration in `x` otherwise.
    pub fn factor<T: Real>(&self, add_x: bool, s1: T, s2: T, s3: T) -> T {
        let (plain, weighted) = self.factor_pair(s1, s2, s3);
        if add_x {
            weighted
        } else {
            plain
        }
    }

    /// Both integrals (`add_x = false`, `add_x = true`) from a single pass.
    pub fn factor_pair<T: Real>(&self, s1: T, s2: T, s3: T) -> (T, T) {
        let a = T::lit(2.0) * (s3 + s1);
        if a > T::lit(SUBSTITUTION_THRESHOLD) {
            self.factor_substituted(s1, s2, s3)
        } else {
            self.factor_direct(s1, s2, s3)
        }
    }

    /// Integration in `x` on `[0, 1]`.
    pub fn factor_direct<T: Real>(&self, s1: T, s2: T, s3: T) -> (T, T) {
        let a = T::lit(2.0) * (s3 + s1);
        let (dm, dp) = (s2 - s3, s2 + s3);
        let two = T::lit(2.0);
        let (mut plain, mut weighted) = (T::zero(), T::zero());
        for &(u, w) in self.table.iter() {
            let x = T::lit(u);
            let f = T::lit(w)
                * bessel0_scaled(dm * x)
                * bessel0_scaled(dp * (T::one() - x))
                * (-a * x).exp();
            plain += f;
            weighted += (T::one() - two * x) * f;
        }
        (plain, weighted)
    }

    /// Integration in `y = e^{-a x}` over `[e^{-a}, 1]`.
    pub fn factor_substituted<T: Real>(&self, s1: T, s2: T, s3: T) -> (T, T) {
        let a = (T::lit(2.0) * (s3 + s1)).max(T::lit(MIN_SUBSTITUTION_RATE));
        let y0 = T::min_positive_value() + (-a).exp();
        let span = T::one() - y0;
        let (dm, dp) = (s2 - s3, s2 + s3);
        let two = T::lit(2.0);
        let (mut plain, mut weighted) = (T::zero(), T::zero());
        for &(u, w) in self.table.iter() {
            let y = if u == 1.0 {
                T::one()
            } else {
                y0 + T::lit(u) * span
            };
            let x = -y.ln() / a;
            let f = T::lit(w) * bessel0_scaled(dm * x) * bessel0_scaled(dp * (T::one() - x));
            plain += f;
            weighted += (T::one() - two * x) * f;
        }
        (plain * span / a, weighted * span / a)
    }

    /// `log ∫_{SO(3)} exp(tr(diag(s) R)) dR`.
    pub fn logcf<T: Real>(&self, s: SignedSpectrum<T>) -> Result<T> {
        if !s.is_finite() {
            return Err(Error::NonFinite("signed spectrum"));
        }
        let f = self.factor(false, s.s1, s.s2, s.s3);
        check_factor(f, s)?;
        Ok(s.s1 + s.s2 + s.s3 + f.ln())
    }

    /// Gradient of [`Quadrature::logcf`] with respect to `(s1, s2, s3)`.
    pub fn grad_logcf<T: Real>(&self, s: SignedSpectrum<T>) -> Result<[T; 3]> {
        self.logcf_with_grad(s).map(|(_, g)| g)
    }

    /// Value and spectral gradient together.
    ///
    /// `g_i = factor(true, s_i, s_j, s_k) / factor(false, s1, s2, s3)` where
    /// `(s_j, s_k)` are the remaining two entries in their original order.
    pub fn logcf_with_grad<T: Real>(&self, s: SignedSpectrum<T>) -> Result<(T, [T; 3])> {
        if !s.is_finite() {
            return Err(Error::NonFinite("signed spectrum"));
        }
        let SignedSpectrum { s1, s2, s3 } = s;
        let (f, f1) = self.factor_pair(s1, s2, s3);
        check_factor(f, s)?;
        let (_, f2) = self.factor_pair(s2, s1, s3);
        let (_, f3) = self.factor_pair(s3, s1, s2);
        Ok((s1 + s2 + s3 + f.ln(), [f1 / f, f2 / f, f3 / f]))
    }

    /// `log ∫_{SO(3)} exp(tr(Fᵀ R)) dR` for an arbitrary 3x3 `F`.
    pub fn logcf_matrix<T: Real>(&self, f: &Mat3<T>) -> Result<T> {
        self.logcf(signed_svdvals(f)?)
    }

    /// Value and matrix gradient; the rotation factors of the signed SVD are
    /// held fixed, so `∇ = U diag(g) Vᵀ`.
    pub fn logcf_matrix_grad<T: Real>(&self, f: &Mat3<T>) -> Result<LogcfGrad<T>> {
        let svd = signed_svd(f)?;
        let (value, g) = self.logcf_with_grad(svd.spectrum)?;
        let grad = svd.u * Mat3::diag(g) * svd.v.transpose();
        Ok(LogcfGrad {
            value,
            grad,
            spectrum: svd.spectrum,
            degenerate: svd.spectrum.is_degenerate(),
        })
    }
}

fn check_factor<T: Real>(f: T, s: SignedSpectrum<T>) -> Result<()> {
    if f > T::zero() && f.is_finite() {
        Ok(())
    } else {
        Err(Error::FactorUnderflow {
            value: f.to_f64_lossy(),
            s1: s.s1.to_f64_lossy(),
            s2: s.s2.to_f64_lossy(),
            s3: s.s3.to_f64_lossy(),
        })
    }
}

/// [`Quadrature::factor`] with the default node count.
pub fn factor<T: Real>(add_x: bool, s1: T, s2: T, s3: T) -> T {
    Quadrature::default().factor(add_x, s1, s2, s3)
}

/// [`Quadrature::logcf`] with the default node count.
pub fn logcf<T: Real>(s: SignedSpectrum<T>) -> Result<T> {
    Quadrature::default().logcf(s)
}

/// [`Quadrature::grad_logcf`] with the default node count.
pub fn grad_logcf<T: Real>(s: SignedSpectrum<T>) -> Result<[T; 3]> {
    Quadrature::default().grad_logcf(s)
}

/// [`Quadrature::logcf_matrix`] with the default node count.
pub fn logcf_matrix<T: Real>(f: &Mat3<T>) -> Result<T> {
    Quadrature::default().logcf_matrix(f)
}

/// Gradient of [`logcf_matrix`] with the default node count.
pub fn grad_logcf_matrix<T: Real>(f: &Mat3<T>) -> Result<Mat3<T>> {
    Quadrature::default().logcf_matrix_grad(f).map(|g| g.grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s1: f64, s2: f64, s3: f64) -> SignedSpectrum<f64> {
        SignedSpectrum::new(s1, s2, s3)
    }

    #[test]
    fn identity_spectrum() {
        let s = signed_svdvals(&Mat3::<f64>::identity()).unwrap();
        assert!((s.s1 - 1.0).abs() < 1e-15);
        assert!((s.s2 - 1.0).abs() < 1e-15);
        assert!((s.s3 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reflection_flips_last_value() {
        let s = signed_svdvals(&Mat3::diag([1.0, 1.0, -1.0])).unwrap();
        assert_eq!((s.s1, s.s2, s.s3), (1.0, 1.0, -1.0));
    }

    #[test]
    fn singular_matrix_has_nonnegative_s3() {
        let s = signed_svdvals(&Mat3::<f64>::diag([2.0, -1.0, 0.0])).unwrap();
        assert_eq!(s.s3, 0.0);
        assert!(s.s3.is_sign_positive());
    }

    #[test]
    fn signed_svd_reconstructs_with_proper_rotations() {
        let f = Mat3::<f64>::new([[0.2, -1.0, 0.4], [1.3, 0.5, -0.8], [-0.6, 0.9, -1.7]]);
        let svd = signed_svd(&f).unwrap();
        assert!((svd.u.det() - 1.0).abs() < 1e-12);
        assert!((svd.v.det() - 1.0).abs() < 1e-12);
        let back = svd.u * Mat3::diag(svd.spectrum.to_array()) * svd.v.transpose();
        assert!(back.max_abs_diff(&f) < 1e-12);
        assert_eq!(svd.spectrum.s3.signum(), f.det().signum());
    }

    #[test]
    fn non_finite_matrix_is_rejected() {
        let f = Mat3::diag([1.0, f64::INFINITY, 0.0]);
        assert!(signed_svdvals(&f).is_err());
        assert!(logcf_matrix(&f).is_err());
    }

    #[test]
    fn bessel_at_zero_is_one() {
        assert_eq!(bessel0_scaled(0.0f64), 1.0);
    }

    #[test]
    fn bessel_is_even_and_positive() {
        for &x in &[0.1, 1.0, 3.75, 3.76, 10.0, 123.0] {
            let (p, m) = (bessel0_scaled(x), bessel0_scaled(-x));
            assert_eq!(p, m);
            assert!(p > 0.0);
        }
    }

    #[test]
    fn bessel_is_continuous_at_regime_boundary() {
        let left = bessel0_scaled(3.75f64 - 1e-8);
        let right = bessel0_scaled(3.75f64 + 1e-8);
        assert!((left - right).abs() <= 1e-6, "{left} vs {right}");
    }

    #[test]
    fn factor_at_origin() {
        assert!((factor(false, 0.0f64, 0.0, 0.0) - 1.0).abs() < 1e-12);
        assert!(factor(true, 0.0f64, 0.0, 0.0).abs() < 1e-12);
    }

    #[test]
    fn logcf_vanishes_at_origin() {
        assert!(logcf(spec(0.0, 0.0, 0.0)).unwrap().abs() < 1e-12);
        assert!(logcf_matrix(&Mat3::<f64>::zeros()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn grad_is_symmetric_for_symmetric_spectra() {
        for s in [
            spec(0.0, 0.0, 0.0),
            spec(1.0, 1.0, 1.0),
            spec(7.0, 7.0, 7.0),
        ] {
            let g = grad_logcf(s).unwrap();
            assert!(
                (g[0] - g[1]).abs() < 1e-9 && (g[1] - g[2]).abs() < 1e-9,
                "{g:?}"
            );
        }
    }

    #[test]
    fn logcf_is_nondecreasing_in_s1() {
        for &(s2, s3) in &[(0.0, 0.0), (1.0, -0.5), (2.0, 1.5), (0.3, 0.1)] {
            let mut prev = f64::NEG_INFINITY;
            let mut s1 = s2;
            while s1 < 25.0 {
                let v = logcf(spec(s1, s2, s3)).unwrap();
                assert!(v >= prev - 1e-12, "s1={s1} s2={s2} s3={s3}: {v} < {prev}");
                prev = v;
                s1 += 0.37;
            }
        }
    }

    #[test]
    fn factor_branches_agree_near_switch() {
        let q = Quadrature::default();
        for &a in &[0.8, 0.9, 0.99, 1.0, 1.01, 1.1, 1.3] {
            for &(s2, s3) in &[(0.1, 0.05), (0.3, -0.1), (0.2, 0.2)] {
                let s1: f64 = a / 2.0 - s3;
                if s1 < s2 {
                    continue;
                }
                let (d, dx) = q.factor_direct(s1, s2, s3);
                let (u, ux) = q.factor_substituted(s1, s2, s3);
                assert!(((d - u) / d).abs() < 1e-4, "a={a}: {d} vs {u}");
                assert!((dx - ux).abs() < 1e-4 * d, "a={a}: {dx} vs {ux}");
            }
        }
    }

    #[test]
    fn gradient_is_orthogonal_to_left_rotation_orbit() {
        let f = Mat3::<f64>::new([[1.2, -0.3, 0.5], [0.4, 2.1, -0.7], [-0.2, 0.6, 0.9]]);
        let g = Quadrature::default().logcf_matrix_grad(&f).unwrap().grad;
        let generators = [
            Mat3::new([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            Mat3::new([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
            Mat3::new([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
        ];
        for omega in generators {
            let tangent = omega * f;
            assert!(g.frobenius_dot(&tangent).abs() < 1e-8);
            let right = f * omega;
            assert!(g.frobenius_dot(&right).abs() < 1e-8);
        }
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let f = Mat3::<f64>::new([[0.7, 0.1, -2.0], [1.0, -0.4, 0.3], [0.0, 1.5, 0.2]]);
        let q = Quadrature::default();
        let a = q.logcf_matrix_grad(&f).unwrap();
        let b = q.logcf_matrix_grad(&f).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn huge_spectra_stay_finite() {
        let (v, g) = Quadrature::default()
            .logcf_with_grad(spec(1e6, 5e5, -2e5))
            .unwrap();
        assert!(v.is_finite());
        assert!(
            g.iter()
                .all(|x| x.is_finite() && *x > 0.0 && *x <= 1.0 + 1e-3),
            "{g:?}"
        );
    }

    #[test]
    fn works_in_single_precision() {
        let v = Quadrature::default()
            .logcf(SignedSpectrum::new(3.0f32, 2.0, 1.0))
            .unwrap();
        let w = Quadrature::default().logcf(spec(3.0, 2.0, 1.0)).unwrap();
        assert!((v as f64 - w).abs() < 1e-4);
    }
}
