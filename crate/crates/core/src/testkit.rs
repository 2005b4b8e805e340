//! Independent reference implementations for test suites.
//!
//! Nothing here shares code with the production numerics: the Bessel function
//! is a power series, integrals use adaptive Gauss-Kronrod, and rotation
//! searches use a deterministic super-Fibonacci grid.

use rand::Rng;

use crate::linalg::{Coords, Mat3};
use crate::random::{stream_rng, uniform_rotation};
use crate::so3::SignedSpectrum;

/// `I0(x) e^{-|x|}` from the power series `Σ (x²/4)^k / (k!)²`.
///
/// Terms are summed until they fall below `1e-18` of the partial sum or
/// `max_terms` is reached.
pub fn bessel0_scaled_series(x: f64, max_terms: usize) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..max_terms {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum * (-x.abs()).exp()
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive 7/15-point Gauss-Kronrod integration on `[a, b]`.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (val, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    let (rough, _) = gauss_kronrod(&f, a, b);
    let tol = (rel_tol * rough.abs()).max(1e-300);
    recurse(&f, a, b, tol, 40)
}

/// The rotation-integral factor evaluated directly on `[0, 1]` with series Bessel values.
pub fn factor_oracle(add_x: bool, s1: f64, s2: f64, s3: f64) -> f64 {
    let a = 2.0 * (s1 + s3);
    let i0s = |z: f64| bessel0_scaled_series(z, 400);
    adaptive_integrate(
        |x| {
            let w = if add_x { 1.0 - 2.0 * x } else { 1.0 };
            w * i0s((s2 - s3) * x) * i0s((s2 + s3) * (1.0 - x)) * (-a * x).exp()
        },
        0.0,
        1.0,
        1e-12,
    )
}

/// `s1 + s2 + s3 + log factor` using the oracle factor.
pub fn logcf_oracle(s: SignedSpectrum<f64>) -> f64 {
    s.s1 + s.s2 + s.s3 + factor_oracle(false, s.s1, s.s2, s.s3).ln()
}

/// Monte-Carlo `log ∫ exp(tr(diag(s) Rᵀ)) dR` with its delta-method standard error.
pub fn mc_logcf(s: SignedSpectrum<f64>, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, "mc-logcf");
    let shift = s.s1 + s.s2 + s.s3;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let r: Mat3<f64> = uniform_rotation(&mut rng);
        let v = (s.s1 * r.m[0][0] + s.s2 * r.m[1][1] + s.s3 * r.m[2][2] - shift).exp();
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (shift + mean.ln(), (var / n).sqrt() / mean)
}

/// Deterministic, nearly uniform set of `n` unit quaternions (super-Fibonacci spiral).
pub fn super_fibonacci_rotations(n: usize) -> Vec<Mat3<f64>> {
    const PHI: f64 = std::f64::consts::SQRT_2;
    const PSI: f64 = 1.533_751_168_755_204_3;
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|i| {
            let s = i as f64 + 0.5;
            let r = (s / n as f64).sqrt();
            let big = (1.0 - s / n as f64).sqrt();
            let alpha = tau * s / PHI;
            let beta = tau * s / PSI;
            Mat3::from_quaternion([
                r * alpha.sin(),
                r * alpha.cos(),
                big * beta.sin(),
                big * beta.cos(),
            ])
        })
        .collect()
}

/// Smallest RMSD between centered `a` and centered `b` rotated by any grid rotation.
pub fn grid_min_rmsd(a: &Coords<f64>, b: &Coords<f64>, grid: &[Mat3<f64>]) -> f64 {
    let (a, b) = (a.centered(), b.centered());
    let n = a.len() as f64;
    grid.iter()
        .map(|r| ((&a - &b.rotate(r)).norm_sq() / n).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Signed spectra with `|s| ≤ 20` strictly inside the ordered region, from a
/// fixed seed. Finite differences on the boundary `s2 = |s3|` would step
/// outside the domain where the closed form holds.
pub fn spectrum_grid(count: usize, seed: u64) -> Vec<SignedSpectrum<f64>> {
    let mut rng = stream_rng(seed, "spectrum-grid");
    (0..count)
        .map(|_| {
            let s1 = 20.0 * rng.random::<f64>();
            let s2 = s1 * (0.02 + 0.96 * rng.random::<f64>());
            let s3 = s2 * (1.9 * rng.random::<f64>() - 0.95);
            SignedSpectrum::new(s1, s2, s3)
        })
        .collect()
}

/// Central finite difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
