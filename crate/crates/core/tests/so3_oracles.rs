use avgflow_core::random::{stream_rng, uniform_rotation};
use avgflow_core::testkit::{
    bessel0_scaled_series, central_difference, factor_oracle, mc_logcf, relative_error,
    spectrum_grid,
};
use avgflow_core::{
    bessel0_scaled, factor, grad_logcf, grad_logcf_matrix, logcf, logcf_matrix, signed_svdvals,
    Mat3, SignedSpectrum,
};
use rand::Rng;

fn spec(s1: f64, s2: f64, s3: f64) -> SignedSpectrum<f64> {
    SignedSpectrum::new(s1, s2, s3)
}

fn random_matrix(rng: &mut impl Rng, scale: f64) -> Mat3<f64> {
    let mut m = Mat3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            m.m[r][c] = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    m
}

#[test]
fn signed_svdvals_match_eigendecomposition() {
    let mut rng = stream_rng(11, "svd-oracle");
    for _ in 0..200 {
        let f = random_matrix(&mut rng, 3.0);
        let s = signed_svdvals(&f).unwrap();
        let nf = nalgebra::Matrix3::from_fn(|r, c| f.m[r][c]);
        let mut ev: Vec<f64> = (nf.transpose() * nf)
            .symmetric_eigenvalues()
            .iter()
            .map(|e| e.max(0.0).sqrt())
            .collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sign = nf.determinant().signum();
        let expect = [ev[0], ev[1], sign * ev[2]];
        for (a, b) in s.to_array().iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{:?} vs {:?}", s, expect);
        }
    }
}

#[test]
fn bessel_matches_power_series_up_to_thirty() {
    let mut worst = 0.0f64;
    let mut x = -30.0;
    while x <= 30.0 {
        let err = (bessel0_scaled(x) - bessel0_scaled_series(x, 400)).abs();
        worst = worst.max(err);
        x += 0.01;
    }
    assert!(worst < 2e-6, "max abs error {worst}");
    let at_two = (bessel0_scaled(2.0) - bessel0_scaled_series(2.0, 40)).abs();
    assert!(at_two < 2e-6);
}

#[test]
fn factor_matches_adaptive_quadrature() {
    let v = factor(false, 3.0, 2.0, 1.0);
    assert!(relative_error(v, factor_oracle(false, 3.0, 2.0, 1.0), 0.0) < 1e-4);

    // Sweep a = 2 (s1 + s3) across the branch switch at 1.
    for k in 0..=40 {
        let a = 0.6 + 0.02 * k as f64;
        for &(s2, s3) in &[(0.1, 0.05), (0.25, -0.1), (0.2, 0.2), (0.0, 0.0)] {
            let s1: f64 = a / 2.0 - s3;
            if s1 < s2 {
                continue;
            }
            for add_x in [false, true] {
                let got = factor(add_x, s1, s2, s3);
                let want = factor_oracle(add_x, s1, s2, s3);
                let scale = factor_oracle(false, s1, s2, s3);
                assert!(
                    (got - want).abs() < 1e-4 * scale,
                    "a={a} add_x={add_x}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn logcf_at_origin_is_zero() {
    assert!(logcf(spec(0.0, 0.0, 0.0)).unwrap().abs() < 1e-6);
}

#[test]
fn logcf_matches_monte_carlo() {
    for (i, s) in [spec(5.0, 0.0, 0.0), spec(2.0, 1.0, -0.5)]
        .into_iter()
        .enumerate()
    {
        let (mc, se) = mc_logcf(s, 1_000_000, 70 + i as u64);
        let v = logcf(s).unwrap();
        assert!((v - mc).abs() < 3.0 * se, "{s:?}: {v} vs {mc} ± {se}");
    }
}

#[test]
fn spectral_gradient_matches_finite_differences() {
    let mut grid = spectrum_grid(47, 7);
    grid.extend([
        spec(4.0, 1.0, 0.0),
        spec(20.0, 10.0, -5.0),
        spec(0.5, 0.3, 0.1),
    ]);
    let mut worst = 0.0f64;
    for s in grid {
        let g = grad_logcf(s).unwrap();
        for i in 0..3 {
            let fd = central_difference(
                |h| {
                    let mut a = s.to_array();
                    a[i] = h;
                    logcf(spec(a[0], a[1], a[2])).unwrap()
                },
                s.to_array()[i],
                1e-5,
            );
            let err = relative_error(g[i], fd, 1e-3);
            worst = worst.max(err);
            assert!(err < 1e-5, "{s:?} component {i}: {} vs fd {fd}", g[i]);
        }
    }
    println!("worst spectral gradient relative error {worst:e}");
}

#[test]
fn matrix_gradient_matches_finite_differences() {
    let mut rng = stream_rng(9, "matrix-fd");
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let f = random_matrix(&mut rng, 6.0);
        let s = signed_svdvals(&f).unwrap();
        if s.is_degenerate() || s.s1 - s.s2 < 1e-2 || s.s2 - s.s3.abs() < 1e-2 {
            continue;
        }
        let g = grad_logcf_matrix(&f).unwrap();
        // Entries are compared relative to the largest entry of the gradient.
        let scale = g.m.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for r in 0..3 {
            for c in 0..3 {
                let fd = central_difference(
                    |h| {
                        let mut p = f;
                        p.m[r][c] = h;
                        logcf_matrix(&p).unwrap()
                    },
                    f.m[r][c],
                    1e-5,
                );
                let err = relative_error(g.m[r][c], fd, scale);
                worst = worst.max(err);
                assert!(err < 1e-5, "entry ({r},{c}): {} vs fd {fd}", g.m[r][c]);
            }
        }
    }
    println!("worst matrix gradient relative error {worst:e}");
}

#[test]
fn logcf_matrix_is_haar_invariant() {
    let mut rng = stream_rng(10, "haar");
    for _ in 0..100 {
        let f = random_matrix(&mut rng, 8.0);
        let q1: Mat3<f64> = uniform_rotation(&mut rng);
        let q2: Mat3<f64> = uniform_rotation(&mut rng);
        let base = logcf_matrix(&f).unwrap();
        assert!((logcf_matrix(&(q1 * f)).unwrap() - base).abs() < 1e-10);
        assert!((logcf_matrix(&(q1 * f * q2.transpose())).unwrap() - base).abs() < 1e-10);
    }
}
