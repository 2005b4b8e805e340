//! The SO(3)-averaged flow matching target.
//!
//! For a conformer ensemble `{x̂_k}` with weights `q̂_k` and a query `(t, x)`,
//! the conditional path `x_t ~ N(t x̂ Rᵀ, σ_t² Σ⁻¹)` is averaged over every
//! conformer and every rotation `R` under the Haar measure. The posterior
//! mean of the rotated conformer is the α-gradient of
//!
//! ```text
//! log Z(α) = log Σ_k q̂_k exp( log ∫ exp(tr((x̂_kᵀ α + t x̂_kᵀ Σ x / σ_t²) Rᵀ)) dR - c_k )
//! c_k      = (‖x‖²_Σ + t² ‖x̂_k‖²_Σ) / (2 σ_t²)
//! ```
//!
//! at `α = 0`, which the closed-form rotation integral in [`crate::so3`]
//! provides analytically. The velocity is `(E[x̂ Rᵀ] - x) / (1 - t)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::MoleculeGraph;
use crate::linalg::{Coords, Mat3};
use crate::logsumexp::softmax_weights;
use crate::random::{stream_rng, uniform_rotation};
use crate::scalar::Real;
use crate::so3::Quadrature;

/// Largest flow time at which the target is evaluated; larger queries are clamped.
pub const T_CLAMP: f64 = 1.0 - 1e-4;

/// Centered conformers of one molecule with nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformerEnsemble<T> {
    conformers: Vec<Coords<T>>,
    weights: Vec<T>,
}

impl<T: Real> ConformerEnsemble<T> {
    /// Validates and centers the conformers.
    pub fn new(conformers: Vec<Coords<T>>, weights: Vec<T>) -> Result<Self> {
        if conformers.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if weights.len() != conformers.len() {
            return Err(Error::LengthMismatch {
                what: "conformer weights",
                left: weights.len(),
                right: conformers.len(),
            });
        }
        let n = conformers[0].len();
        if n == 0 {
            return Err(Error::InvalidArgument("conformer has no atoms".into()));
        }
        if let Some(bad) = conformers.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                what: "conformer atom count",
                left: bad.len(),
                right: n,
            });
        }
        if conformers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("conformer coordinates"));
        }
        if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "conformer weights must be finite and nonnegative".into(),
            ));
        }
        if weights.iter().all(|&w| w == T::zero()) {
            return Err(Error::ZeroWeights);
        }
        let conformers = conformers.into_iter().map(|c| c.centered()).collect();
        Ok(Self {
            conformers,
            weights,
        })
    }

    /// Equal weights over all conformers.
    pub fn uniform(conformers: Vec<Coords<T>>) -> Result<Self> {
        let w = vec![T::one(); conformers.len()];
        Self::new(conformers, w)
    }

    /// Ensemble holding only conformer `k`.
    pub fn single(&self, k: usize) -> Self {
        Self {
            conformers: vec![self.conformers[k].clone()],
            weights: vec![T::one()],
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.conformers[0].len()
    }

    pub fn len(&self) -> usize {
        self.conformers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conformers.is_empty()
    }

    pub fn conformers(&self) -> &[Coords<T>] {
        &self.conformers
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        Self::new(self.conformers.clone(), weights)
    }
}

/// Symmetric positive semi-definite form `Σ` coupling atoms.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricKind<T> {
    /// `Σ = I`.
    Euclidean,
    /// `Σ = D - A`, the bond-graph Laplacian.
    Harmonic(MoleculeGraph),
    /// Arbitrary dense row-major `n x n` form.
    Dense { n: usize, matrix: Vec<T> },
}

/// Bilinear form plus the noise schedule `σ_t = (1 - t) σ0 + t σ1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec<T> {
    pub kind: MetricKind<T>,
    pub sigma0: T,
    pub sigma1: T,
}

impl<T: Real> MetricSpec<T> {
    pub fn new(kind: MetricKind<T>, sigma0: T, sigma1: T) -> Result<Self> {
        if !(sigma0 > T::zero()) || !(sigma1 >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "need sigma0 > 0 and sigma1 >= 0, got ({sigma0}, {sigma1})"
            )));
        }
        if let MetricKind::Dense { n, matrix } = &kind {
            if matrix.len() != n * n {
                return Err(Error::LengthMismatch {
                    what: "dense metric",
                    left: matrix.len(),
                    right: n * n,
                });
            }
        }
        Ok(Self {
            kind,
            sigma0,
            sigma1,
        })
    }

    /// Euclidean metric with `σ0 = 1`, `σ1 = 0`.
    pub fn euclidean() -> Self {
        Self {
            kind: MetricKind::Euclidean,
            sigma0: T::one(),
            sigma1: T::zero(),
        }
    }

    /// Harmonic metric with `σ0 = 1`, `σ1 = 0`.
    pub fn harmonic(graph: MoleculeGraph) -> Self {
        Self {
            kind: MetricKind::Harmonic(graph),
            sigma0: T::one(),
            sigma1: T::zero(),
        }
    }

    pub fn sigma_t(&self, t: T) -> T {
        (T::one() - t) * self.sigma0 + t * self.sigma1
    }

    fn check_atoms(&self, n: usize) -> Result<()> {
        let expected = match &self.kind {
            MetricKind::Euclidean => return Ok(()),
            MetricKind::Harmonic(g) => g.n_atoms(),
            MetricKind::Dense { n, .. } => *n,
        };
        if expected != n {
            return Err(Error::LengthMismatch {
                what: "metric atom count",
                left: expected,
                right: n,
            });
        }
        Ok(())
    }

    /// Unscaled form `aᵀ Σ b` as a 3x3 matrix.
    fn raw_gram(&self, a: &Coords<T>, b: &Coords<T>) -> Mat3<T> {
        match &self.kind {
            MetricKind::Euclidean => a.gram(b),
            MetricKind::Harmonic(g) => {
                let mut out = Mat3::zeros();
                for (i, &d) in g.degree().iter().enumerate() {
                    let d = T::from_usize_lossy(d);
                    for p in 0..3 {
                        for q in 0..3 {
                            out.m[p][q] += d * a[i][p] * b[i][q];
                        }
                    }
                }
                for bond in g.bonds() {
                    let (i, j) = (bond.i, bond.j);
                    for p in 0..3 {
                        for q in 0..3 {
                            out.m[p][q] -= a[i][p] * b[j][q] + a[j][p] * b[i][q];
                        }
                    }
                }
                out
            }
            MetricKind::Dense { n, matrix } => {
                let mut out = Mat3::zeros();
                for i in 0..*n {
                    for j in 0..*n {
                        let s = matrix[i * n + j];
                        if s == T::zero() {
                            continue;
                        }
                        for p in 0..3 {
                            for q in 0..3 {
                                out.m[p][q] += s * a[i][p] * b[j][q];
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// `aᵀ Σ b / σ_t²`.
    pub fn gram(&self, a: &Coords<T>, b: &Coords<T>, t: T) -> Mat3<T> {
        let s = self.sigma_t(t);
        self.raw_gram(a, b).scale(T::one() / (s * s))
    }

    /// `‖a‖²_Σ / σ_t² = tr(aᵀ Σ a) / σ_t²`.
    pub fn quad_form(&self, a: &Coords<T>, t: T) -> T {
        self.gram(a, a, t).trace()
    }
}

/// A point `x` at flow time `t ∈ [0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowQuery<T> {
    pub t: T,
    pub x: Coords<T>,
}

impl<T: Real> FlowQuery<T> {
    /// Validates `t` and centers `x`.
    pub fn new(t: T, x: Coords<T>) -> Result<Self> {
        if !(t >= T::zero() && t < T::one()) {
            return Err(Error::TimeOutOfRange(t.to_f64_lossy()));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("query coordinates"));
        }
        Ok(Self { t, x: x.centered() })
    }

    fn clamped_t(&self) -> T {
        self.t.min(T::lit(T_CLAMP))
    }
}

/// Full output of the closed-form computation.
#[derive(Clone, Debug)]
pub struct AvgFlow<T> {
    /// `u_t(x)`.
    pub velocity: Coords<T>,
    /// Posterior mean of the rotated conformer, `E[x̂ Rᵀ]`.
    pub expected_target: Coords<T>,
    /// `log Z_t(x, 0)` up to the Gaussian normalization constant.
    pub log_partition: T,
    /// Posterior probability of each conformer.
    pub conformer_posterior: Vec<T>,
    /// Some `F_k` had nearly repeated singular values.
    pub degenerate: bool,
}

/// Closed-form averaged-flow velocity `u_t(x)`.
pub fn avg_flow_target<T: Real>(
    query: &FlowQuery<T>,
    ensemble: &ConformerEnsemble<T>,
    metric: &MetricSpec<T>,
) -> Result<Coords<T>> {
    avg_flow_target_with(query, ensemble, metric, &Quadrature::default()).map(|r| r.velocity)
}

/// [`avg_flow_target`] with explicit quadrature and full diagnostics.
pub fn avg_flow_target_with<T: Real>(
    query: &FlowQuery<T>,
    ensemble: &ConformerEnsemble<T>,
    metric: &MetricSpec<T>,
    quadrature: &Quadrature,
) -> Result<AvgFlow<T>> {
    let n = query.x.len();
    if ensemble.n_atoms() != n {
        return Err(Error::LengthMismatch {
            what: "query vs conformer atom count",
            left: n,
            right: ensemble.n_atoms(),
        });
    }
    metric.check_atoms(n)?;

    let t = query.clamped_t();
    let x = &query.x;
    let half = T::lit(0.5);
    let x_norm = metric.quad_form(x, t);

    let mut log_terms = Vec::with_capacity(ensemble.len());
    let mut mean_rotations = Vec::with_capacity(ensemble.len());
    let mut degenerate = false;
    for (target, &w) in ensemble.conformers().iter().zip(ensemble.weights()) {
        if w == T::zero() {
            log_terms.push(T::zero());
            mean_rotations.push(Mat3::zeros());
            continue;
        }
        let f = metric.gram(target, x, t).scale(t);
        let lc = quadrature.logcf_matrix_grad(&f)?;
        let c = half * (x_norm + t * t * metric.quad_form(target, t));
        log_terms.push(lc.value - c);
        mean_rotations.push(lc.grad);
        degenerate |= lc.degenerate;
    }

    let (log_partition, posterior) = softmax_weights(&log_terms, Some(ensemble.weights()))?;

    let mut expected = Coords::zeros(n);
    for ((target, g), &p) in ensemble
        .conformers()
        .iter()
        .zip(&mean_rotations)
        .zip(&posterior)
    {
        if p == T::zero() {
            continue;
        }
        expected.axpy(p, &target.mul_mat(g));
    }

    let inv = T::one() / (T::one() - t);
    let velocity = expected.lincomb(inv, x, -inv);
    if !velocity.is_finite() {
        return Err(Error::NonFinite("averaged flow velocity"));
    }
    Ok(AvgFlow {
        velocity,
        expected_target: expected,
        log_partition,
        conformer_posterior: posterior,
        degenerate,
    })
}

/// Monte-Carlo estimate of the averaged flow with per-component standard errors.
#[derive(Clone, Debug)]
pub struct McEstimate<T> {
    pub mean: Coords<T>,
    pub std_err: Coords<T>,
    /// Kish effective sample size of the rotation draws.
    pub effective_samples: f64,
}

/// Self-normalized importance estimate of `u_t(x)` from uniform rotations.
///
/// Each draw `R` weighs every conformer by
/// `q̂_k exp(-½ ‖x - t x̂_k Rᵀ‖²_Σ / σ_t²)`; the standard error is the
/// delta-method error of the ratio estimator over rotation draws.
pub fn mc_avg_flow<T: Real>(
    query: &FlowQuery<T>,
    ensemble: &ConformerEnsemble<T>,
    metric: &MetricSpec<T>,
    num_samples: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    if num_samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "num_samples must be at least 1000, got {num_samples}"
        )));
    }
    let n = query.x.len();
    if ensemble.n_atoms() != n {
        return Err(Error::LengthMismatch {
            what: "query vs conformer atom count",
            left: n,
            right: ensemble.n_atoms(),
        });
    }
    metric.check_atoms(n)?;

    let t = query.clamped_t();
    let x = &query.x;
    let k = ensemble.len();
    let mut rng = stream_rng(seed, "mc-avg-flow");
    let rotations: Vec<Mat3<T>> = (0..num_samples)
        .map(|_| uniform_rotation(&mut rng))
        .collect();

    // Log-weights for every (draw, conformer).
    let half = T::lit(0.5);
    let log_q: Vec<T> = ensemble
        .weights()
        .iter()
        .map(|&w| {
            if w > T::zero() {
                w.ln()
            } else {
                T::neg_infinity()
            }
        })
        .collect();
    let mut logw = vec![T::neg_infinity(); num_samples * k];
    let mut lmax = T::neg_infinity();
    for (s, r) in rotations.iter().enumerate() {
        for (c, target) in ensemble.conformers().iter().enumerate() {
            if log_q[c] == T::neg_infinity() {
                continue;
            }
            let moved = target.rotate(r);
            let resid = x.lincomb(T::one(), &moved, -t);
            let lw = log_q[c] - half * metric.quad_form(&resid, t);
            logw[s * k + c] = lw;
            lmax = lmax.max(lw);
        }
    }

    // Ratio estimator over draws: numerator h_s = Σ_c W_sc f_sc, denominator g_s = Σ_c W_sc.
    let inv = T::one() / (T::one() - t);
    let mut g = vec![T::zero(); num_samples];
    let mut h: Vec<Coords<T>> = Vec::with_capacity(num_samples);
    let mut sum_g = T::zero();
    let mut sum_h = Coords::zeros(n);
    for (s, r) in rotations.iter().enumerate() {
        let mut hs = Coords::zeros(n);
        for (c, target) in ensemble.conformers().iter().enumerate() {
            let lw = logw[s * k + c];
            if lw == T::neg_infinity() {
                continue;
            }
            let w = (lw - lmax).exp();
            g[s] += w;
            let f = target.rotate(r).lincomb(inv, x, -inv);
            hs.axpy(w, &f);
        }
        sum_g += g[s];
        sum_h.axpy(T::one(), &hs);
        h.push(hs);
    }
    let sum_g2: T = g.iter().map(|&v| v * v).sum();
    let ess = (sum_g * sum_g / sum_g2).to_f64_lossy();
    if !(ess >= 10.0) {
        return Err(Error::LowEffectiveSampleSize { ess });
    }

    let mean = sum_h.scale(T::one() / sum_g);
    let mut var = Coords::zeros(n);
    for (hs, &gs) in h.iter().zip(&g) {
        if gs == T::zero() {
            continue;
        }
        let dev = hs.lincomb(T::one(), &mean, -gs);
        for (v, d) in var.rows_mut().iter_mut().zip(dev.rows()) {
            for p in 0..3 {
                v[p] += d[p] * d[p];
            }
        }
    }
    let norm = T::one() / (sum_g * sum_g);
    let std_err = Coords::new(
        var.rows()
            .iter()
            .map(|v| v.map(|e: T| (e * norm).sqrt()))
            .collect(),
    );
    Ok(McEstimate {
        mean,
        std_err,
        effective_samples: ess,
    })
}

/// Random query generator used by the oracle suites: draws an ensemble-scale
/// query with controlled coupling strength so importance sampling stays viable.
pub fn scaled_query<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    t: T,
    ensemble: &ConformerEnsemble<T>,
    metric: &MetricSpec<T>,
    coupling: T,
) -> Result<FlowQuery<T>> {
    let n = ensemble.n_atoms();
    let x = crate::random::standard_normal_coords::<T, _>(n, rng).centered();
    let probe = FlowQuery::new(t, x.clone())?;
    let tc = probe.clamped_t();
    let f = metric
        .gram(&ensemble.conformers()[0], &probe.x, tc)
        .scale(tc);
    let top = crate::linalg::svd3(&f)?.s[0];
    let scale = if top > T::zero() {
        coupling / top
    } else {
        T::one()
    };
    FlowQuery::new(t, x.scale(scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Bond, BondType};
    use crate::random::standard_normal_coords;

    fn random_ensemble(n: usize, k: usize, seed: u64, scale: f64) -> ConformerEnsemble<f64> {
        let mut rng = stream_rng(seed, "test-ensemble");
        let confs = (0..k)
            .map(|_| standard_normal_coords::<f64, _>(n, &mut rng).scale(scale))
            .collect();
        ConformerEnsemble::uniform(confs).unwrap()
    }

    #[test]
    fn zero_query_gives_zero_velocity() {
        let ens = random_ensemble(6, 3, 1, 1.0);
        for t in [0.0, 0.3, 0.9] {
            let q = FlowQuery::new(t, Coords::zeros(6)).unwrap();
            let u = avg_flow_target(&q, &ens, &MetricSpec::euclidean()).unwrap();
            assert!(u.max_abs_diff(&Coords::zeros(6)) < 1e-10, "t={t}");
        }
    }

    #[test]
    fn single_atom_at_origin_contracts() {
        let ens = ConformerEnsemble::uniform(vec![Coords::new(vec![[0.0; 3]])]).unwrap();
        // A single atom query is centered to the origin as well.
        let q = FlowQuery::new(0.4, Coords::new(vec![[1.0, -2.0, 0.5]])).unwrap();
        let u = avg_flow_target(&q, &ens, &MetricSpec::euclidean()).unwrap();
        assert!(u.max_abs_diff(&q.x.scale(-1.0 / 0.6)) < 1e-15);
    }

    #[test]
    fn contraction_for_point_conformer_in_multi_atom_space() {
        let ens = ConformerEnsemble::uniform(vec![Coords::zeros(4)]).unwrap();
        let mut rng = stream_rng(3, "q");
        let x = standard_normal_coords::<f64, _>(4, &mut rng);
        let q = FlowQuery::new(0.25, x).unwrap();
        let u = avg_flow_target(&q, &ens, &MetricSpec::euclidean()).unwrap();
        assert!(u.max_abs_diff(&q.x.scale(-1.0 / 0.75)) < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            FlowQuery::new(1.0, Coords::<f64>::zeros(2)),
            Err(Error::TimeOutOfRange(_))
        ));
        assert!(FlowQuery::new(-0.1, Coords::<f64>::zeros(2)).is_err());
        assert_eq!(
            ConformerEnsemble::<f64>::uniform(vec![]).unwrap_err(),
            Error::EmptyEnsemble
        );
        let ens = random_ensemble(3, 1, 2, 1.0);
        let q = FlowQuery::new(0.5, Coords::zeros(4)).unwrap();
        assert!(avg_flow_target(&q, &ens, &MetricSpec::euclidean()).is_err());
    }

    #[test]
    fn weight_scaling_is_invisible() {
        let ens = random_ensemble(5, 3, 4, 0.8);
        let scaled = ens.with_weights(vec![3.0, 3.0, 3.0]).unwrap();
        let mut rng = stream_rng(5, "q");
        let q = FlowQuery::new(0.6, standard_normal_coords(5, &mut rng)).unwrap();
        let m = MetricSpec::euclidean();
        let a = avg_flow_target(&q, &ens, &m).unwrap();
        let b = avg_flow_target(&q, &scaled, &m).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn zero_weight_conformer_is_ignored() {
        let ens = random_ensemble(5, 2, 6, 1.0);
        let masked = ens.with_weights(vec![1.0, 0.0]).unwrap();
        let only = ens.single(0);
        let mut rng = stream_rng(7, "q");
        let q = FlowQuery::new(0.5, standard_normal_coords(5, &mut rng)).unwrap();
        let m = MetricSpec::euclidean();
        let a = avg_flow_target(&q, &masked, &m).unwrap();
        let b = avg_flow_target(&q, &only, &m).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn time_is_clamped_below_one() {
        let ens = random_ensemble(4, 1, 8, 1.0);
        let mut rng = stream_rng(9, "q");
        let x = standard_normal_coords(4, &mut rng);
        let m = MetricSpec::euclidean();
        let a = avg_flow_target(&FlowQuery::new(0.99999, x.clone()).unwrap(), &ens, &m).unwrap();
        let b = avg_flow_target(&FlowQuery::new(T_CLAMP, x).unwrap(), &ens, &m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_identity_matches_euclidean_and_dense_laplacian_matches_harmonic() {
        let n = 5;
        let bonds = (1..n)
            .map(|i| Bond {
                i: i - 1,
                j: i,
                kind: BondType::Single,
            })
            .chain(std::iter::once(Bond {
                i: 0,
                j: 3,
                kind: BondType::Double,
            }))
            .collect();
        let graph = MoleculeGraph::new(vec![0; n], bonds).unwrap();
        let ens = random_ensemble(n, 2, 10, 0.7);
        let mut rng = stream_rng(11, "q");
        let q = FlowQuery::new(0.4, standard_normal_coords(n, &mut rng)).unwrap();

        let mut eye = vec![0.0; n * n];
        (0..n).for_each(|i| eye[i * n + i] = 1.0);
        let dense_eye = MetricSpec::new(MetricKind::Dense { n, matrix: eye }, 1.0, 0.0).unwrap();
        let a = avg_flow_target(&q, &ens, &MetricSpec::euclidean()).unwrap();
        let b = avg_flow_target(&q, &ens, &dense_eye).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-13);

        let mut lap = vec![0.0; n * n];
        for (i, &d) in graph.degree().iter().enumerate() {
            lap[i * n + i] = d as f64;
        }
        for bd in graph.bonds() {
            lap[bd.i * n + bd.j] -= 1.0;
            lap[bd.j * n + bd.i] -= 1.0;
        }
        let dense_lap = MetricSpec::new(MetricKind::Dense { n, matrix: lap }, 1.0, 0.0).unwrap();
        let c = avg_flow_target(&q, &ens, &MetricSpec::harmonic(graph)).unwrap();
        let d = avg_flow_target(&q, &ens, &dense_lap).unwrap();
        assert!(c.max_abs_diff(&d) < 1e-12);
    }

    #[test]
    fn harmonic_metric_requires_matching_atoms() {
        let graph = MoleculeGraph::new(vec![0; 3], vec![]).unwrap();
        let ens = random_ensemble(4, 1, 12, 1.0);
        let q = FlowQuery::new(0.2, Coords::zeros(4)).unwrap();
        assert!(avg_flow_target(&q, &ens, &MetricSpec::harmonic(graph)).is_err());
    }

    #[test]
    fn mc_requires_enough_samples() {
        let ens = random_ensemble(3, 1, 13, 1.0);
        let q = FlowQuery::new(0.2, Coords::zeros(3)).unwrap();
        assert!(mc_avg_flow(&q, &ens, &MetricSpec::euclidean(), 999, 0).is_err());
    }

    #[test]
    fn mc_reports_low_effective_sample_size() {
        let ens = random_ensemble(8, 1, 14, 3.0);
        let mut rng = stream_rng(15, "q");
        let x = ens.conformers()[0]
            .rotate(&uniform_rotation(&mut rng))
            .scale(0.9);
        let q = FlowQuery::new(0.9, x).unwrap();
        let r = mc_avg_flow(&q, &ens, &MetricSpec::euclidean(), 1000, 1);
        assert!(
            matches!(r, Err(Error::LowEffectiveSampleSize { .. })),
            "{r:?}"
        );
    }
}
