//! Small dense linear algebra: 3x3 matrices, N x 3 point sets and a 3x3 SVD.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Default for Mat3<T> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real> Mat3<T> {
    pub fn new(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn zeros() -> Self {
        Self {
            m: [[T::zero(); 3]; 3],
        }
    }

    pub fn identity() -> Self {
        Self::diag([T::one(); 3])
    }

    pub fn diag(d: [T; 3]) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            out.m[i][i] = d[i];
        }
        out
    }

    /// Matrix whose columns are `c0, c1, c2`.
    pub fn from_columns(c: [[T; 3]; 3]) -> Self {
        let mut out = Self::zeros();
        for (j, col) in c.iter().enumerate() {
            for i in 0..3 {
                out.m[i][j] = col[i];
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> [T; 3] {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }

    pub fn set_column(&mut self, j: usize, c: [T; 3]) {
        for i in 0..3 {
            self.m[i][j] = c[i];
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn frobenius_dot(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                acc += self.m[i][j] * other.m[i][j];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_dot(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: [T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.m[i][0] * v[0] + self.m[i][1] * v[1] + self.m[i][2] * v[2];
        }
        out
    }

    /// Rotation matrix of a (not necessarily normalized) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(q: [T; 4]) -> Self {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        let two = T::lit(2.0);
        let one = T::one();
        Self::new([
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ])
    }

    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: [T; 3], angle: T) -> Self {
        let n = norm3(axis);
        let k = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (hs, hc) = (angle / T::lit(2.0)).sin_cos();
        Self::from_quaternion([hc, k[0] * hs, k[1] * hs, k[2] * hs])
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        let mut out = Mat3::<U>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = U::lit(self.m[i][j].to_f64_lossy());
            }
        }
        out
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Mat3<T>;

    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc += self.m[i][k] * rhs.m[k][j];
                }
                out.m[i][j] = acc;
            }
        }
        out
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Mat3<T>;

    fn add(mut self, rhs: Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] += rhs.m[i][j];
            }
        }
        self
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Mat3<T>;

    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] -= rhs.m[i][j];
            }
        }
        self
    }
}

impl<T> Index<(usize, usize)> for Mat3<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.m[i][j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat3<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.m[i][j]
    }
}

pub(crate) fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3<T: Real>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}

pub(crate) fn cross3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// An N x 3 coordinate set, one row per atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coords<T> {
    rows: Vec<[T; 3]>,
}

impl<T: Real> Coords<T> {
    pub fn new(rows: Vec<[T; 3]>) -> Self {
        Self { rows }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            rows: vec![[T::zero(); 3]; n],
        }
    }

    /// Builds from a row-major flat slice of length `3 * n`.
    pub fn from_flat(flat: &[T]) -> Self {
        assert_eq!(
            flat.len() % 3,
            0,
            "flat coordinate length must be a multiple of 3"
        );
        Self {
            rows: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[T; 3]] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [[T; 3]] {
        &mut self.rows
    }

    pub fn into_rows(self) -> Vec<[T; 3]> {
        self.rows
    }

    pub fn centroid(&self) -> [T; 3] {
        let mut c = [T::zero(); 3];
        if self.rows.is_empty() {
            return c;
        }
        for r in &self.rows {
            for k in 0..3 {
                c[k] += r[k];
            }
        }
        let n = T::from_usize_lossy(self.rows.len());
        c.map(|v| v / n)
    }

    pub fn center_in_place(&mut self) {
        let c = self.centroid();
        for r in &mut self.rows {
            for k in 0..3 {
                r[k] -= c[k];
            }
        }
    }

    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        out.center_in_place();
        out
    }

    /// Row-wise right multiplication `self · m`.
    pub fn mul_mat(&self, m: &Mat3<T>) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut o = [T::zero(); 3];
                for (b, ob) in o.iter_mut().enumerate() {
                    *ob = r[0] * m.m[0][b] + r[1] * m.m[1][b] + r[2] * m.m[2][b];
                }
                o
            })
            .collect();
        Self { rows }
    }

    /// Applies the rotation `R` to every atom, `x ↦ x Rᵀ`.
    pub fn rotate(&self, r: &Mat3<T>) -> Self {
        self.mul_mat(&r.transpose())
    }

    /// `selfᵀ · other`, a 3x3 matrix.
    pub fn gram(&self, other: &Self) -> Mat3<T> {
        debug_assert_eq!(self.len(), other.len());
        let mut g = Mat3::zeros();
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for i in 0..3 {
                for j in 0..3 {
                    g.m[i][j] += a[i] * b[j];
                }
            }
        }
        g
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r.map(|v| v * s)).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            for k in 0..3 {
                a[k] += alpha * b[k];
            }
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: T, other: &Self, b: T) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            rows: self
                .rows
                .iter()
                .zip(&other.rows)
                .map(|(x, y)| {
                    [
                        a * x[0] + b * y[0],
                        a * x[1] + b * y[1],
                        a * x[2] + b * y[2],
                    ]
                })
                .collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| dot3(*a, *b))
            .sum()
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
            .fold(T::zero(), T::max)
    }

    /// Reorders atoms: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            rows: perm.iter().map(|&p| self.rows[p]).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Coords<U> {
        Coords {
            rows: self
                .rows
                .iter()
                .map(|r| r.map(|v| U::lit(v.to_f64_lossy())))
                .collect(),
        }
    }
}

impl<T: Real> Add for &Coords<T> {
    type Output = Coords<T>;

    fn add(self, rhs: Self) -> Coords<T> {
        self.lincomb(T::one(), rhs, T::one())
    }
}

impl<T: Real> Sub for &Coords<T> {
    type Output = Coords<T>;

    fn sub(self, rhs: Self) -> Coords<T> {
        self.lincomb(T::one(), rhs, -T::one())
    }
}

impl<T: Real> Index<usize> for Coords<T> {
    type Output = [T; 3];

    fn index(&self, i: usize) -> &[T; 3] {
        &self.rows[i]
    }
}

impl<T: Real> IndexMut<usize> for Coords<T> {
    fn index_mut(&mut self, i: usize) -> &mut [T; 3] {
        &mut self.rows[i]
    }
}

/// Singular value decomposition `A = U diag(s) Vᵀ` of a 3x3 matrix with
/// `s` sorted descending and `U`, `V` orthogonal.
#[derive(Clone, Copy, Debug)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    pub s: [T; 3],
    pub v: Mat3<T>,
}

const MAX_JACOBI_SWEEPS: usize = 64;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns whose singular value vanishes get an orthonormal completion of `U`,
/// so `U` is always orthogonal.
pub fn svd3<T: Real>(a: &Mat3<T>) -> Result<Svd3<T>> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd3 input"));
    }
    let mut w = *a;
    let mut v = Mat3::<T>::identity();
    // Exact eps can stall: rounding leaves the column product a few ulps above it.
    let tol = T::lit(4.0) * T::epsilon();
    let two = T::lit(2.0);

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
            for i in 0..3 {
                alpha += w.m[i][p] * w.m[i][p];
                beta += w.m[i][q] * w.m[i][q];
                gamma += w.m[i][p] * w.m[i][q];
            }
            if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                continue;
            }
            let zeta = (beta - alpha) / (two * gamma);
            let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
            if t == T::zero() {
                continue;
            }
            rotated = true;
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = c * t;
            for mat in [&mut w, &mut v] {
                for i in 0..3 {
                    let xp = mat.m[i][p];
                    let xq = mat.m[i][q];
                    mat.m[i][p] = c * xp - s * xq;
                    mat.m[i][q] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNotConverged);
    }

    let norms = [0, 1, 2].map(|j| norm3(w.column(j)));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        norms[j]
            .partial_cmp(&norms[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let s = order.map(|j| norms[j]);
    let mut v_sorted = Mat3::zeros();
    for (k, &j) in order.iter().enumerate() {
        v_sorted.set_column(k, v.column(j));
    }

    // Columns below this are treated as numerically zero for the purposes of U.
    let cutoff = s[0] * T::epsilon() * T::lit(8.0);
    let mut u_cols = [[T::zero(); 3]; 3];
    let mut rank = 0;
    for (k, &j) in order.iter().enumerate() {
        if s[k] > cutoff && s[k] > T::zero() {
            let c = w.column(j);
            u_cols[k] = c.map(|x| x / s[k]);
            rank += 1;
        } else {
            break;
        }
    }
    complete_basis(&mut u_cols, rank);

    Ok(Svd3 {
        u: Mat3::from_columns(u_cols),
        s,
        v: v_sorted,
    })
}

/// Fills columns `rank..3` so the three columns form a right-handed orthonormal basis.
fn complete_basis<T: Real>(cols: &mut [[T; 3]; 3], rank: usize) {
    match rank {
        0 => {
            *cols = Mat3::<T>::identity().m;
        }
        1 => {
            let u1 = cols[0];
            let mut axis = 0;
            for k in 1..3 {
                if u1[k].abs() < u1[axis].abs() {
                    axis = k;
                }
            }
            let mut e = [T::zero(); 3];
            e[axis] = T::one();
            let proj = dot3(u1, e);
            let mut u2 = [
                e[0] - proj * u1[0],
                e[1] - proj * u1[1],
                e[2] - proj * u1[2],
            ];
            let n = norm3(u2);
            u2 = u2.map(|x| x / n);
            cols[1] = u2;
            cols[2] = cross3(u1, u2);
        }
        2 => {
            cols[2] = cross3(cols[0], cols[1]);
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(svd: &Svd3<f64>) -> Mat3<f64> {
        svd.u * Mat3::diag(svd.s) * svd.v.transpose()
    }

    #[test]
    fn svd_converges_on_rounding_limited_inputs() {
        // Inputs whose off-diagonal column product stalls just above eps.
        let cases = [
            [
                [11.125926999494846, -62.05405857001088, 71.94398087540097],
                [14.162419721928307, -65.9444649019399, -38.516216128975124],
                [-53.20552210857123, -89.02283240675496, -30.379634850541542],
            ],
            [
                [-6.723274927599196, -0.7974934855531505, -7.243647985608874],
                [0.00982618506992701, 0.1632304800478301, -10.671081531334224],
                [0.7093091107485994, -13.508673282049141, 3.421126098080142],
            ],
            [
                [1.3012214902815546, -0.11881165289286841, -0.2447423048558852],
                [-1.9258940456410296, -0.7367029226590109, -1.454103250502676],
                [2.133271234547291, 0.9369865425242834, -0.9611818247688605],
            ],
        ];
        for m in cases {
            let a = Mat3::new(m);
            let svd = svd3(&a).unwrap();
            assert!(reconstruct(&svd).max_abs_diff(&a) < 1e-12 * svd.s[0]);
            let eye = Mat3::<f64>::identity();
            assert!((svd.u.transpose() * svd.u).max_abs_diff(&eye) < 1e-14);
            assert!((svd.v.transpose() * svd.v).max_abs_diff(&eye) < 1e-14);
        }
    }

    #[test]
    fn svd_converges_on_many_random_inputs() {
        use rand::Rng;
        let mut rng = crate::random::stream_rng(3, "svd-stress");
        for _ in 0..50_000 {
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let m: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| scale * rng.random_range(-1.0..1.0)));
            let a = Mat3::new(m);
            let svd = svd3(&a).unwrap();
            assert!(reconstruct(&svd).max_abs_diff(&a) < 1e-12 * svd.s[0]);
        }
    }

    #[test]
    fn svd_of_diagonal_sorts_values() {
        let a = Mat3::diag([1.0, 3.0, 2.0]);
        let svd = svd3(&a).unwrap();
        assert_eq!(svd.s, [3.0, 2.0, 1.0]);
        assert!(reconstruct(&svd).max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn svd_reconstructs_general_matrix() {
        let a = Mat3::new([[0.3, -1.2, 2.0], [4.0, 0.1, -0.7], [-0.5, 0.9, 1.1]]);
        let svd = svd3(&a).unwrap();
        assert!(reconstruct(&svd).max_abs_diff(&a) < 1e-13);
        let utu = svd.u.transpose() * svd.u;
        assert!(utu.max_abs_diff(&Mat3::identity()) < 1e-13);
        assert!(svd.s[0] >= svd.s[1] && svd.s[1] >= svd.s[2]);
    }

    #[test]
    fn svd_handles_rank_deficiency() {
        let a = Mat3::<f64>::new([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 0.0]]);
        let svd = svd3(&a).unwrap();
        assert!(svd.s[1].abs() < 1e-12 && svd.s[2].abs() < 1e-12);
        assert!(reconstruct(&svd).max_abs_diff(&a) < 1e-12);
        assert!((svd.u.det().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_of_zero_is_identity_basis() {
        let svd = svd3(&Mat3::<f64>::zeros()).unwrap();
        assert_eq!(svd.s, [0.0; 3]);
        assert_eq!(svd.u, Mat3::identity());
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = Mat3::<f64>::identity();
        a.m[1][2] = f64::NAN;
        assert!(matches!(svd3(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn quaternion_rotation_is_proper() {
        let r = Mat3::<f64>::from_quaternion([0.3, -0.4, 0.8, 0.1]);
        assert!((r.det() - 1.0).abs() < 1e-14);
        assert!((r.transpose() * r).max_abs_diff(&Mat3::identity()) < 1e-14);
    }

    #[test]
    fn rotate_applies_r_to_each_row() {
        let r = Mat3::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let x = Coords::new(vec![[1.0, 0.0, 0.0]]);
        let y = x.rotate(&r);
        assert!((y[0][0]).abs() < 1e-15 && (y[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn centering_removes_centroid() {
        let mut x = Coords::<f64>::new(vec![[1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [2.0, 5.0, -1.0]]);
        x.center_in_place();
        let c = x.centroid();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
    }
}
