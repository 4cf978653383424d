//! Small dense linear algebra: symmetric eigendecomposition and covariance.
//!
//! Everything here works on row-major `Vec<T>` storage. The matrices involved
//! are small (9×9 neighbourhood covariances, up to a few hundred dimensions for
//! global features), so a cyclic Jacobi solver is accurate and fast enough.

use crate::scalar::{dot, Scalar};

/// Eigenpairs of a symmetric matrix, sorted by eigenvalue in decreasing order.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// `vectors[k]` is the unit eigenvector paired with `values[k]`.
    pub vectors: Vec<Vec<T>>,
}

/// Flips `v` so that its largest-magnitude entry is positive (ties: lowest index).
pub fn canonical_sign<T: Scalar>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi eigendecomposition of the `n × n` symmetric matrix `a`.
///
/// Eigenvectors follow [`canonical_sign`].
pub fn symmetric_eigen<T: Scalar>(a: &[T], n: usize) -> SymmetricEigen<T> {
    assert_eq!(a.len(), n * n, "matrix must be n×n");
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let norm2: T = m.iter().map(|&x| x * x).sum();
    let tol2 = norm2 * T::SOLVER_EPS * T::SOLVER_EPS;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + m[p * n + q] * m[p * n + q];
            }
        }
        if off <= tol2 || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let two = T::one() + T::one();
                let theta = (m[q * n + q] - m[p * n + p]) / (two * apq);
                let t = if theta.abs() > T::of(1e30) {
                    T::one() / (two * theta)
                } else {
                    theta.signum() / (theta.abs() + theta.hypot(T::one()))
                };
                let c = T::one() / t.hypot(T::one());
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<T> = (0..n).map(|k| v[k * n + i]).collect();
            canonical_sign(&mut col);
            col
        })
        .collect();
    SymmetricEigen { values, vectors }
}

/// Per-dimension mean of `n` row-major samples of length `dim`.
pub fn column_mean<T: Scalar>(samples: &[T], dim: usize) -> Vec<T> {
    let n = samples.len() / dim;
    let mut mean = vec![T::zero(); dim];
    for row in samples.chunks_exact(dim) {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m = *m + x;
        }
    }
    if n > 0 {
        let inv = T::one() / T::of(n as f64);
        mean.iter_mut().for_each(|m| *m = *m * inv);
    }
    mean
}

/// Population covariance (divided by `n`) of row-major samples around `mean`.
pub fn covariance<T: Scalar>(samples: &[T], dim: usize, mean: &[T]) -> Vec<T> {
    let n = samples.len() / dim;
    let mut cov = vec![T::zero(); dim * dim];
    let mut centered = vec![T::zero(); dim];
    for row in samples.chunks_exact(dim) {
        for ((c, &x), &m) in centered.iter_mut().zip(row).zip(mean) {
            *c = x - m;
        }
        for a in 0..dim {
            let ca = centered[a];
            if ca == T::zero() {
                continue;
            }
            let dst = &mut cov[a * dim + a..a * dim + dim];
            for (d, &cb) in dst.iter_mut().zip(&centered[a..]) {
                *d = *d + ca * cb;
            }
        }
    }
    let inv = if n > 0 {
        T::one() / T::of(n as f64)
    } else {
        T::zero()
    };
    for a in 0..dim {
        for b in a..dim {
            let v = cov[a * dim + b] * inv;
            cov[a * dim + b] = v;
            cov[b * dim + a] = v;
        }
    }
    cov
}

/// Streaming first and second moments, accumulated in `f64` around the first
/// sample to limit cancellation.
#[derive(Clone, Debug)]
pub struct Moments {
    dim: usize,
    n: usize,
    shift: Vec<f64>,
    sum: Vec<f64>,
    outer: Vec<f64>,
    centered: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Moments {
            dim,
            n: 0,
            shift: Vec::new(),
            sum: vec![0.0; dim],
            outer: vec![0.0; dim * dim],
            centered: vec![0.0; dim],
        }
    }

    /// Accumulator centred on a fixed `shift`, so partial accumulators can be
    /// merged exactly.
    pub fn with_shift(shift: Vec<f64>) -> Self {
        let mut m = Moments::new(shift.len());
        m.shift = shift;
        m
    }

    /// Adds another accumulator built with the same shift.
    pub fn merge(&mut self, other: &Moments) {
        debug_assert_eq!(self.shift, other.shift);
        self.n += other.n;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.outer.iter_mut().zip(&other.outer).for_each(|(a, b)| *a += b);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add<T: Scalar>(&mut self, x: &[T]) {
        debug_assert_eq!(x.len(), self.dim);
        if self.shift.is_empty() {
            self.shift = x.iter().map(|v| v.as_f64()).collect();
        }
        self.n += 1;
        let dim = self.dim;
        for ((c, &v), &s) in self.centered.iter_mut().zip(x).zip(&self.shift) {
            *c = v.as_f64() - s;
        }
        for a in 0..dim {
            let ca = self.centered[a];
            self.sum[a] += ca;
            if ca == 0.0 {
                continue;
            }
            let row = &mut self.outer[a * dim + a..(a + 1) * dim];
            for (o, &cb) in row.iter_mut().zip(&self.centered[a..]) {
                *o += ca * cb;
            }
        }
    }

    pub fn mean<T: Scalar>(&self) -> Vec<T> {
        if self.n == 0 {
            return vec![T::zero(); self.dim];
        }
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.shift)
            .map(|(&s, &sh)| T::of(sh + s / n))
            .collect()
    }

    /// Population covariance.
    pub fn covariance<T: Scalar>(&self) -> Vec<T> {
        let dim = self.dim;
        let mut cov = vec![T::zero(); dim * dim];
        if self.n == 0 {
            return cov;
        }
        let n = self.n as f64;
        for a in 0..dim {
            for b in a..dim {
                let v = self.outer[a * dim + b] / n - (self.sum[a] / n) * (self.sum[b] / n);
                cov[a * dim + b] = T::of(v);
                cov[b * dim + a] = T::of(v);
            }
        }
        cov
    }
}

/// Dimension above which the leading eigenvector is found by power iteration
/// instead of a full Jacobi decomposition.
const JACOBI_MAX_DIM: usize = 128;

/// Leading eigenpair of a symmetric positive semi-definite matrix.
///
/// Returns `None` when the matrix is zero.
pub fn leading_eigenpair<T: Scalar>(cov: &[T], dim: usize) -> Option<(Vec<T>, T)> {
    if cov.iter().all(|&x| x == T::zero()) {
        return None;
    }
    if dim <= JACOBI_MAX_DIM {
        let eig = symmetric_eigen(cov, dim);
        let value = eig.values[0];
        return Some((eig.vectors.into_iter().next()?, value));
    }

    // Start from the column of the largest diagonal entry.
    let mut start = 0;
    for i in 0..dim {
        if cov[i * dim + i] > cov[start * dim + start] {
            start = i;
        }
    }
    let mut v: Vec<T> = (0..dim).map(|k| cov[k * dim + start]).collect();
    normalize(&mut v)?;
    let tol = T::SOLVER_EPS.sqrt() * T::of(1e-4);
    let mut w = vec![T::zero(); dim];
    for _ in 0..20_000 {
        for (a, wa) in w.iter_mut().enumerate() {
            *wa = dot(&cov[a * dim..(a + 1) * dim], &v);
        }
        normalize(&mut w)?;
        let delta: T = w.iter().zip(&v).map(|(&a, &b)| (a - b) * (a - b)).sum();
        std::mem::swap(&mut v, &mut w);
        if delta.sqrt() < tol {
            break;
        }
    }
    canonical_sign(&mut v);
    let cv: Vec<T> = (0..dim).map(|a| dot(&cov[a * dim..(a + 1) * dim], &v)).collect();
    let value = dot(&v, &cv);
    Some((v, value))
}

fn normalize<T: Scalar>(v: &mut [T]) -> Option<()> {
    let norm = dot(v, v).sqrt();
    if norm == T::zero() || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x = *x / norm);
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_sorted() {
        let a = [1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let eig = symmetric_eigen(&a, 3);
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(eig.vectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_known_pair() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let eig = symmetric_eigen(&[2.0f64, 1.0, 1.0, 2.0], 2);
        assert!((eig.values[0] - 3.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((eig.vectors[0][0] - h).abs() < 1e-14);
        assert!((eig.vectors[0][1] - h).abs() < 1e-14);
    }

    #[test]
    fn sign_convention_prefers_lowest_index_on_ties() {
        let mut v = [-0.5f64, 0.5, 0.1];
        canonical_sign(&mut v);
        assert_eq!(v, [0.5, -0.5, -0.1]);
    }

    #[test]
    fn power_iteration_matches_jacobi_on_large_matrix() {
        let dim = 150;
        let mut cov = vec![0.0f64; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] = 1.0 / (1.0 + (i as f64 - j as f64).abs());
            }
        }
        let (v, lambda) = leading_eigenpair(&cov, dim).unwrap();
        let full = symmetric_eigen(&cov, dim);
        assert!((lambda - full.values[0]).abs() < 1e-9 * full.values[0]);
        for (a, b) in v.iter().zip(&full.vectors[0]) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_matrix_has_no_leading_pair() {
        assert!(leading_eigenpair(&[0.0f64; 4], 2).is_none());
    }
}
