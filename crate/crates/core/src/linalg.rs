//! Small dense linear algebra and the damped Newton engine behind every
//! logistic fit.
//!
//! Problem sizes here are a few hundred columns at most, so everything is
//! dense, row-major and single-threaded.

use crate::error::{Error, Result};

/// Pivots at or below this value abort a Cholesky factorization.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Absolute symmetry tolerance, scaled by `max(1, max|a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting bad lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dims("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Horizontal concatenation `[self | extra]`.
    pub fn hstack(&self, extra: &Matrix) -> Result<Matrix> {
        if extra.rows != self.rows {
            return Err(Error::dims(format!(
                "hstack of {} and {} rows",
                self.rows, extra.rows
            )));
        }
        let cols = self.cols + extra.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(extra.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Appends columns given as vectors of length `rows`.
    pub fn with_columns(&self, columns: &[Vec<f64>]) -> Result<Matrix> {
        let mut extra = Matrix::zeros(self.rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != self.rows {
                return Err(Error::dims(format!(
                    "column of length {} for {} rows",
                    col.len(),
                    self.rows
                )));
            }
            for (i, &v) in col.iter().enumerate() {
                extra[(i, j)] = v;
            }
        }
        self.hstack(&extra)
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Checks `|a_ij - a_ji| <= SYMMETRY_TOL * max(1, max|a|)`.
    pub fn check_symmetric(&self) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::dims(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let tol = SYMMETRY_TOL * self.max_abs().max(1.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let gap = (self[(i, j)] - self[(j, i)]).abs();
                if gap > tol {
                    return Err(Error::NonSymmetric {
                        row: i,
                        col: j,
                        gap,
                    });
                }
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    a.check_symmetric()?;
    let n = a.rows();
    if b.len() != n {
        return Err(Error::dims(format!(
            "right-hand side of length {} for a {n}x{n} system",
            b.len()
        )));
    }

    // Lower factor, row-major, only j <= i is touched.
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if s <= PIVOT_FLOOR || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }

    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - dot(&l.row(i)[..i], &y[..i])) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigenResult {
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
}

impl SymEigenResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues(a: &Matrix) -> Result<SymEigenResult> {
    a.check_symmetric()?;
    let n = a.rows();
    let mut m = a.clone();
    // Symmetrize exactly so rotations act on a truly symmetric matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }

    let total: f64 = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }

    let mut eigenvalues: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(SymEigenResult { eigenvalues })
}

/// A concave objective to maximize, given through value, gradient and
/// negative-Hessian callbacks.
pub trait ConcaveObjective {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    fn gradient(&self, theta: &[f64]) -> Vec<f64>;

    fn neg_hessian(&self, theta: &[f64]) -> Matrix;

    /// Gradient and negative Hessian together; override when they share work.
    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Matrix) {
        (self.gradient(theta), self.neg_hessian(theta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 30;

/// A Newton direction larger than this (max-norm) keeps the iteration going
/// even when the gradient is already below tolerance. On separable data the
/// gradient vanishes numerically while the iterates still run off to infinity.
pub const STEP_TOL: f64 = 1e-6;

/// Damped Newton ascent with step halving.
///
/// Converged means `‖gradient‖∞ <= tol` and the Newton direction at the
/// returned point is below [`STEP_TOL`]. A step that fails to increase the
/// objective is halved up to [`MAX_HALVINGS`] times; if every halving fails the
/// iteration stops unconverged at the current point.
pub fn newton_maximize(
    objective: &dyn ConcaveObjective,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult> {
    if start.len() != objective.dim() {
        return Err(Error::dims(format!(
            "start of length {} for objective of dimension {}",
            start.len(),
            objective.dim()
        )));
    }
    let mut theta = start.to_vec();
    let mut value = objective.value(&theta);
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }

    let mut iterations = 0;
    loop {
        let (grad, hess) = objective.derivatives(&theta);
        let direction = cholesky_solve(&hess, &grad).map_err(|e| match e {
            Error::NotPositiveDefinite { index, pivot } => Error::SingularHessian(format!(
                "pivot {pivot:e} at coordinate {index} after {iterations} iterations"
            )),
            other => other,
        })?;
        if max_abs(&grad) <= tol && max_abs(&direction) <= STEP_TOL {
            return Ok(NewtonResult {
                argmax: theta,
                value,
                converged: true,
                iterations,
            });
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        // Rounding slack: near the optimum the true increase drops below
        // the resolution of `value`.
        let slack = 8.0 * f64::EPSILON * value.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(t, d)| t + step * d)
                .collect();
            let cand_value = objective.value(&candidate);
            if cand_value.is_finite() && cand_value >= value - slack {
                theta = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(NewtonResult {
        argmax: theta,
        value,
        converged: false,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> Matrix {
        let mut b = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let mut a = b.transpose().matmul(&b);
        for i in 0..n {
            a[(i, i)] += n as f64 * 0.1;
        }
        a
    }

    fn random_rotation(n: usize, rng: &mut impl Rng) -> Matrix {
        // Gram-Schmidt on a random square matrix.
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for c in &cols {
                let d = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-3 {
                cols.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let mut q = Matrix::zeros(n, n);
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                q[(i, j)] = v;
            }
        }
        q
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let x = cholesky_solve(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        let a = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let x = cholesky_solve(&a, &[8.0, 27.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_round_trip_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=20 {
            let a = random_spd(n, &mut rng);
            let x_true: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b = a.mul_vec(&x_true);
            let x = cholesky_solve(&a, &b).unwrap();
            for (u, v) in x.iter().zip(&x_true) {
                assert!((u - v).abs() <= 1e-8, "n={n}: {u} vs {v}");
            }
            let resid: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
            assert!(max_abs(&resid) <= 1e-8 * (1.0 + max_abs(&b)));
        }
    }

    #[test]
    fn cholesky_rejects_singular_and_asymmetric() {
        let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_solve(&singular, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        let skew = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_solve(&skew, &[1.0, 1.0]),
            Err(Error::NonSymmetric { .. })
        ));
        assert!(matches!(
            cholesky_solve(&Matrix::identity(2), &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn jacobi_small_cases() {
        let e = sym_eigenvalues(&Matrix::diag(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eigenvalues(&a).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-12);
        let e = sym_eigenvalues(&Matrix::identity(4)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 4]);
    }

    #[test]
    fn jacobi_recovers_spectrum_of_rotated_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=12 {
            let q = random_rotation(n, &mut rng);
            let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a = q.matmul(&Matrix::diag(&d)).matmul(&q.transpose());
            let e = sym_eigenvalues(&a).unwrap();
            d.sort_by(f64::total_cmp);
            for (u, v) in e.eigenvalues.iter().zip(&d) {
                assert!((u - v).abs() <= 1e-8, "n={n}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn jacobi_rejects_nonsymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            sym_eigenvalues(&a),
            Err(Error::NonSymmetric { .. })
        ));
    }

    /// f(θ) = -½ (θ-c)ᵀ A (θ-c)
    struct Quadratic {
        a: Matrix,
        center: Vec<f64>,
    }

    impl ConcaveObjective for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn value(&self, theta: &[f64]) -> f64 {
            let d: Vec<f64> = theta.iter().zip(&self.center).map(|(t, c)| t - c).collect();
            -0.5 * dot(&d, &self.a.mul_vec(&d))
        }
        fn gradient(&self, theta: &[f64]) -> Vec<f64> {
            let d: Vec<f64> = theta.iter().zip(&self.center).map(|(t, c)| t - c).collect();
            self.a.mul_vec(&d).into_iter().map(|v| -v).collect()
        }
        fn neg_hessian(&self, _: &[f64]) -> Matrix {
            self.a.clone()
        }
    }

    #[test]
    fn newton_on_isotropic_quadratic_takes_one_step() {
        let q = Quadratic {
            a: Matrix::identity(2),
            center: vec![0.0, 0.0],
        };
        let r = newton_maximize(&q, &[5.0, -5.0], 1e-10, 50).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.argmax, vec![0.0, 0.0]);
    }

    #[test]
    fn newton_on_random_concave_quadratics_takes_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8 {
            let a = random_spd(n, &mut rng);
            let center: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let q = Quadratic {
                a,
                center: center.clone(),
            };
            let start = vec![0.0; n];
            let r = newton_maximize(&q, &start, 1e-8, 50).unwrap();
            assert!(r.converged);
            assert_eq!(r.iterations, 1);
            for (u, v) in r.argmax.iter().zip(&center) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    struct Poisoned;

    impl ConcaveObjective for Poisoned {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, _: &[f64]) -> f64 {
            f64::NAN
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
        fn neg_hessian(&self, _: &[f64]) -> Matrix {
            Matrix::identity(1)
        }
    }

    #[test]
    fn newton_rejects_non_finite_start() {
        assert!(matches!(
            newton_maximize(&Poisoned, &[0.0], 1e-8, 10),
            Err(Error::NonFinite)
        ));
    }
}
