//! Ridge-penalized logistic regression fitted by damped Newton (IRLS).
//!
//! The design matrix always carries the intercept in column 0, which is
//! never penalized. Callers may also leave a block of trailing columns
//! unpenalized (the specification carriers use this).

use crate::error::{Error, Result};
use crate::linalg::{self, dot, ConcaveObjective, Matrix};

/// The single global probability clip: fitted probabilities live in
/// `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-12;

/// Convergence tolerance on the max-norm of the penalized score.
pub const FIT_TOL: f64 = 1e-8;

pub const FIT_MAX_ITER: usize = 100;

#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Bernoulli log-density of `y` under success probability `mu` (clipped).
#[inline]
pub fn bernoulli_log(y: f64, mu: f64) -> f64 {
    let mu = clip_prob(mu);
    y * mu.ln() + (1.0 - y) * (1.0 - mu).ln()
}

/// One fitted conditional model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per remaining design column.
    pub coefficients: Vec<f64>,
    /// Clipped `σ(Zθ̂)`, one per training row.
    pub fitted: Vec<f64>,
    /// Unpenalized log-likelihood at the estimate.
    pub log_likelihood: f64,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn linear_predictor(&self, z: &Matrix) -> Vec<f64> {
        z.mul_vec(&self.coefficients)
    }

    pub fn predict(&self, z_row: &[f64]) -> f64 {
        clip_prob(sigmoid(dot(z_row, &self.coefficients)))
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub lambda: f64,
    /// Number of trailing design columns left out of the ridge penalty.
    pub unpenalized_tail: usize,
    /// Starting point; zeros when absent.
    pub start: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
}

impl FitOptions {
    pub fn ridge(lambda: f64) -> Self {
        Self {
            lambda,
            unpenalized_tail: 0,
            start: None,
            tol: FIT_TOL,
            max_iter: FIT_MAX_ITER,
        }
    }
}

fn check_dims(z: &Matrix, y: &[f64]) -> Result<()> {
    if z.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} design rows but {} responses",
            z.rows(),
            y.len()
        )));
    }
    Ok(())
}

fn check_theta(z: &Matrix, theta: &[f64]) -> Result<()> {
    if z.cols() != theta.len() {
        return Err(Error::dims(format!(
            "{} design columns but {} coefficients",
            z.cols(),
            theta.len()
        )));
    }
    Ok(())
}

/// `Σ_i [y_i log σ(z_i'θ) + (1 - y_i) log(1 - σ(z_i'θ))]` with clipped σ.
pub fn log_likelihood(z: &Matrix, y: &[f64], theta: &[f64]) -> Result<f64> {
    check_dims(z, y)?;
    check_theta(z, theta)?;
    Ok(raw_log_likelihood(z, y, theta))
}

fn raw_log_likelihood(z: &Matrix, y: &[f64], theta: &[f64]) -> f64 {
    z.row_iter()
        .zip(y)
        .map(|(row, &yi)| bernoulli_log(yi, sigmoid(dot(row, theta))))
        .sum()
}

/// `Z'(y - σ(Zθ))`.
pub fn score(z: &Matrix, y: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_dims(z, y)?;
    check_theta(z, theta)?;
    let mut g = vec![0.0; z.cols()];
    for (row, &yi) in z.row_iter().zip(y) {
        let r = yi - clip_prob(sigmoid(dot(row, theta)));
        g.iter_mut().zip(row).for_each(|(gj, zj)| *gj += r * zj);
    }
    Ok(g)
}

/// `Z' diag(μ(1 - μ)) Z`.
pub fn neg_hessian(z: &Matrix, theta: &[f64]) -> Result<Matrix> {
    check_theta(z, theta)?;
    let mut h = Matrix::zeros(z.cols(), z.cols());
    for row in z.row_iter() {
        let mu = clip_prob(sigmoid(dot(row, theta)));
        accumulate_outer(&mut h, row, mu * (1.0 - mu));
    }
    mirror_upper(&mut h);
    Ok(h)
}

#[inline]
fn accumulate_outer(h: &mut Matrix, row: &[f64], weight: f64) {
    let d = row.len();
    for a in 0..d {
        let wa = weight * row[a];
        if wa == 0.0 {
            continue;
        }
        let hr = h.row_mut(a);
        for b in a..d {
            hr[b] += wa * row[b];
        }
    }
}

fn mirror_upper(h: &mut Matrix) {
    for a in 0..h.rows() {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
}

struct PenalizedLogLik<'a> {
    z: &'a Matrix,
    y: &'a [f64],
    lambda: f64,
    penalized: Vec<bool>,
}

impl PenalizedLogLik<'_> {
    fn penalty(&self, theta: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let ss: f64 = theta
            .iter()
            .zip(&self.penalized)
            .filter(|(_, &p)| p)
            .map(|(t, _)| t * t)
            .sum();
        0.5 * self.lambda * ss
    }
}

impl ConcaveObjective for PenalizedLogLik<'_> {
    fn dim(&self) -> usize {
        self.z.cols()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        raw_log_likelihood(self.z, self.y, theta) - self.penalty(theta)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.derivatives(theta).0
    }

    fn neg_hessian(&self, theta: &[f64]) -> Matrix {
        self.derivatives(theta).1
    }

    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Matrix) {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut h = Matrix::zeros(d, d);
        for (row, &yi) in self.z.row_iter().zip(self.y) {
            let mu = clip_prob(sigmoid(dot(row, theta)));
            let r = yi - mu;
            g.iter_mut().zip(row).for_each(|(gj, zj)| *gj += r * zj);
            accumulate_outer(&mut h, row, mu * (1.0 - mu));
        }
        mirror_upper(&mut h);
        for j in 0..d {
            if self.penalized[j] {
                g[j] -= self.lambda * theta[j];
                h[(j, j)] += self.lambda;
            }
        }
        (g, h)
    }
}

/// Ridge-penalized fit with the default options.
pub fn fit(z: &Matrix, y: &[f64], lambda: f64) -> Result<LogisticFit> {
    fit_with(z, y, &FitOptions::ridge(lambda))
}

/// Maximizes `l(θ) - (λ/2) Σ_{penalized j} θ_j²` from the given start.
///
/// Non-convergence is recorded in the returned fit; only a singular
/// negative Hessian (or bad input) is an error.
pub fn fit_with(z: &Matrix, y: &[f64], opts: &FitOptions) -> Result<LogisticFit> {
    check_dims(z, y)?;
    if z.rows() == 0 || z.cols() == 0 {
        return Err(Error::dims("empty design matrix"));
    }
    if z.row_iter().any(|r| r[0] != 1.0) {
        return Err(Error::dims(
            "first design column must be the all-ones intercept",
        ));
    }
    if opts.lambda < 0.0 || !opts.lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "ridge penalty must be nonnegative, got {}",
            opts.lambda
        )));
    }
    if opts.unpenalized_tail >= z.cols() && opts.unpenalized_tail > 0 {
        return Err(Error::dims("unpenalized tail covers the intercept"));
    }
    let d = z.cols();
    let penalized: Vec<bool> = (0..d)
        .map(|j| j > 0 && j < d - opts.unpenalized_tail)
        .collect();
    let objective = PenalizedLogLik {
        z,
        y,
        lambda: opts.lambda,
        penalized,
    };
    let start = match &opts.start {
        Some(s) => {
            check_theta(z, s)?;
            s.clone()
        }
        None => vec![0.0; d],
    };
    let result = linalg::newton_maximize(&objective, &start, opts.tol, opts.max_iter)?;
    let fitted: Vec<f64> = z
        .row_iter()
        .map(|row| clip_prob(sigmoid(dot(row, &result.argmax))))
        .collect();
    let log_likelihood = raw_log_likelihood(z, y, &result.argmax);
    Ok(LogisticFit {
        coefficients: result.argmax,
        fitted,
        log_likelihood,
        lambda: opts.lambda,
        converged: result.converged,
        iterations: result.iterations,
    })
}

/// Smallest eigenvalue of `H(θ̂)/n`, the regularity diagnostic for one link.
pub fn min_eigen_ratio(fit: &LogisticFit, z: &Matrix) -> Result<f64> {
    let mut h = neg_hessian(z, &fit.coefficients)?;
    h.scale(1.0 / z.rows() as f64);
    Ok(linalg::sym_eigenvalues(&h)?.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_only(n: usize) -> Matrix {
        Matrix::from_vec(n, 1, vec![1.0; n]).unwrap()
    }

    fn design(xs: &[f64]) -> Matrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn sigmoid_is_stable_in_both_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
        assert!((sigmoid(2.0) - 0.8807970779778823).abs() < 1e-15);
    }

    #[test]
    fn balanced_intercept_only_fit() {
        let z = intercept_only(4);
        let fit = fit(&z, &[1.0, 0.0, 1.0, 0.0], 0.0).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!(fit.fitted.iter().all(|&m| (m - 0.5).abs() < 1e-12));
        assert!((fit.log_likelihood - 4.0 * 0.5_f64.ln()).abs() < 1e-12);
        assert!((fit.log_likelihood + 2.772588722239781).abs() < 1e-9);
    }

    #[test]
    fn one_class_data_is_flagged() {
        let z = intercept_only(6);
        match fit(&z, &[1.0; 6], 0.0) {
            Ok(f) => assert!(!f.converged, "MLE at +inf reported as converged"),
            Err(Error::SingularHessian(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn separable_data_never_silently_converges() {
        let xs: Vec<f64> = (-10..=10)
            .filter(|&i| i != 0)
            .map(|i| i as f64 * 0.3)
            .collect();
        let y: Vec<f64> = xs.iter().map(|&x| f64::from(x > 0.0)).collect();
        match fit(&design(&xs), &y, 0.0) {
            Ok(f) => assert!(!f.converged),
            Err(Error::SingularHessian(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn log_likelihood_examples() {
        let z = intercept_only(5);
        let ll = log_likelihood(&z, &[1.0, 0.0, 1.0, 1.0, 0.0], &[0.0]).unwrap();
        assert!((ll - 5.0 * 0.5_f64.ln()).abs() < 1e-12);
        let ll = log_likelihood(&intercept_only(1), &[1.0], &[2.0]).unwrap();
        assert!((ll + 0.12692801104297263).abs() < 1e-12);
    }

    #[test]
    fn score_and_hessian_examples() {
        let z = intercept_only(2);
        assert_eq!(score(&z, &[1.0, 0.0], &[0.0]).unwrap(), vec![0.0]);
        let h = neg_hessian(&z, &[0.0]).unwrap();
        assert_eq!(h.as_slice(), &[0.5]);
    }

    #[test]
    fn dimension_errors() {
        let z = intercept_only(3);
        assert!(matches!(
            log_likelihood(&z, &[1.0], &[0.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            score(&z, &[1.0, 0.0, 1.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            neg_hessian(&z, &[0.0, 1.0]),
            Err(Error::DimensionMismatch(_))
        ));
        let no_intercept = Matrix::from_rows(&[vec![2.0], vec![1.0]]).unwrap();
        assert!(fit(&no_intercept, &[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn min_eigen_ratio_of_balanced_intercept_fit_is_a_quarter() {
        for n in [2, 10, 64] {
            let z = intercept_only(n);
            let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            let f = fit(&z, &y, 0.0).unwrap();
            assert!((min_eigen_ratio(&f, &z).unwrap() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_column_has_zero_min_eigen_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                vec![1.0, x, x]
            })
            .collect();
        let z = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..40).map(|i| (i % 3 == 0) as u8 as f64).collect();
        // λ > 0 makes the fit itself well posed.
        let f = fit(&z, &y, 0.1).unwrap();
        assert!(min_eigen_ratio(&f, &z).unwrap() <= 1e-10);
        assert!(matches!(fit(&z, &y, 0.0), Err(Error::SingularHessian(_))));
    }

    #[test]
    fn large_sample_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| f64::from(rng.random::<f64>() < sigmoid(1.0 + 2.0 * x)))
            .collect();
        let f = fit(&design(&xs), &y, 0.0).unwrap();
        assert!(f.converged);
        assert!(
            (f.coefficients[0] - 1.0).abs() < 0.05,
            "{:?}",
            f.coefficients
        );
        assert!(
            (f.coefficients[1] - 2.0).abs() < 0.05,
            "{:?}",
            f.coefficients
        );
    }

    #[test]
    fn ridge_shrinks_slopes_but_not_the_intercept_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..300).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| f64::from(rng.random::<f64>() < sigmoid(0.3 - 0.8 * x)))
            .collect();
        let z = design(&xs);
        let free = fit(&z, &y, 0.0).unwrap();
        let ridge = fit(&z, &y, 25.0).unwrap();
        assert!(ridge.coefficients[1].abs() < free.coefficients[1].abs());
        // Unpenalized intercept keeps mean(μ̂) = mean(y).
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&ridge.fitted) - mean(&y)).abs() < 1e-9);
    }

    #[test]
    fn mle_dominates_other_parameter_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..200).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&x| f64::from(rng.random::<f64>() < sigmoid(-0.5 + x)))
            .collect();
        let z = design(&xs);
        let f = fit(&z, &y, 0.0).unwrap();
        for _ in 0..50 {
            let theta = [
                f.coefficients[0] + rng.random_range(-0.5..0.5),
                f.coefficients[1] + rng.random_range(-0.5..0.5),
            ];
            assert!(log_likelihood(&z, &y, &theta).unwrap() <= f.log_likelihood + 1e-12);
        }
    }
}
