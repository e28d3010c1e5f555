//! Forward selection of the chain ordering.
//!
//! Starting from the features alone, every step scores each remaining label
//! against the current design and appends the lowest-scoring one, whose
//! column then joins the design for later steps.

use rayon::prelude::*;

use crate::chain::validate_permutation;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::logistic;
use crate::speclink::{self, spec_deviance, CarrierFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    /// Chain position -> original label index.
    pub permutation: Vec<usize>,
    /// Score of the label chosen at each step (deviance, or minus
    /// log-likelihood for the likelihood criterion).
    pub step_scores: Vec<f64>,
    /// Steps whose chosen label had a failed or non-converged fit, or was
    /// constant in the training rows.
    pub flagged: Vec<bool>,
}

impl Ordering {
    /// An ordering fixed in advance, with no scores.
    pub fn fixed(permutation: Vec<usize>) -> Self {
        let k = permutation.len();
        Ordering {
            permutation,
            step_scores: vec![0.0; k],
            flagged: vec![false; k],
        }
    }
}

struct Candidate {
    score: f64,
    flagged: bool,
    /// Constant labels and failed base fits are only taken once nothing
    /// else is left.
    deferred: bool,
}

const DEFERRED: Candidate = Candidate {
    score: 0.0,
    flagged: true,
    deferred: true,
};

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|&v| v == col[0])
}

fn forward_select<F>(x: &Matrix, y: &Matrix, score: F) -> Result<Ordering>
where
    F: Fn(&Matrix, &[f64]) -> Result<(f64, bool)> + Sync,
{
    if x.rows() != y.rows() {
        return Err(Error::dims(format!(
            "{} feature rows, {} label rows",
            x.rows(),
            y.rows()
        )));
    }
    let k = y.cols();
    if k == 0 {
        return Err(Error::InvalidConfig("no labels to order".into()));
    }
    let columns: Vec<Vec<f64>> = (0..k).map(|j| y.column(j)).collect();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut z_act = x.clone();
    let mut out = Ordering {
        permutation: Vec::with_capacity(k),
        step_scores: Vec::with_capacity(k),
        flagged: Vec::with_capacity(k),
    };
    while !remaining.is_empty() {
        let mut scored: Vec<Candidate> = remaining
            .par_iter()
            .map(|&label| {
                if is_constant(&columns[label]) {
                    DEFERRED
                } else {
                    evaluate(&score, &z_act, &columns[label])
                }
            })
            .collect();
        // `remaining` stays in increasing index order, so keeping the first
        // strict minimum breaks ties towards the lowest label index.
        let mut pick = 0;
        for (i, c) in scored.iter().enumerate().skip(1) {
            let b = &scored[pick];
            let better = match (c.deferred, b.deferred) {
                (false, true) => true,
                (true, false) => false,
                _ => c.score < b.score,
            };
            if better {
                pick = i;
            }
        }
        let cand = scored.swap_remove(pick);
        let label = remaining.remove(pick);
        out.permutation.push(label);
        out.step_scores.push(cand.score);
        out.flagged.push(cand.flagged);
        if !remaining.is_empty() {
            z_act = z_act.with_columns(std::slice::from_ref(&columns[label]))?;
        }
    }
    debug_assert!(validate_permutation(&out.permutation, k).is_ok());
    Ok(out)
}

fn evaluate<F>(score: &F, z: &Matrix, y: &[f64]) -> Candidate
where
    F: Fn(&Matrix, &[f64]) -> Result<(f64, bool)>,
{
    match score(z, y) {
        Ok((s, flagged)) if s.is_finite() => Candidate {
            score: s.max(0.0),
            flagged,
            deferred: false,
        },
        _ => DEFERRED,
    }
}

/// Forward selection by minimal specification deviance.
pub fn find_ordering(
    x: &Matrix,
    y: &Matrix,
    family: &dyn CarrierFamily,
    lambda: f64,
) -> Result<Ordering> {
    forward_select(x, y, |z, col| {
        let r = spec_deviance(z, col, lambda, family)?;
        Ok((r.deviance, r.degraded || !r.base_fit.converged))
    })
}

/// Forward selection by minimal minus log-likelihood of the fitted link.
pub fn loglik_ordering(x: &Matrix, y: &Matrix, lambda: f64) -> Result<Ordering> {
    forward_select(x, y, |z, col| {
        let f = logistic::fit(z, col, lambda)?;
        Ok((-f.log_likelihood, !f.converged))
    })
}

/// A named way of choosing the chain ordering from training data.
pub trait OrderingStrategy: Send + Sync {
    fn name(&self) -> String;

    fn order(&self, x: &Matrix, y: &Matrix, lambda: f64) -> Result<Ordering>;
}

pub struct Specification(pub Box<dyn CarrierFamily>);

impl OrderingStrategy for Specification {
    fn name(&self) -> String {
        self.0.name().to_ascii_lowercase()
    }

    fn order(&self, x: &Matrix, y: &Matrix, lambda: f64) -> Result<Ordering> {
        find_ordering(x, y, self.0.as_ref(), lambda)
    }
}

pub struct LogLikelihood;

impl OrderingStrategy for LogLikelihood {
    fn name(&self) -> String {
        "loglik".into()
    }

    fn order(&self, x: &Matrix, y: &Matrix, lambda: f64) -> Result<Ordering> {
        loglik_ordering(x, y, lambda)
    }
}

/// Labels in their given order.
pub struct Original;

impl OrderingStrategy for Original {
    fn name(&self) -> String {
        "original".into()
    }

    fn order(&self, _x: &Matrix, y: &Matrix, _lambda: f64) -> Result<Ordering> {
        Ok(Ordering::fixed((0..y.cols()).collect()))
    }
}

/// Labels in reverse order.
pub struct Reversed;

impl OrderingStrategy for Reversed {
    fn name(&self) -> String {
        "reverse".into()
    }

    fn order(&self, _x: &Matrix, y: &Matrix, _lambda: f64) -> Result<Ordering> {
        Ok(Ordering::fixed((0..y.cols()).rev().collect()))
    }
}

pub struct Fixed(pub Vec<usize>);

impl OrderingStrategy for Fixed {
    fn name(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        format!("fixed:{}", parts.join(","))
    }

    fn order(&self, _x: &Matrix, y: &Matrix, _lambda: f64) -> Result<Ordering> {
        validate_permutation(&self.0, y.cols())?;
        Ok(Ordering::fixed(self.0.clone()))
    }
}

/// `original`, `reverse`, `loglik`, `fixed:i,j,…`, or any carrier family name.
pub fn ordering_strategy(name: &str) -> Result<Box<dyn OrderingStrategy>> {
    let lower = name.trim().to_ascii_lowercase();
    match lower.as_str() {
        "original" | "identity" | "true" => return Ok(Box::new(Original)),
        "reverse" | "reversed" => return Ok(Box::new(Reversed)),
        "loglik" | "log-likelihood" | "likelihood" => return Ok(Box::new(LogLikelihood)),
        _ => {}
    }
    if let Some(list) = lower.strip_prefix("fixed:") {
        let perm = list
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad fixed ordering `{list}`")))?;
        return Ok(Box::new(Fixed(perm)));
    }
    match speclink::carrier_family(&lower) {
        Ok(f) => Ok(Box::new(Specification(f))),
        Err(_) => {
            let mut known = vec!["original", "reverse", "loglik", "fixed:<perm>"];
            known.extend(speclink::family_names());
            Err(Error::UnknownStrategy {
                kind: "ordering",
                name: name.to_string(),
                known: known.join(", "),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speclink::Pregibon;
    use crate::synthgen::{model_spec, sample, ModelId};

    fn ones(n: usize) -> Matrix {
        Matrix::from_vec(n, 1, vec![1.0; n]).unwrap()
    }

    #[test]
    fn single_label() {
        let y = Matrix::from_vec(4, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let o = find_ordering(&ones(4), &y, &Pregibon, 0.0).unwrap();
        assert_eq!(o.permutation, vec![0]);
        assert_eq!(
            loglik_ordering(&ones(4), &y, 0.0).unwrap().permutation,
            vec![0]
        );
    }

    #[test]
    fn identical_columns_tie_to_lowest_index() {
        let ds = sample(&model_spec(ModelId::M1), 300, 5);
        let col = ds.label_column(0);
        let y = Matrix::from_vec(300, 1, col.clone())
            .unwrap()
            .with_columns(&[col])
            .unwrap();
        let o = find_ordering(&ds.x, &y, &Pregibon, 0.001).unwrap();
        assert_eq!(o.permutation[0], 0);
        let o = loglik_ordering(&ds.x, &y, 0.001).unwrap();
        assert_eq!(o.permutation[0], 0);
    }

    #[test]
    fn constant_labels_go_last() {
        let ds = sample(&model_spec(ModelId::M7), 400, 6);
        let mut cols: Vec<Vec<f64>> = (0..4).map(|j| ds.label_column(j)).collect();
        cols[0] = vec![1.0; 400];
        let y = Matrix::from_vec(400, 1, cols[0].clone())
            .unwrap()
            .with_columns(&cols[1..])
            .unwrap();
        let o = find_ordering(&ds.x, &y, &Pregibon, 0.001).unwrap();
        assert_eq!(*o.permutation.last().unwrap(), 0);
        assert!(*o.flagged.last().unwrap());
        assert_eq!(*o.step_scores.last().unwrap(), 0.0);
    }

    #[test]
    fn output_is_a_valid_permutation_with_nonnegative_scores() {
        let ds = sample(&model_spec(ModelId::M3), 500, 2);
        for strategy in ["pregibon", "stukel", "morgan", "loglik", "reverse"] {
            let o = ordering_strategy(strategy)
                .unwrap()
                .order(&ds.x, &ds.y, 0.001)
                .unwrap();
            validate_permutation(&o.permutation, 6).unwrap();
            assert!(
                o.step_scores.iter().all(|s| s.is_finite() && *s >= 0.0),
                "{strategy}"
            );
        }
    }

    #[test]
    fn deterministic_and_row_permutation_invariant() {
        let ds = sample(&model_spec(ModelId::M7), 400, 9);
        let a = find_ordering(&ds.x, &ds.y, &Pregibon, 0.001).unwrap();
        let b = find_ordering(&ds.x, &ds.y, &Pregibon, 0.001).unwrap();
        assert_eq!(a, b);
        let rev: Vec<usize> = (0..ds.n()).rev().collect();
        let shuffled = ds.subset(&rev);
        let c = find_ordering(&shuffled.x, &shuffled.y, &Pregibon, 0.001).unwrap();
        assert_eq!(a.permutation, c.permutation);
    }

    #[test]
    fn registry() {
        assert_eq!(ordering_strategy("Pregibon").unwrap().name(), "pregibon");
        assert_eq!(ordering_strategy("loglik").unwrap().name(), "loglik");
        assert_eq!(
            ordering_strategy("fixed:2,0,1").unwrap().name(),
            "fixed:2,0,1"
        );
        assert!(ordering_strategy("fixed:a").is_err());
        assert!(matches!(
            ordering_strategy("alphabetical"),
            Err(Error::UnknownStrategy { .. })
        ));
        let y = Matrix::zeros(3, 2);
        assert!(Fixed(vec![0, 0]).order(&ones(3), &y, 0.0).is_err());
        assert_eq!(
            Reversed.order(&ones(3), &y, 0.0).unwrap().permutation,
            vec![1, 0]
        );
    }

    #[test]
    fn no_labels_is_a_config_error() {
        assert!(matches!(
            find_ordering(&ones(3), &Matrix::zeros(3, 0), &Pregibon, 0.0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
