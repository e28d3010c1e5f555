//! Multi-label evaluation measures and k-fold cross-validation.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::chain::{train_br, train_chain, BrModel, ChainModel};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::inference::{inference_engine, Greedy, InferenceEngine};
use crate::linalg::Matrix;
use crate::ordering::{ordering_strategy, OrderingStrategy};
use crate::rng;

/// The five per-instance measures, or their averages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measures {
    /// Fraction of labels predicted correctly (higher is better).
    pub hamming: f64,
    pub subset_accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
}

impl Measures {
    pub const NAMES: [&'static str; 5] = [
        "hamming",
        "subset_accuracy",
        "recall",
        "precision",
        "f_measure",
    ];

    pub fn to_array(self) -> [f64; 5] {
        [
            self.hamming,
            self.subset_accuracy,
            self.recall,
            self.precision,
            self.f_measure,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Measures {
            hamming: a[0],
            subset_accuracy: a[1],
            recall: a[2],
            precision: a[3],
            f_measure: a[4],
        }
    }
}

/// Measures for one instance.
///
/// Recall with no true positives in `y`, or precision with no predicted
/// positives, is 1 when the other side is also empty and 0 otherwise. The F
/// measure is 0 when precision and recall are both 0.
pub fn evaluate(y: &[u8], y_hat: &[u8]) -> Result<Measures> {
    if y.len() != y_hat.len() {
        return Err(Error::dims(format!(
            "true labelling has {} labels, prediction {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::dims("empty labelling"));
    }
    let k = y.len() as f64;
    let agree = y.iter().zip(y_hat).filter(|(a, b)| a == b).count() as f64;
    let both = y
        .iter()
        .zip(y_hat)
        .filter(|(&a, &b)| a == 1 && b == 1)
        .count() as f64;
    let pos = y.iter().filter(|&&a| a == 1).count() as f64;
    let pred = y_hat.iter().filter(|&&b| b == 1).count() as f64;
    let ratio = |num: f64, den: f64, other: f64| {
        if den > 0.0 {
            num / den
        } else if other == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let recall = ratio(both, pos, pred);
    let precision = ratio(both, pred, pos);
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Measures {
        hamming: agree / k,
        subset_accuracy: f64::from(agree == k),
        recall,
        precision,
        f_measure,
    })
}

/// Average of per-instance measures over the rows of a test set.
pub fn evaluate_rows(truth: &Matrix, predictions: &[Vec<u8>]) -> Result<Measures> {
    if truth.rows() != predictions.len() || predictions.is_empty() {
        return Err(Error::dims(format!(
            "{} true rows, {} predictions",
            truth.rows(),
            predictions.len()
        )));
    }
    let mut sum = [0.0; 5];
    for (i, pred) in predictions.iter().enumerate() {
        let y: Vec<u8> = truth.row(i).iter().map(|&v| u8::from(v == 1.0)).collect();
        let m = evaluate(&y, pred)?.to_array();
        sum.iter_mut().zip(m).for_each(|(s, v)| *s += v);
    }
    let n = predictions.len() as f64;
    Ok(Measures::from_array(sum.map(|s| s / n)))
}

/// A trained multi-label classifier.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<Vec<u8>>;
}

/// A named recipe for training a [`Predictor`].
pub trait MultiLabelMethod: Send + Sync {
    fn name(&self) -> String;

    fn train(&self, x: &Matrix, y: &Matrix) -> Result<Box<dyn Predictor>>;
}

pub struct BinaryRelevance {
    pub lambda: f64,
}

struct BrPredictor(BrModel);

impl Predictor for BrPredictor {
    fn predict(&self, x: &[f64]) -> Result<Vec<u8>> {
        Ok(Greedy.mode(&self.0, x)?.bits)
    }
}

impl MultiLabelMethod for BinaryRelevance {
    fn name(&self) -> String {
        "BR".into()
    }

    fn train(&self, x: &Matrix, y: &Matrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(BrPredictor(train_br(x, y, self.lambda)?)))
    }
}

/// A chain whose ordering and inference engine are chosen by strategy.
pub struct ClassifierChain {
    pub label: String,
    pub ordering: Box<dyn OrderingStrategy>,
    pub engine: Arc<dyn InferenceEngine>,
    pub lambda: f64,
}

struct ChainPredictor {
    model: ChainModel,
    engine: Arc<dyn InferenceEngine>,
}

impl Predictor for ChainPredictor {
    fn predict(&self, x: &[f64]) -> Result<Vec<u8>> {
        Ok(self.engine.mode(&self.model, x)?.bits)
    }
}

impl MultiLabelMethod for ClassifierChain {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn train(&self, x: &Matrix, y: &Matrix) -> Result<Box<dyn Predictor>> {
        let order = self.ordering.order(x, y, self.lambda)?;
        let model = train_chain(x, y, &order.permutation, self.lambda)?;
        Ok(Box::new(ChainPredictor {
            model,
            engine: Arc::clone(&self.engine),
        }))
    }
}

/// The five benchmark methods.
pub const BENCHMARK_METHODS: [&str; 5] =
    ["BR", "CC EX", "CC PREIGBON EX", "CC GR", "CC PREIGBON GR"];

/// Builds a method from a name such as `BR`, `CC EX`, `CC PREIGBON GR` or,
/// more generally, `CC <ordering> <engine>`.
pub fn method_by_name(
    name: &str,
    lambda: f64,
    beam_width: usize,
) -> Result<Box<dyn MultiLabelMethod>> {
    let words: Vec<String> = name
        .split_whitespace()
        .map(str::to_ascii_uppercase)
        .collect();
    let words: Vec<&str> = words.iter().map(String::as_str).collect();
    let bad = || Error::UnknownStrategy {
        kind: "method",
        name: name.to_string(),
        known: format!("{}, CC <ordering> <engine>", BENCHMARK_METHODS.join(", ")),
    };
    let engine_name = |w: &str| match w {
        "EX" => "exhaustive".to_string(),
        "GR" => "greedy".to_string(),
        other => other.to_ascii_lowercase(),
    };
    let (ordering, engine) = match words.as_slice() {
        ["BR"] => return Ok(Box::new(BinaryRelevance { lambda })),
        ["CC", e] => ("original".to_string(), engine_name(e)),
        ["CC", o, e] => (o.to_ascii_lowercase(), engine_name(e)),
        _ => return Err(bad()),
    };
    Ok(Box::new(ClassifierChain {
        label: words.join(" "),
        ordering: ordering_strategy(&ordering)?,
        engine: inference_engine(&engine, beam_width)?.into(),
        lambda,
    }))
}

/// Row indices of each test fold: a seeded shuffle cut into contiguous
/// blocks whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if n < folds {
        return Err(Error::InvalidConfig(format!(
            "{n} rows cannot fill {folds} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut block = idx[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub folds: usize,
    pub mean: Measures,
    /// Sample standard deviation across folds.
    pub std: Measures,
    pub per_fold: Vec<Measures>,
}

impl EvalReport {
    pub fn csv_header() -> String {
        let mut cols = vec!["method".to_string()];
        for name in Measures::NAMES {
            cols.push(format!("{name}_mean"));
            cols.push(format!("{name}_std"));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.method.clone()];
        for (m, s) in self.mean.to_array().into_iter().zip(self.std.to_array()) {
            cols.push(format!("{m:.4}"));
            cols.push(format!("{s:.4}"));
        }
        cols.join(",")
    }
}

/// Trains on all but one fold and evaluates on the held-out fold, for every
/// fold. Measures are averaged over test rows, then over folds.
pub fn cross_validate(
    ds: &Dataset,
    method: &dyn MultiLabelMethod,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    let assignment = fold_assignment(ds.n(), folds, seed)?;
    let per_fold: Vec<Measures> = assignment
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            run_fold(ds, method, test).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let k = per_fold.len() as f64;
    let mut mean = [0.0; 5];
    for m in &per_fold {
        mean.iter_mut()
            .zip(m.to_array())
            .for_each(|(s, v)| *s += v / k);
    }
    let mut var = [0.0; 5];
    for m in &per_fold {
        for (i, v) in m.to_array().into_iter().enumerate() {
            var[i] += (v - mean[i]).powi(2) / (k - 1.0);
        }
    }
    Ok(EvalReport {
        method: method.name(),
        folds,
        mean: Measures::from_array(mean),
        std: Measures::from_array(var.map(f64::sqrt)),
        per_fold,
    })
}

fn run_fold(ds: &Dataset, method: &dyn MultiLabelMethod, test: &[usize]) -> Result<Measures> {
    let mut in_test = vec![false; ds.n()];
    test.iter().for_each(|&i| in_test[i] = true);
    let train: Vec<usize> = (0..ds.n()).filter(|&i| !in_test[i]).collect();
    let train_ds = ds.subset(&train);
    let test_ds = ds.subset(test);
    let predictor = method.train(&train_ds.x, &train_ds.y)?;
    let predictions: Vec<Vec<u8>> = (0..test_ds.n())
        .into_par_iter()
        .map(|i| predictor.predict(test_ds.x.row(i)))
        .collect::<Result<_>>()?;
    evaluate_rows(&test_ds.y, &predictions)
}
