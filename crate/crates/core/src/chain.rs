//! Logistic classifier chains and the binary-relevance baseline.
//!
//! Link `k` of a chain with ordering `π` models label `π(k)` given the
//! features and the labels `π(0..k)`. Every public operation speaks in the
//! ORIGINAL label index space; the translation through `π` happens here.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataio::format_real;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::logistic::{self, clip_prob, sigmoid, LogisticFit};

/// Anything that yields the conditional success probability of each chain
/// link given the labels earlier in the chain.
pub trait ConditionalChain: Sync {
    /// Feature dimension including the intercept.
    fn feature_dim(&self) -> usize;

    /// Chain position -> original label index.
    fn order(&self) -> &[usize];

    fn label_count(&self) -> usize {
        self.order().len()
    }

    /// `P(y_{π(position)} = 1 | x, prefix)`, where `prefix` holds the values
    /// of labels `π(0..position)` in chain order.
    fn link_probability(&self, x: &[f64], position: usize, prefix: &[f64]) -> f64;
}

fn check_x(model: &dyn ConditionalChain, x: &[f64]) -> Result<()> {
    if x.len() != model.feature_dim() {
        return Err(Error::dims(format!(
            "feature vector of length {} for a model with {} features",
            x.len(),
            model.feature_dim()
        )));
    }
    Ok(())
}

/// `log P̂(y | x)` accumulated along the chain; `y` in original label order.
pub fn joint_log_probability(model: &dyn ConditionalChain, x: &[f64], y: &[u8]) -> Result<f64> {
    check_x(model, x)?;
    let k = model.label_count();
    if y.len() != k {
        return Err(Error::dims(format!(
            "labelling of length {} for {k} labels",
            y.len()
        )));
    }
    let mut prefix = Vec::with_capacity(k);
    let mut logp = 0.0;
    for (pos, &label) in model.order().iter().enumerate() {
        let p = model.link_probability(x, pos, &prefix);
        let bit = y[label];
        logp += if bit == 1 { p.ln() } else { (1.0 - p).ln() };
        prefix.push(f64::from(bit));
    }
    Ok(logp)
}

/// `P̂(y | x) = Π_k σ(z_k'θ_k)^{y_k} (1 - σ(z_k'θ_k))^{1 - y_k}`, computed in
/// log space.
pub fn joint_probability(model: &dyn ConditionalChain, x: &[f64], y: &[u8]) -> Result<f64> {
    joint_log_probability(model, x, y).map(f64::exp)
}

/// Conditional success probability of chain link `position`, given the
/// prefix labels in chain order.
pub fn conditional_probability(
    model: &dyn ConditionalChain,
    x: &[f64],
    position: usize,
    prefix: &[f64],
) -> Result<f64> {
    check_x(model, x)?;
    if position >= model.label_count() {
        return Err(Error::dims(format!(
            "chain position {position} of {}",
            model.label_count()
        )));
    }
    if prefix.len() != position {
        return Err(Error::dims(format!(
            "prefix of length {} at chain position {position}",
            prefix.len()
        )));
    }
    Ok(model.link_probability(x, position, prefix))
}

/// Convergence summary of one fitted link; absent for models read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkInfo {
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl From<&LogisticFit> for LinkInfo {
    fn from(f: &LogisticFit) -> Self {
        LinkInfo {
            converged: f.converged,
            iterations: f.iterations,
            log_likelihood: f.log_likelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    order: Vec<usize>,
    feature_dim: usize,
    lambda: f64,
    /// Link `k` has `feature_dim + k` coefficients.
    coefficients: Vec<Vec<f64>>,
    info: Option<Vec<LinkInfo>>,
}

pub fn validate_permutation(order: &[usize], k: usize) -> Result<()> {
    if order.len() != k {
        return Err(Error::InvalidConfig(format!(
            "ordering of length {} for {k} labels",
            order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &o in order {
        if o >= k || std::mem::replace(&mut seen[o], true) {
            return Err(Error::InvalidConfig(format!(
                "{order:?} is not a permutation of 0..{k}"
            )));
        }
    }
    Ok(())
}

impl ChainModel {
    /// Builds a chain from explicit coefficients.
    pub fn from_coefficients(
        order: Vec<usize>,
        feature_dim: usize,
        lambda: f64,
        coefficients: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_permutation(&order, coefficients.len())?;
        for (k, c) in coefficients.iter().enumerate() {
            if c.len() != feature_dim + k {
                return Err(Error::dims(format!(
                    "link {k} has {} coefficients, expected {}",
                    c.len(),
                    feature_dim + k
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(ChainModel {
            order,
            feature_dim,
            lambda,
            coefficients,
            info: None,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn link_info(&self) -> Option<&[LinkInfo]> {
        self.info.as_deref()
    }

    /// `pK + K(K-1)/2`.
    pub fn parameter_count(&self) -> usize {
        self.coefficients.iter().map(Vec::len).sum()
    }

    /// Design matrix of link `position`: features then labels `π(0..position)`.
    pub fn link_design(&self, x: &Matrix, y: &Matrix, position: usize) -> Result<Matrix> {
        link_design(x, y, &self.order[..position])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Versioned plain-text form; reals at 17 significant digits.
    pub fn to_text(&self) -> String {
        write_model(
            "chain",
            self.feature_dim,
            &self.order,
            self.lambda,
            &self.coefficients,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let raw = read_model(text, "chain")?;
        Self::from_coefficients(raw.order, raw.feature_dim, raw.lambda, raw.coefficients)
    }
}

impl ConditionalChain for ChainModel {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn order(&self) -> &[usize] {
        &self.order
    }

    fn link_probability(&self, x: &[f64], position: usize, prefix: &[f64]) -> f64 {
        let theta = &self.coefficients[position];
        let (a, b) = theta.split_at(self.feature_dim);
        clip_prob(sigmoid(dot(x, a) + dot(prefix, b)))
    }
}

fn link_design(x: &Matrix, y: &Matrix, labels: &[usize]) -> Result<Matrix> {
    let cols: Vec<Vec<f64>> = labels.iter().map(|&l| y.column(l)).collect();
    x.with_columns(&cols)
}

fn check_training(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::dims(format!(
            "{} feature rows, {} label rows",
            x.rows(),
            y.rows()
        )));
    }
    if y.cols() == 0 {
        return Err(Error::InvalidConfig("no labels".into()));
    }
    Ok(())
}

/// Fits link `k` of `y_{π(k)}` on `(x, y_{π(0)}, …, y_{π(k-1)})` for every `k`.
///
/// Links are independent given the data and are fitted in parallel.
pub fn train_chain(x: &Matrix, y: &Matrix, order: &[usize], lambda: f64) -> Result<ChainModel> {
    check_training(x, y)?;
    validate_permutation(order, y.cols())?;
    let fits: Vec<LogisticFit> = (0..order.len())
        .into_par_iter()
        .map(|pos| {
            let z = link_design(x, y, &order[..pos])?;
            logistic::fit(&z, &y.column(order[pos]), lambda).map_err(|e| Error::Link {
                link: pos,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ChainModel {
        order: order.to_vec(),
        feature_dim: x.cols(),
        lambda,
        info: Some(fits.iter().map(LinkInfo::from).collect()),
        coefficients: fits.into_iter().map(|f| f.coefficients).collect(),
    })
}

/// Minimum over links of `λ_min(H_k(θ̂_k)/n)`.
pub fn chain_regularity_diagnostic(model: &ChainModel, x: &Matrix, y: &Matrix) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for pos in 0..model.order.len() {
        let z = model.link_design(x, y, pos)?;
        let mut h = logistic::neg_hessian(&z, &model.coefficients[pos])?;
        h.scale(1.0 / z.rows() as f64);
        worst = worst.min(crate::linalg::sym_eigenvalues(&h)?.min());
    }
    Ok(worst)
}

/// One independent logistic model per label, on features only.
#[derive(Debug, Clone, PartialEq)]
pub struct BrModel {
    order: Vec<usize>,
    feature_dim: usize,
    lambda: f64,
    coefficients: Vec<Vec<f64>>,
    info: Option<Vec<LinkInfo>>,
}

impl BrModel {
    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn link_info(&self) -> Option<&[LinkInfo]> {
        self.info.as_deref()
    }

    pub fn to_text(&self) -> String {
        write_model(
            "br",
            self.feature_dim,
            &self.order,
            self.lambda,
            &self.coefficients,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let raw = read_model(text, "br")?;
        let k = raw.coefficients.len();
        if raw.order != (0..k).collect::<Vec<_>>() {
            return Err(Error::ModelFormat(
                "binary relevance order must be the identity".into(),
            ));
        }
        if raw.coefficients.iter().any(|c| c.len() != raw.feature_dim) {
            return Err(Error::ModelFormat(
                "every link needs `features` coefficients".into(),
            ));
        }
        Ok(BrModel {
            order: raw.order,
            feature_dim: raw.feature_dim,
            lambda: raw.lambda,
            coefficients: raw.coefficients,
            info: None,
        })
    }
}

impl ConditionalChain for BrModel {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn order(&self) -> &[usize] {
        &self.order
    }

    fn link_probability(&self, x: &[f64], position: usize, _prefix: &[f64]) -> f64 {
        clip_prob(sigmoid(dot(x, &self.coefficients[position])))
    }
}

pub fn train_br(x: &Matrix, y: &Matrix, lambda: f64) -> Result<BrModel> {
    check_training(x, y)?;
    let fits: Vec<LogisticFit> = (0..y.cols())
        .into_par_iter()
        .map(|k| {
            logistic::fit(x, &y.column(k), lambda).map_err(|e| Error::Link {
                link: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(BrModel {
        order: (0..y.cols()).collect(),
        feature_dim: x.cols(),
        lambda,
        info: Some(fits.iter().map(LinkInfo::from).collect()),
        coefficients: fits.into_iter().map(|f| f.coefficients).collect(),
    })
}

/// Either kind of trained model, as read back from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Chain(ChainModel),
    BinaryRelevance(BrModel),
}

impl TrainedModel {
    pub fn as_conditional(&self) -> &dyn ConditionalChain {
        match self {
            TrainedModel::Chain(m) => m,
            TrainedModel::BinaryRelevance(m) => m,
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            TrainedModel::Chain(m) => m.to_text(),
            TrainedModel::BinaryRelevance(m) => m.to_text(),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kind = text
            .lines()
            .nth(1)
            .and_then(|l| l.strip_prefix("kind "))
            .map(str::trim);
        match kind {
            Some("br") => BrModel::from_text(text).map(TrainedModel::BinaryRelevance),
            _ => ChainModel::from_text(text).map(TrainedModel::Chain),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub const MODEL_MAGIC: &str = "logchain-model v1";

fn write_model(kind: &str, p: usize, order: &[usize], lambda: f64, coefs: &[Vec<f64>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC}");
    let _ = writeln!(s, "kind {kind}");
    let _ = writeln!(s, "features {p}");
    let _ = writeln!(s, "labels {}", order.len());
    let joined: Vec<String> = order.iter().map(ToString::to_string).collect();
    let _ = writeln!(s, "order {}", joined.join(" "));
    let _ = writeln!(s, "lambda {}", format_real(lambda));
    for (k, c) in coefs.iter().enumerate() {
        let vals: Vec<String> = c.iter().map(|&v| format_real(v)).collect();
        let _ = writeln!(s, "link {k} {}", vals.join(" "));
    }
    s
}

struct RawModel {
    feature_dim: usize,
    order: Vec<usize>,
    lambda: f64,
    coefficients: Vec<Vec<f64>>,
}

fn read_model(text: &str, expected_kind: &str) -> Result<RawModel> {
    let bad = |m: String| Error::ModelFormat(m);
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(MODEL_MAGIC) {
        return Err(bad(format!("missing `{MODEL_MAGIC}` header")));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing `{key}`")))?;
        line.strip_prefix(key)
            .and_then(|r| {
                r.strip_prefix(' ')
                    .or(if r.is_empty() { Some("") } else { None })
            })
            .map(|r| r.trim().to_string())
            .ok_or_else(|| bad(format!("expected `{key}`, found `{line}`")))
    };
    let kind = field("kind")?;
    if kind != expected_kind {
        return Err(bad(format!(
            "model kind `{kind}`, expected `{expected_kind}`"
        )));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("bad integer `{s}`")))
    };
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad real `{s}`")));
    let feature_dim = parse_usize(&field("features")?)?;
    let labels = parse_usize(&field("labels")?)?;
    let order = field("order")?
        .split_whitespace()
        .map(parse_usize)
        .collect::<Result<Vec<_>>>()?;
    let lambda = parse_f64(&field("lambda")?)?;
    let mut coefficients = Vec::with_capacity(labels);
    for k in 0..labels {
        let row = field("link")?;
        let mut parts = row.split_whitespace();
        let idx = parts.next().map(parse_usize).transpose()?;
        if idx != Some(k) {
            return Err(bad(format!("link {k} out of sequence")));
        }
        coefficients.push(parts.map(parse_f64).collect::<Result<Vec<_>>>()?);
    }
    if order.len() != labels {
        return Err(bad(format!(
            "order lists {} labels, header {labels}",
            order.len()
        )));
    }
    Ok(RawModel {
        feature_dim,
        order,
        lambda,
        coefficients,
    })
}
