//! Synthetic chain models and the sampler used in the simulation studies.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::chain::ConditionalChain;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::logistic::sigmoid;
use crate::rng::{self, Rng};

/// Half-width of the uniform feature law.
pub const FEATURE_RANGE: f64 = 4.0;

/// A true chain along the identity ordering: `θ_k` has `p + k - 1` entries
/// (features first, then coefficients on `y_1 … y_{k-1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    thetas: Vec<Vec<f64>>,
    feature_dim: usize,
    order: Vec<usize>,
}

impl ChainSpec {
    pub fn new(thetas: Vec<Vec<f64>>) -> Result<Self> {
        let feature_dim = thetas.first().map_or(0, Vec::len);
        let spec = ChainSpec {
            order: (0..thetas.len()).collect(),
            thetas,
            feature_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.feature_dim == 0 {
            return Err(Error::InvalidConfig(
                "a chain needs at least one label and an intercept".into(),
            ));
        }
        for (k, t) in self.thetas.iter().enumerate() {
            if t.len() != self.feature_dim + k {
                return Err(Error::dims(format!(
                    "θ_{} has {} entries, expected {}",
                    k + 1,
                    t.len(),
                    self.feature_dim + k
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(())
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn k(&self) -> usize {
        self.thetas.len()
    }
}

impl ConditionalChain for ChainSpec {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn order(&self) -> &[usize] {
        &self.order
    }

    fn link_probability(&self, x: &[f64], position: usize, prefix: &[f64]) -> f64 {
        let (a, b) = self.thetas[position].split_at(self.feature_dim);
        sigmoid(dot(x, a) + dot(prefix, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M8,
    M9,
    M10,
    M11,
    M12,
}

impl ModelId {
    pub const ALL: [ModelId; 12] = [
        ModelId::M1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::M7,
        ModelId::M8,
        ModelId::M9,
        ModelId::M10,
        ModelId::M11,
        ModelId::M12,
    ];

    pub fn index(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.index())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix('M').or_else(|| t.strip_prefix('m'));
        digits
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|i| (1..=12).contains(i))
            .map(|i| ModelId::ALL[i - 1])
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Feature part shared by M5, M11 and M12.
fn alternating_a() -> Vec<f64> {
    (0..10)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

fn with_prefix(prefix: &[f64], labels: &[&[f64]]) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|l| prefix.iter().chain(l.iter()).copied().collect())
        .collect()
}

/// Label coefficients `5, -5, 5, …` of the given length.
fn alternating_fives(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| if i % 2 == 0 { 5.0 } else { -5.0 })
        .collect()
}

/// The parameter vectors of a model from the zoo.
pub fn model_spec(id: ModelId) -> ChainSpec {
    let base = [2.0, -2.0, 1.0];
    let thetas = match id {
        ModelId::M1 => vec![vec![0.0, 1.0], vec![0.0, 1.0, 3.0]],
        ModelId::M2 => vec![vec![0.0, 1.0], vec![0.0, 1.0, 5.0]],
        ModelId::M3 => with_prefix(
            &base,
            &[
                &[],
                &[5.0],
                &[5.0, -5.0],
                &[-5.0, 5.0, -5.0],
                &[5.0, -5.0, 5.0, -5.0],
                &[5.0, -5.0, 5.0, -5.0, 5.0],
            ],
        ),
        ModelId::M4 => with_prefix(
            &base,
            &[
                &[],
                &[5.0],
                &[5.0, -5.0],
                &[-5.0, 5.0, -5.0],
                &[5.0, -5.0, 5.0, -5.0],
            ],
        ),
        ModelId::M5 => with_prefix(
            &alternating_a(),
            &[&[], &[5.0], &[5.0, -5.0], &[-5.0, 5.0, -5.0]],
        ),
        ModelId::M6 => vec![
            vec![1.0, -3.0, 0.5],
            vec![1.5, -2.5, 1.0, 5.0],
            vec![2.0, -2.0, 1.5, 5.0, -5.0],
            vec![2.5, -1.5, 2.0, -5.0, 5.0, -5.0],
        ],
        ModelId::M7 => with_prefix(&base, &[&[], &[5.0], &[5.0, -5.0], &[-5.0, 5.0, -5.0]]),
        ModelId::M8 => with_prefix(&base, &[&[], &[2.0], &[2.0, -2.0], &[-2.0, 2.0, -2.0]]),
        ModelId::M9 => with_prefix(
            &base,
            &[&[], &[10.0], &[10.0, -10.0], &[-10.0, 10.0, -10.0]],
        ),
        ModelId::M10 => with_prefix(
            &[5.0, -5.0, 2.0],
            &[&[], &[5.0], &[5.0, -5.0], &[-5.0, 5.0, -5.0]],
        ),
        ModelId::M11 => with_prefix(
            &alternating_a(),
            &[&[], &[-8.0], &[1.0, 3.0], &[0.5, 5.0, 10.0]],
        ),
        ModelId::M12 => {
            let a = alternating_a();
            (0..10)
                .map(|k| {
                    let labels = if k == 3 {
                        vec![-5.0, 5.0, -5.0]
                    } else {
                        alternating_fives(k)
                    };
                    a.iter().copied().chain(labels).collect()
                })
                .collect()
        }
    };
    ChainSpec::new(thetas).expect("zoo models are well formed")
}

pub fn model_spec_by_name(name: &str) -> Result<ChainSpec> {
    name.parse().map(model_spec)
}

/// Draws `n` rows: features i.i.d. uniform on `[-4, 4]`, then labels in
/// chain order from `σ(z_k'θ_k)`.
pub fn sample(spec: &ChainSpec, n: usize, seed: u64) -> Dataset {
    sample_with_rng(spec, n, &mut rng::stream(seed, 0))
}

pub fn sample_with_rng(spec: &ChainSpec, n: usize, rng: &mut Rng) -> Dataset {
    let p = spec.feature_dim;
    let k = spec.k();
    let mut features = Vec::with_capacity(n * (p - 1));
    let mut labels = Vec::with_capacity(n * k);
    let mut x = vec![1.0; p];
    let mut y = Vec::with_capacity(k);
    for _ in 0..n {
        for xj in &mut x[1..] {
            *xj = rng.random_range(-FEATURE_RANGE..=FEATURE_RANGE);
        }
        y.clear();
        for pos in 0..k {
            let prob = spec.link_probability(&x, pos, &y);
            y.push(f64::from(rng.random::<f64>() < prob));
        }
        features.extend_from_slice(&x[1..]);
        labels.extend_from_slice(&y);
    }
    let features = Matrix::from_vec(n, p - 1, features).expect("finite draws");
    let labels = Matrix::from_vec(n, k, labels).expect("binary draws");
    Dataset::new(
        features,
        labels,
        (1..p).map(|j| format!("x{j}")).collect(),
        (1..=k).map(|j| format!("y{j}")).collect(),
    )
    .expect("sampler output is consistent")
}

/// `P(y₂ = 1 | x)` for the two-label chain `θ₁ = (0, 1)`, `θ₂ = (0, 1, a)`:
/// `σ(x) + σ(x)[σ(x + a) - σ(x)]`.
pub fn marginal_y2_example(x: f64, a: f64) -> f64 {
    let s = sigmoid(x);
    s + s * (sigmoid(x + a) - s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_entries() {
        assert_eq!(model_spec(ModelId::M1).thetas()[1], vec![0.0, 1.0, 3.0]);
        assert_eq!(model_spec(ModelId::M2).thetas()[1], vec![0.0, 1.0, 5.0]);
        assert_eq!(
            model_spec(ModelId::M9).thetas()[1],
            vec![2.0, -2.0, 1.0, 10.0]
        );
        assert_eq!(
            model_spec(ModelId::M3).thetas()[5],
            vec![2.0, -2.0, 1.0, 5.0, -5.0, 5.0, -5.0, 5.0]
        );
        let m12 = model_spec(ModelId::M12);
        assert_eq!(m12.k(), 10);
        assert_eq!(m12.thetas()[0], alternating_a());
        assert_eq!(&m12.thetas()[3][10..], &[-5.0, 5.0, -5.0]);
        assert_eq!(
            &m12.thetas()[9][10..],
            &[5.0, -5.0, 5.0, -5.0, 5.0, -5.0, 5.0, -5.0, 5.0]
        );
        assert_eq!(
            &model_spec(ModelId::M11).thetas()[3][10..],
            &[0.5, 5.0, 10.0]
        );
    }

    #[test]
    fn label_counts_and_feature_dims() {
        let expect = [
            (2, 2),
            (2, 2),
            (6, 3),
            (5, 3),
            (4, 10),
            (4, 3),
            (4, 3),
            (4, 3),
            (4, 3),
            (4, 3),
            (4, 10),
            (10, 10),
        ];
        for (id, (k, p)) in ModelId::ALL.into_iter().zip(expect) {
            let s = model_spec(id);
            assert_eq!((s.k(), s.feature_dim()), (k, p), "{id}");
            s.validate().unwrap();
        }
    }

    #[test]
    fn model_ids_parse() {
        assert_eq!("M7".parse::<ModelId>().unwrap(), ModelId::M7);
        assert_eq!("m12".parse::<ModelId>().unwrap(), ModelId::M12);
        for bad in ["M0", "M13", "X1", ""] {
            assert!(matches!(
                bad.parse::<ModelId>(),
                Err(Error::UnknownModel(_))
            ));
        }
        for id in ModelId::ALL {
            assert_eq!(id.to_string().parse::<ModelId>().unwrap(), id);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ChainSpec::new(vec![]).is_err());
        assert!(ChainSpec::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).is_err());
        assert!(ChainSpec::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn zero_model_labels_are_fair_coins() {
        let spec = ChainSpec::new(vec![vec![0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let n = 20_000;
        let ds = sample(&spec, n, 3);
        for k in 0..2 {
            let mean = ds.label_column(k).iter().sum::<f64>() / n as f64;
            assert!(
                (mean - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(),
                "{mean}"
            );
        }
    }

    #[test]
    fn features_stay_in_range() {
        let ds = sample(&model_spec(ModelId::M5), 2000, 1);
        assert_eq!(ds.p(), 10);
        for j in 1..ds.p() {
            assert!(ds.x.column(j).iter().all(|v| v.abs() <= FEATURE_RANGE));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = model_spec(ModelId::M6);
        assert_eq!(sample(&spec, 300, 11), sample(&spec, 300, 11));
        assert_ne!(sample(&spec, 300, 11), sample(&spec, 300, 12));
    }

    #[test]
    fn m1_conditional_frequency_near_zero() {
        let n = 100_000;
        let ds = sample(&model_spec(ModelId::M1), n, 2024);
        let (mut hits, mut count) = (0.0, 0.0);
        for i in 0..n {
            if ds.x[(i, 1)].abs() < 0.1 && ds.y[(i, 0)] == 1.0 {
                count += 1.0;
                hits += ds.y[(i, 1)];
            }
        }
        // Over the window the conditional ranges over σ(3 ± 0.1).
        let target = sigmoid(3.0);
        let se = (target * (1.0 - target) / count).sqrt();
        assert!(
            ((hits / count) - target).abs() < 4.0 * se + 0.005,
            "{} vs {target}",
            hits / count
        );
    }

    #[test]
    fn marginal_example_values() {
        assert_eq!(marginal_y2_example(0.0, 0.0), 0.5);
        assert!((marginal_y2_example(0.0, 3.0) - 0.7262870634).abs() < 1e-9);
    }

    #[test]
    fn marginal_example_matches_summing_out_y1() {
        for &(x, a) in &[(0.3, 1.7), (-2.0, 5.0), (1.2, -3.0), (3.9, 0.1)] {
            let p1 = sigmoid(x);
            let brute = p1 * sigmoid(x + a) + (1.0 - p1) * sigmoid(x);
            assert!((brute - marginal_y2_example(x, a)).abs() < 1e-15);
        }
    }
}
