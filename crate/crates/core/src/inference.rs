//! Joint-mode search over the label tree of a chain.

use std::cmp::Ordering as CmpOrdering;

use rayon::prelude::*;

use crate::chain::{joint_probability, ConditionalChain};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Default refusal threshold for exhaustive enumeration.
pub const EXHAUSTIVE_CAP: usize = 25;

/// A predicted label vector in original label order and its joint
/// probability under the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Labelling {
    pub bits: Vec<u8>,
    pub probability: f64,
}

impl Labelling {
    fn from_chain_order(
        model: &dyn ConditionalChain,
        x: &[f64],
        chain_bits: &[u8],
    ) -> Result<Self> {
        let mut bits = vec![0u8; chain_bits.len()];
        for (&label, &b) in model.order().iter().zip(chain_bits) {
            bits[label] = b;
        }
        let probability = joint_probability(model, x, &bits)?;
        Ok(Labelling { bits, probability })
    }
}

pub trait InferenceEngine: Send + Sync {
    fn name(&self) -> String;

    fn mode(&self, model: &dyn ConditionalChain, x: &[f64]) -> Result<Labelling>;
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

/// Compares two labellings in original order as bit strings.
fn original_bits_cmp(order: &[usize], a: &[u8], b: &[u8]) -> CmpOrdering {
    let to_original = |chain: &[u8]| {
        let mut bits = vec![0u8; chain.len()];
        for (&label, &v) in order.iter().zip(chain) {
            bits[label] = v;
        }
        bits
    };
    to_original(a).cmp(&to_original(b))
}

/// Exact arg-max of the joint probability by depth-first enumeration with
/// shared prefix probabilities.
#[derive(Debug, Clone)]
pub struct Exhaustive {
    pub cap: usize,
}

impl Default for Exhaustive {
    fn default() -> Self {
        Exhaustive {
            cap: EXHAUSTIVE_CAP,
        }
    }
}

struct Search<'a> {
    model: &'a dyn ConditionalChain,
    x: &'a [f64],
    prefix: Vec<f64>,
    path: Vec<u8>,
    best: Option<(f64, Vec<u8>)>,
}

impl Search<'_> {
    fn descend(&mut self, logp: f64) {
        let k = self.model.label_count();
        let pos = self.path.len();
        if pos == k {
            let better = match &self.best {
                None => true,
                Some((b, bits)) => {
                    logp > *b
                        || (logp == *b
                            && original_bits_cmp(self.model.order(), &self.path, bits)
                                == CmpOrdering::Less)
                }
            };
            if better {
                self.best = Some((logp, self.path.clone()));
            }
            return;
        }
        let p = self.model.link_probability(self.x, pos, &self.prefix);
        for (bit, lp) in [(0u8, (1.0 - p).ln()), (1u8, p.ln())] {
            self.path.push(bit);
            self.prefix.push(f64::from(bit));
            self.descend(logp + lp);
            self.prefix.pop();
            self.path.pop();
        }
    }
}

impl InferenceEngine for Exhaustive {
    fn name(&self) -> String {
        "exhaustive".into()
    }

    fn mode(&self, model: &dyn ConditionalChain, x: &[f64]) -> Result<Labelling> {
        check_x(model, x)?;
        let k = model.label_count();
        if k > self.cap {
            return Err(Error::TooManyLabels {
                labels: k,
                cap: self.cap,
            });
        }
        let mut search = Search {
            model,
            x,
            prefix: Vec::with_capacity(k),
            path: Vec::with_capacity(k),
            best: None,
        };
        search.descend(0.0);
        let (_, chain_bits) = search.best.expect("the tree has at least one leaf");
        Labelling::from_chain_order(model, x, &chain_bits)
    }
}

/// Follows the most probable branch at each link; a conditional of exactly
/// one half picks 1.
#[derive(Debug, Clone, Default)]
pub struct Greedy;

impl InferenceEngine for Greedy {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn mode(&self, model: &dyn ConditionalChain, x: &[f64]) -> Result<Labelling> {
        check_x(model, x)?;
        let k = model.label_count();
        let mut prefix = Vec::with_capacity(k);
        let mut chain_bits = Vec::with_capacity(k);
        for pos in 0..k {
            let bit = u8::from(model.link_probability(x, pos, &prefix) >= 0.5);
            chain_bits.push(bit);
            prefix.push(f64::from(bit));
        }
        Labelling::from_chain_order(model, x, &chain_bits)
    }
}

/// Breadth-first search keeping the `width` most probable prefixes per level.
#[derive(Debug, Clone)]
pub struct Beam {
    pub width: usize,
}

impl Beam {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidConfig("beam width must be at least 1".into()));
        }
        Ok(Beam { width })
    }
}

impl InferenceEngine for Beam {
    fn name(&self) -> String {
        format!("beam:{}", self.width)
    }

    fn mode(&self, model: &dyn ConditionalChain, x: &[f64]) -> Result<Labelling> {
        check_x(model, x)?;
        let width = self.width.max(1);
        let k = model.label_count();
        let mut frontier: Vec<(f64, Vec<u8>)> = vec![(0.0, Vec::new())];
        for pos in 0..k {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for (logp, bits) in frontier {
                let prefix: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
                let p = model.link_probability(x, pos, &prefix);
                let mut zero = bits.clone();
                zero.push(0);
                let mut one = bits;
                one.push(1);
                next.push((logp + (1.0 - p).ln(), zero));
                next.push((logp + p.ln(), one));
            }
            // Equal scores keep the larger prefix, so a one-wide beam takes
            // the 1-branch on an even split exactly as greedy does.
            next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| b.1.cmp(&a.1)));
            next.truncate(width);
            frontier = next;
        }
        let order = model.order();
        let (_, best) = frontier
            .into_iter()
            .reduce(|best, cand| {
                let take = cand.0 > best.0
                    || (cand.0 == best.0
                        && original_bits_cmp(order, &cand.1, &best.1) == CmpOrdering::Less);
                if take {
                    cand
                } else {
                    best
                }
            })
            .expect("beam is never empty");
        Labelling::from_chain_order(model, x, &best)
    }
}

pub const ENGINE_NAMES: &[&str] = &["exhaustive", "greedy", "beam"];

/// Looks an engine up by name. `beam:<b>` overrides `beam_width`.
pub fn inference_engine(name: &str, beam_width: usize) -> Result<Box<dyn InferenceEngine>> {
    let lower = name.trim().to_ascii_lowercase();
    let (head, arg) = match lower.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (lower.as_str(), None),
    };
    match head {
        "exhaustive" | "ex" | "pcc" => Ok(Box::new(Exhaustive::default())),
        "greedy" | "gr" => Ok(Box::new(Greedy)),
        "beam" => {
            let width = match arg {
                Some(a) => a
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad beam width `{a}`")))?,
                None => beam_width,
            };
            Ok(Box::new(Beam::new(width)?))
        }
        _ => Err(Error::UnknownStrategy {
            kind: "inference engine",
            name: name.to_string(),
            known: ENGINE_NAMES.join(", "),
        }),
    }
}

/// Mode of every row of `x`, computed in parallel.
pub fn predict_rows(
    engine: &dyn InferenceEngine,
    model: &dyn ConditionalChain,
    x: &Matrix,
) -> Result<Vec<Labelling>> {
    (0..x.rows())
        .into_par_iter()
        .map(|i| engine.mode(model, x.row(i)))
        .collect()
}
