//! Simulation sweeps and benchmark runs, emitted as CSV.
//!
//! Every (grid point, repetition) pair draws from its own random stream, so
//! results are identical however the work is scheduled.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::chain::train_chain;
use crate::dataio::{load_dataset, top_k_labels, Dataset, LabelSpec};
use crate::error::{Error, Result};
use crate::inference::{inference_engine, Exhaustive, InferenceEngine};
use crate::metrics::{cross_validate, method_by_name, EvalReport, BENCHMARK_METHODS};
use crate::ordering::{find_ordering, loglik_ordering};
use crate::rng::{self, grid_stream};
use crate::speclink::{carrier_family, family_names};
use crate::synthgen::{model_spec, sample_with_rng, ModelId};

/// Label count above which benchmarks need `long`.
pub const LONG_LABEL_THRESHOLD: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: Option<ModelId>,
    pub dataset: Option<PathBuf>,
    /// Training sizes, strictly ascending.
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    /// Carrier families; the mode sweep's selected ordering uses the first.
    pub families: Vec<String>,
    pub seed: u64,
    /// `auto` picks greedy for M12 and exhaustive otherwise.
    pub engine: String,
    pub beam_width: usize,
    pub lambda: f64,
    pub output: Option<PathBuf>,
    /// Fresh test points per repetition in the mode sweep.
    pub test_points: usize,
    /// Allows M12 sweeps and benchmarks with many labels.
    pub long: bool,
    /// Keep only the most frequent labels of a benchmark dataset.
    pub top_k: Option<usize>,
    pub labels: LabelSpec,
    pub folds: usize,
    pub methods: Vec<String>,
    pub standardize: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            model: None,
            dataset: None,
            n_grid: vec![50, 100, 250, 500, 1000, 2000, 4000],
            repetitions: 200,
            families: family_names().iter().map(|s| s.to_string()).collect(),
            seed: 2017,
            engine: "auto".into(),
            beam_width: 5,
            lambda: 0.001,
            output: None,
            test_points: 200,
            long: false,
            top_k: None,
            labels: LabelSpec::Prefixed,
            folds: 5,
            methods: BENCHMARK_METHODS.iter().map(|s| s.to_string()).collect(),
            standardize: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "dataset",
    "n_grid",
    "repetitions",
    "families",
    "seed",
    "engine",
    "beam_width",
    "lambda",
    "output",
    "test_points",
    "long",
    "top_k",
    "labels",
    "folds",
    "methods",
    "standardize",
];

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "" | "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!(
            "{key}: expected a boolean, got `{v}`"
        ))),
    }
}

/// `prefixed`, a count of trailing attributes, or `name1,name2,…`.
pub fn parse_label_spec(v: &str) -> LabelSpec {
    let t = v.trim();
    if t.eq_ignore_ascii_case("prefixed") {
        LabelSpec::Prefixed
    } else if let Ok(k) = t.parse::<usize>() {
        LabelSpec::LastCount(k)
    } else {
        LabelSpec::Names(list(t))
    }
}

impl SweepConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_").to_ascii_lowercase();
        let v = value.trim();
        let num = |what: &str| -> Result<usize> {
            v.parse().map_err(|_| {
                Error::InvalidConfig(format!("{what}: expected an integer, got `{v}`"))
            })
        };
        match key.as_str() {
            "model" => self.model = Some(v.parse()?),
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "n_grid" | "n" => {
                self.n_grid = list(v)
                    .iter()
                    .map(|s| {
                        s.parse()
                            .map_err(|_| Error::InvalidConfig(format!("n_grid: bad size `{s}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "repetitions" | "reps" => self.repetitions = num("repetitions")?,
            "families" | "family" => self.families = list(v),
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("seed: bad value `{v}`")))?
            }
            "engine" => self.engine = v.to_string(),
            "beam_width" => self.beam_width = num("beam_width")?,
            "lambda" => {
                self.lambda = v
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("lambda: bad value `{v}`")))?
            }
            "output" => self.output = Some(PathBuf::from(v)),
            "test_points" => self.test_points = num("test_points")?,
            "long" => self.long = parse_bool("long", v)?,
            "top_k" => self.top_k = Some(num("top_k")?),
            "labels" => self.labels = parse_label_spec(v),
            "folds" => self.folds = num("folds")?,
            "methods" => self.methods = list(v),
            "standardize" => self.standardize = parse_bool("standardize", v)?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown key `{key}`; expected one of {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = SweepConfig::default();
        cfg.apply_kv(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid needs at least one positive size");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly ascending");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a nonnegative number");
        }
        if self.beam_width == 0 {
            return bad("beam_width must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.test_points == 0 {
            return bad("test_points must be at least 1");
        }
        for f in &self.families {
            carrier_family(f)?;
        }
        if self.engine != "auto" {
            inference_engine(&self.engine, self.beam_width)?;
        }
        Ok(())
    }

    fn require_model(&self) -> Result<ModelId> {
        let id = self
            .model
            .ok_or_else(|| Error::InvalidConfig("a model id (M1..M12) is required".into()))?;
        if id == ModelId::M12 && !self.long {
            return Err(Error::InvalidConfig(
                "M12 sweeps take hours at full scale; pass --long to run them".into(),
            ));
        }
        Ok(id)
    }

    /// The engine named in the config, resolving `auto` for the given model.
    pub fn engine_for(&self, model: Option<ModelId>) -> Result<Box<dyn InferenceEngine>> {
        let name = match (self.engine.as_str(), model) {
            ("auto", Some(ModelId::M12)) => "greedy",
            ("auto", _) => "exhaustive",
            (other, _) => other,
        };
        inference_engine(name, self.beam_width)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingRow {
    pub model: ModelId,
    pub criterion: String,
    pub n: usize,
    pub repetitions: usize,
    /// `None` for the analytic random-choice reference.
    pub correct: Option<usize>,
    pub failures: usize,
    pub probability: f64,
}

pub fn ordering_csv(rows: &[OrderingRow]) -> String {
    let mut s = String::from("model,criterion,n,repetitions,correct,failures,probability\n");
    for r in rows {
        let correct = r
            .correct
            .map_or_else(|| "NA".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.model, r.criterion, r.n, r.repetitions, correct, r.failures, r.probability
        );
    }
    s
}

/// Frequency with which each criterion recovers the identity ordering.
///
/// Rows come out grouped by criterion (the configured families, then
/// `loglik`, then `random`), each in grid order.
pub fn run_ordering_sweep(cfg: &SweepConfig) -> Result<Vec<OrderingRow>> {
    cfg.validate()?;
    let id = cfg.require_model()?;
    let spec = model_spec(id);
    let families = cfg
        .families
        .iter()
        .map(|f| carrier_family(f))
        .collect::<Result<Vec<_>>>()?;
    let k = spec.k();
    let truth: Vec<usize> = (0..k).collect();
    let criteria = families.len() + 1;

    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|g| (0..cfg.repetitions).map(move |r| (g, r)))
        .collect();
    // outcome[c] = Some(correct?) or None on failure
    let outcomes: Vec<Vec<Option<bool>>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let mut stream = rng::stream(cfg.seed, grid_stream(g, r));
            let ds = sample_with_rng(&spec, cfg.n_grid[g], &mut stream);
            let mut out: Vec<Option<bool>> = families
                .iter()
                .map(|f| {
                    find_ordering(&ds.x, &ds.y, f.as_ref(), cfg.lambda)
                        .ok()
                        .map(|o| o.permutation == truth)
                })
                .collect();
            out.push(
                loglik_ordering(&ds.x, &ds.y, cfg.lambda)
                    .ok()
                    .map(|o| o.permutation == truth),
            );
            out
        })
        .collect();

    let mut names: Vec<String> = families
        .iter()
        .map(|f| f.name().to_ascii_lowercase())
        .collect();
    names.push("loglik".into());
    let mut rows = Vec::new();
    for c in 0..criteria {
        for (g, &n) in cfg.n_grid.iter().enumerate() {
            let block = &outcomes[g * cfg.repetitions..(g + 1) * cfg.repetitions];
            let correct = block.iter().filter(|o| o[c] == Some(true)).count();
            let failures = block.iter().filter(|o| o[c].is_none()).count();
            rows.push(OrderingRow {
                model: id,
                criterion: names[c].clone(),
                n,
                repetitions: cfg.repetitions,
                correct: Some(correct),
                failures,
                probability: correct as f64 / cfg.repetitions as f64,
            });
        }
    }
    for &n in &cfg.n_grid {
        rows.push(OrderingRow {
            model: id,
            criterion: "random".into(),
            n,
            repetitions: cfg.repetitions,
            correct: None,
            failures: 0,
            probability: 1.0 / factorial(k),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Correct,
    Selected,
    Reversed,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Correct, Regime::Selected, Regime::Reversed];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Correct => "correct",
            Regime::Selected => "selected",
            Regime::Reversed => "reversed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub model: ModelId,
    pub regime: Regime,
    pub n: usize,
    pub repetitions: usize,
    pub test_points: usize,
    /// Matches over all repetition × test-point pairs.
    pub correct: usize,
    /// Repetitions whose training failed; their test points count as misses.
    pub failures: usize,
    pub probability: f64,
}

pub fn mode_csv(rows: &[ModeRow]) -> String {
    let mut s =
        String::from("model,regime,n,repetitions,test_points,correct,failures,probability\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.model,
            r.regime.name(),
            r.n,
            r.repetitions,
            r.test_points,
            r.correct,
            r.failures,
            r.probability
        );
    }
    s
}

/// Frequency with which the predicted mode equals the true mode, for the
/// true ordering, the ordering selected with the first configured family,
/// and the reversed true ordering. The estimate is the grand mean over
/// every repetition and test point.
pub fn run_mode_sweep(cfg: &SweepConfig) -> Result<Vec<ModeRow>> {
    cfg.validate()?;
    let id = cfg.require_model()?;
    let spec = model_spec(id);
    let family = carrier_family(cfg.families.first().map_or("pregibon", String::as_str))?;
    let engine = cfg.engine_for(Some(id))?;
    let oracle = Exhaustive::default();
    let k = spec.k();

    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|g| (0..cfg.repetitions).map(move |r| (g, r)))
        .collect();
    // per job: for each regime, Some(matches) or None when training failed
    let outcomes: Vec<Vec<Option<usize>>> = jobs
        .par_iter()
        .map(|&(g, r)| -> Result<Vec<Option<usize>>> {
            let mut stream = rng::stream(cfg.seed, grid_stream(g, r));
            let train = sample_with_rng(&spec, cfg.n_grid[g], &mut stream);
            let test = sample_with_rng(&spec, cfg.test_points, &mut stream);
            let truth = (0..test.n())
                .map(|i| oracle.mode(&spec, test.x.row(i)).map(|l| l.bits))
                .collect::<Result<Vec<_>>>()?;
            Ok(Regime::ALL
                .iter()
                .map(|regime| {
                    let order = match regime {
                        Regime::Correct => Some((0..k).collect()),
                        Regime::Reversed => Some((0..k).rev().collect()),
                        Regime::Selected => {
                            find_ordering(&train.x, &train.y, family.as_ref(), cfg.lambda)
                                .ok()
                                .map(|o| o.permutation)
                        }
                    }?;
                    let model = train_chain(&train.x, &train.y, &order, cfg.lambda).ok()?;
                    let mut hits = 0;
                    for (i, t) in truth.iter().enumerate() {
                        if engine.mode(&model, test.x.row(i)).ok()?.bits == *t {
                            hits += 1;
                        }
                    }
                    Some(hits)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let total = (cfg.repetitions * cfg.test_points) as f64;
    let mut rows = Vec::new();
    for (ri, &regime) in Regime::ALL.iter().enumerate() {
        for (g, &n) in cfg.n_grid.iter().enumerate() {
            let block = &outcomes[g * cfg.repetitions..(g + 1) * cfg.repetitions];
            let correct: usize = block.iter().filter_map(|o| o[ri]).sum();
            let failures = block.iter().filter(|o| o[ri].is_none()).count();
            rows.push(ModeRow {
                model: id,
                regime,
                n,
                repetitions: cfg.repetitions,
                test_points: cfg.test_points,
                correct,
                failures,
                probability: correct as f64 / total,
            });
        }
    }
    Ok(rows)
}

/// Loads the configured dataset and applies label filtering and scaling.
pub fn prepare_dataset(cfg: &SweepConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("a dataset path is required".into()))?;
    let mut ds = load_dataset(path, &cfg.labels)?;
    if let Some(k) = cfg.top_k {
        ds = top_k_labels(&ds, k)?;
    }
    if cfg.standardize {
        ds = ds.standardized();
    }
    Ok(ds)
}

/// Cross-validated measures for each configured method.
pub fn run_benchmark(cfg: &SweepConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let ds = prepare_dataset(cfg)?;
    if ds.k() > LONG_LABEL_THRESHOLD && !cfg.long {
        return Err(Error::InvalidConfig(format!(
            "{} labels; pass --long for full-scale runs or --top-k to reduce them",
            ds.k()
        )));
    }
    cfg.methods
        .iter()
        .map(|name| {
            let method = method_by_name(name, cfg.lambda, cfg.beam_width)?;
            cross_validate(&ds, method.as_ref(), cfg.folds, cfg.seed)
        })
        .collect()
}

pub fn benchmark_csv(reports: &[EvalReport]) -> String {
    let mut s = EvalReport::csv_header();
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Writes `text` to the configured output, or returns it for the caller to print.
pub fn emit(cfg: &SweepConfig, text: &str) -> Result<Option<String>> {
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            Ok(None)
        }
        None => Ok(Some(text.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: &str) -> SweepConfig {
        let mut cfg = SweepConfig::default();
        cfg.apply_kv(&format!(
            "model = {model}\nn_grid = 100, 200\nrepetitions = 3\nfamilies = pregibon, morgan\ntest_points = 20\n"
        ))
        .unwrap();
        cfg
    }

    #[test]
    fn kv_parsing() {
        let mut cfg = SweepConfig::default();
        cfg.apply_kv(
            "# comment\nmodel = M3\nn-grid = 50,100\nrepetitions=7\nlambda = 0\nlong = true\nlabels = 6\nmethods = BR, CC EX  # trailing\n",
        )
        .unwrap();
        assert_eq!(cfg.model, Some(ModelId::M3));
        assert_eq!(cfg.n_grid, vec![50, 100]);
        assert_eq!(cfg.repetitions, 7);
        assert_eq!(cfg.lambda, 0.0);
        assert!(cfg.long);
        assert_eq!(cfg.labels, LabelSpec::LastCount(6));
        assert_eq!(cfg.methods, vec!["BR", "CC EX"]);
        cfg.validate().unwrap();

        assert!(matches!(
            cfg.apply_kv("colour = blue"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            cfg.apply_kv("\nmodel"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn validation() {
        let mut cfg = small("M1");
        cfg.n_grid = vec![200, 100];
        assert!(cfg.validate().is_err());
        let mut cfg = small("M1");
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small("M1");
        cfg.families = vec!["nope".into()];
        assert!(cfg.validate().is_err());
        let cfg = small("M12");
        assert!(matches!(
            run_ordering_sweep(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn ordering_sweep_shape_and_determinism() {
        let cfg = small("M2");
        let rows = run_ordering_sweep(&cfg).unwrap();
        // (pregibon, morgan, loglik, random) × 2 sizes
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.probability)));
        assert_eq!(rows.last().unwrap().probability, 0.5);
        assert_eq!(
            ordering_csv(&rows),
            ordering_csv(&run_ordering_sweep(&cfg).unwrap())
        );
    }

    #[test]
    fn single_repetition_gives_zero_or_one() {
        let mut cfg = small("M1");
        cfg.repetitions = 1;
        for r in run_ordering_sweep(&cfg).unwrap() {
            if r.criterion != "random" {
                assert!(r.probability == 0.0 || r.probability == 1.0);
            }
        }
    }

    #[test]
    fn mode_sweep_shape() {
        let cfg = small("M1");
        let rows = run_mode_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows
            .iter()
            .all(|r| r.probability >= 0.0 && r.probability <= 1.0));
        assert_eq!(mode_csv(&rows), mode_csv(&run_mode_sweep(&cfg).unwrap()));
    }

    #[test]
    fn random_reference_for_ten_labels() {
        assert!((1.0 / factorial(10) - 2.755731922398589e-7).abs() < 1e-20);
    }

    #[test]
    fn auto_engine() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.engine_for(Some(ModelId::M12)).unwrap().name(), "greedy");
        assert_eq!(
            cfg.engine_for(Some(ModelId::M3)).unwrap().name(),
            "exhaustive"
        );
    }
}
