use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use logchain::chain::{train_br, train_chain, TrainedModel};
use logchain::dataio::Dataset;
use logchain::experiments::{
    benchmark_csv, emit, mode_csv, ordering_csv, prepare_dataset, run_benchmark, run_mode_sweep,
    run_ordering_sweep, SweepConfig,
};
use logchain::inference::predict_rows;
use logchain::metrics::evaluate_rows;
use logchain::ordering::ordering_strategy;
use logchain::synthgen::{model_spec, sample};

#[derive(Parser)]
#[command(name = "logchain", version, about = "Logistic classifier chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// How often each criterion recovers the true label ordering.
    OrderSweep(Common),
    /// How often the fitted chain's joint mode equals the true mode.
    ModeSweep(Common),
    /// Cross-validated measures of the configured methods on a dataset.
    Benchmark(Common),
    /// Train a chain (or binary relevance) and save it.
    Fit(FitArgs),
    /// Predict label sets for a dataset with a saved model.
    Predict(PredictArgs),
}

/// Every setting of a run. Flags override values read from `--config`.
#[derive(Args)]
struct Common {
    /// File of `key = value` lines using the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic model, M1..M12.
    #[arg(long)]
    model: Option<String>,
    /// ARFF or CSV dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated training sizes.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    repetitions: Option<String>,
    /// Comma-separated carrier families.
    #[arg(long)]
    families: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// auto, exhaustive, greedy or beam.
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    beam_width: Option<String>,
    /// Ridge penalty.
    #[arg(long)]
    lambda: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    test_points: Option<String>,
    /// Allow full-scale runs on large label sets.
    #[arg(long)]
    long: bool,
    /// Keep only the k most frequent labels.
    #[arg(long)]
    top_k: Option<String>,
    /// `prefixed`, a trailing label count, or comma-separated names.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    /// Comma-separated methods such as `BR,CC EX,CC pregibon GR`.
    #[arg(long)]
    methods: Option<String>,
    /// Scale features to zero mean and unit variance.
    #[arg(long)]
    standardize: bool,
}

impl Common {
    fn config(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::from_kv_file(path)?,
            None => SweepConfig::default(),
        };
        let flags = [
            ("model", &self.model),
            ("dataset", &self.dataset),
            ("n_grid", &self.n_grid),
            ("repetitions", &self.repetitions),
            ("families", &self.families),
            ("seed", &self.seed),
            ("engine", &self.engine),
            ("beam_width", &self.beam_width),
            ("lambda", &self.lambda),
            ("output", &self.output),
            ("test_points", &self.test_points),
            ("top_k", &self.top_k),
            ("labels", &self.labels),
            ("folds", &self.folds),
            ("methods", &self.methods),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.long |= self.long;
        cfg.standardize |= self.standardize;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Ordering strategy: a carrier family, loglik, original, reverse or
    /// `fixed:i,j,...`. Use `br` for binary relevance.
    #[arg(long, default_value = "pregibon")]
    ordering: String,
    /// Where to save the trained model.
    #[arg(long)]
    save: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// A model written by `fit`.
    #[arg(long)]
    load: PathBuf,
}

/// Training data: the dataset if one is given, otherwise a sample of the
/// largest grid size from the synthetic model.
fn training_data(cfg: &SweepConfig) -> Result<Dataset> {
    if cfg.dataset.is_some() {
        return Ok(prepare_dataset(cfg)?);
    }
    let Some(id) = cfg.model else {
        bail!("fit needs --dataset or --model");
    };
    let n = *cfg.n_grid.last().expect("validated grid is nonempty");
    Ok(sample(&model_spec(id), n, cfg.seed))
}

fn fit(args: &FitArgs) -> Result<String> {
    let cfg = args.common.config()?;
    let ds = training_data(&cfg)?;
    let (model, summary) = if args.ordering.eq_ignore_ascii_case("br") {
        let m = train_br(&ds.x, &ds.y, cfg.lambda)?;
        (
            TrainedModel::BinaryRelevance(m),
            "binary relevance".to_string(),
        )
    } else {
        let strategy = ordering_strategy(&args.ordering)?;
        let ordering = strategy.order(&ds.x, &ds.y, cfg.lambda)?;
        let m = train_chain(&ds.x, &ds.y, &ordering.permutation, cfg.lambda)?;
        let names: Vec<&str> = ordering
            .permutation
            .iter()
            .map(|&j| ds.label_names[j].as_str())
            .collect();
        (
            TrainedModel::Chain(m),
            format!("chain order {}", names.join(" -> ")),
        )
    };
    model.save(&args.save)?;
    Ok(format!(
        "trained {summary} on {} rows, {} features, {} labels; saved to {}\n",
        ds.n(),
        ds.p() - 1,
        ds.k(),
        args.save.display()
    ))
}

fn predict(args: &PredictArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let model = TrainedModel::load(&args.load)?;
    let ds = prepare_dataset(&cfg)?;
    let chain = model.as_conditional();
    if ds.p() != chain.feature_dim() {
        bail!(
            "model expects {} features, dataset has {}",
            chain.feature_dim() - 1,
            ds.p() - 1
        );
    }
    let engine = cfg.engine_for(None)?;
    let rows = predict_rows(engine.as_ref(), chain, &ds.x)?;
    if ds.k() == chain.label_count() {
        let bits: Vec<Vec<u8>> = rows.iter().map(|l| l.bits.clone()).collect();
        let m = evaluate_rows(&ds.y, &bits)?;
        eprintln!(
            "hamming {:.4}, subset accuracy {:.4}, F {:.4}",
            m.hamming, m.subset_accuracy, m.f_measure
        );
    }
    let names: Vec<String> = if ds.k() == chain.label_count() {
        ds.label_names.clone()
    } else {
        (1..=chain.label_count()).map(|j| format!("y{j}")).collect()
    };
    let mut out = format!("{},probability\n", names.join(","));
    for l in &rows {
        let bits: Vec<String> = l.bits.iter().map(u8::to_string).collect();
        out.push_str(&format!("{},{:e}\n", bits.join(","), l.probability));
    }
    emit_or_print(&cfg, &out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::OrderSweep(c) => {
            let cfg = c.config()?;
            let rows = run_ordering_sweep(&cfg)?;
            emit_or_print(&cfg, &ordering_csv(&rows))
        }
        Command::ModeSweep(c) => {
            let cfg = c.config()?;
            let rows = run_mode_sweep(&cfg)?;
            emit_or_print(&cfg, &mode_csv(&rows))
        }
        Command::Benchmark(c) => {
            let cfg = c.config()?;
            let reports = run_benchmark(&cfg)?;
            emit_or_print(&cfg, &benchmark_csv(&reports))
        }
        Command::Fit(a) => {
            let msg = fit(&a)?;
            eprint!("{msg}");
            Ok(())
        }
        Command::Predict(a) => predict(&a),
    }
}

fn emit_or_print(cfg: &SweepConfig, text: &str) -> Result<()> {
    if let Some(t) = emit(cfg, text)? {
        print!("{t}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
