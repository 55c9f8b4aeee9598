use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use labelopt_core::eval::{self, GridSpec, Method, SynthDatasetSpec};
use labelopt_core::io;
use labelopt_core::milp::{self, MilpConfig};
use labelopt_core::model::{Dataset, LabelAlphabet, Prediction, PredictionSet};
use labelopt_core::pipeline::{
    run_opal, run_opal_al, run_pseudo, run_supervised, run_threshold_baseline, AlConfig, BaselineConfig, OpalConfig,
    ProviderSpec, TruthOracle,
};
use labelopt_core::predictors::{self, SoftmaxModel, TrainConfig};
use labelopt_core::report::RunReport;
use labelopt_core::splitter::{self, SplitConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "labelopt", version, about = "Confidence-weighted automatic labelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a dataset into fine-tuning, optimization and remainder subsets.
    Split(SplitArgs),
    /// Train a softmax classifier.
    Train(TrainArgs),
    /// Write predictions of a trained classifier.
    Predict(PredictArgs),
    /// Solve an optimization instance.
    Solve(SolveArgs),
    /// Write the MILP of an instance in MPS format.
    ExportMps(ExportArgs),
    /// Run the labelling pipeline against a simulated oracle.
    RunOpal(OpalArgs),
    /// Run the active-learning variant.
    RunOpalAl {
        #[command(flatten)]
        opal: OpalArgs,
        #[arg(long, default_value_t = 50)]
        beta: usize,
    },
    /// Run a baseline labeller.
    RunBaseline(BaselineArgs),
    /// Generate a synthetic clustered dataset.
    GenSynth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an evaluation grid.
    RunGrid {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the labelling service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Comma-separated label names; defaults to the distinct truth labels.
    #[arg(long, value_delimiter = ',')]
    alphabet: Option<Vec<String>>,
    /// Truth source for the simulated annotator, as `truth:<dataset csv>`.
    #[arg(long)]
    oracle: Option<String>,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    h_initial: f64,
    #[arg(long, default_value_t = 1000)]
    s_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// `id,label` file.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',')]
    alphabet: Option<Vec<String>>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "c1")]
    classifier_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MilpArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e6)]
    big_m: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

impl MilpArgs {
    fn config(&self) -> MilpConfig {
        MilpConfig {
            big_m: self.big_m,
            epsilon: self.epsilon,
            ..MilpConfig::new(self.alpha)
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    milp: MilpArgs,
    #[arg(long)]
    time_limit: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    milp: MilpArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OpalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Prediction files, one provider each.
    #[arg(long, value_delimiter = ',')]
    predictions: Vec<PathBuf>,
    /// Number of bootstrapped softmax classifiers to train instead of reading predictions.
    #[arg(long, conflicts_with = "predictions")]
    softmax: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.15)]
    h_initial: f64,
    #[arg(long, default_value_t = 1000)]
    s_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    time_limit: Option<u64>,
    #[arg(long)]
    report: PathBuf,
}

impl OpalArgs {
    fn config(&self) -> Result<OpalConfig> {
        let providers = match self.softmax {
            Some(0) => bail!("--softmax needs at least one classifier"),
            Some(k) => vec![
                ProviderSpec::Softmax {
                    train: TrainConfig::default(),
                    bootstrap: k > 1,
                };
                k
            ],
            None if self.predictions.is_empty() => bail!("give --predictions or --softmax"),
            None => self.predictions.iter().map(|p| ProviderSpec::File { path: p.clone() }).collect(),
        };
        let split = SplitConfig {
            s_max: self.s_max,
            ..SplitConfig::new(self.h_initial, self.seed)
        };
        let mut cfg = OpalConfig::new(self.alpha, split, providers);
        cfg.milp.time_limit_seconds = self.time_limit;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Supervised,
    Pseudo,
    Threshold,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    method: Baseline,
    #[command(flatten)]
    data: DataArgs,
    /// `id,value` scalar per element, for the threshold baseline.
    #[arg(long)]
    metric: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    h_total: f64,
    /// Validation size for pseudo-labelling.
    #[arg(long)]
    validation: Option<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    #[arg(long)]
    data_dir: PathBuf,
    /// Dataset CSV whose truth column answers simulated labelling.
    #[arg(long)]
    simulate: Option<PathBuf>,
    /// Run optimization off the request path; `advance` then returns 202.
    #[arg(long)]
    background: bool,
}

fn oracle_path(spec: &str) -> Result<&Path> {
    match spec.strip_prefix("truth:") {
        Some(p) if !p.is_empty() => Ok(Path::new(p)),
        _ => bail!("unsupported oracle `{spec}`; expected truth:<path>"),
    }
}

/// Loads the dataset; an oracle file fills in or overrides truth labels.
fn load(args: &DataArgs) -> Result<Dataset> {
    let mut rows = io::read_file(&args.dataset, io::read_dataset_rows)?;
    if let Some(spec) = &args.oracle {
        let path = oracle_path(spec)?;
        let truth: HashMap<String, String> = io::read_file(path, io::read_dataset_rows)?
            .into_iter()
            .filter_map(|(id, t, _)| Some((id, t?)))
            .collect();
        for row in &mut rows {
            if let Some(t) = truth.get(&row.0) {
                row.1 = Some(t.clone());
            }
        }
    }
    let features = args
        .features
        .as_deref()
        .map(|p| io::read_file(p, io::read_features))
        .transpose()?;
    let alphabet = args.alphabet.as_ref().map(LabelAlphabet::new).transpose()?;
    Ok(io::build_dataset(rows, features, alphabet)?)
}

fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    let m = &report.metrics;
    match m.accuracy {
        Some(a) => println!("manual_effort={:.4} accuracy={a:.4}", m.manual_effort),
        None => println!("manual_effort={:.4}", m.manual_effort),
    }
    Ok(())
}

fn sorted_features(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows: Vec<_> = io::read_file(path, io::read_features)?.into_iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows)
}

fn split(args: SplitArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let cfg = SplitConfig {
        s_max: args.s_max,
        ..SplitConfig::new(args.h_initial, args.seed)
    };
    let p = splitter::split(&dataset, &cfg)?;
    fs::write(&args.out, serde_json::to_string_pretty(&p)?)?;
    println!("d_t={} d_o={} d_prime={}", p.d_t.len(), p.d_o.len(), p.d_prime.len());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let features: HashMap<String, Vec<f64>> = io::read_file(&args.features, io::read_features)?;
    let labels = io::read_file(&args.labels, |f| io::read_id_column(f, "label"))?;
    let alphabet = match &args.alphabet {
        Some(a) => LabelAlphabet::new(a)?,
        None => LabelAlphabet::from_tokens(labels.iter().map(|l| l.1.clone()))?,
    };
    let mut xs = Vec::with_capacity(labels.len());
    let mut ys = Vec::with_capacity(labels.len());
    for (id, label) in &labels {
        let x = features.get(id).with_context(|| format!("no features for `{id}`"))?;
        xs.push(x.clone());
        ys.push(alphabet.id(label)?);
    }
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        l2: args.l2,
        seed: args.seed,
    };
    let model = predictors::train_softmax(&xs, &ys, &alphabet, &cfg)?;
    fs::write(&args.out, serde_json::to_string_pretty(&model)?)?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model: SoftmaxModel = serde_json::from_str(&fs::read_to_string(&args.model)?)?;
    model.validate()?;
    let mut set = PredictionSet::new(vec![args.classifier_id])?;
    for (id, x) in sorted_features(&args.features)? {
        let (label, confidence) = predictors::predict(&model, &x)?;
        set.insert(0, &id, Prediction::new(label, confidence.max(predictors::MIN_CONFIDENCE))?)?;
    }
    io::write_file(&args.out, |f| io::write_predictions(f, &set, &model.alphabet))?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let instance = io::read_file(&args.milp.instance, io::read_instance)?;
    let mut cfg = args.milp.config();
    cfg.time_limit_seconds = args.time_limit;
    let sol = milp::solve(&instance, &cfg)?;
    let doc = json!({
        "omega": sol.omega,
        "x": sol.x,
        "manual_count": sol.manual_count,
        "lower_bound": sol.lower_bound,
        "gap": sol.gap,
        "status": sol.status.as_str(),
    });
    fs::write(&args.out, serde_json::to_string_pretty(&doc)?)?;
    println!("status={} manual_count={}", sol.status.as_str(), sol.manual_count);
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let instance = io::read_file(&args.milp.instance, io::read_instance)?;
    let model = milp::formulate(&instance, &args.milp.config())?;
    fs::write(&args.out, milp::export_mps(&model))?;
    Ok(())
}

fn baseline(args: BaselineArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let mut oracle = TruthOracle::from_dataset(&dataset);
    let cfg = BaselineConfig {
        v: args.validation,
        ..BaselineConfig::new(args.h_total, args.seed)
    };
    let train = TrainConfig {
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let report = match args.method {
        Baseline::Supervised => run_supervised(&dataset, &train, &cfg, &mut oracle)?,
        Baseline::Pseudo => run_pseudo(&dataset, &train, &cfg, &mut oracle)?,
        Baseline::Threshold => {
            let path = args.metric.as_deref().context("the threshold baseline needs --metric")?;
            let metric = io::read_file(path, |f| io::read_id_values(f, eval::METRIC_COLUMN))?;
            let (report, rule) = run_threshold_baseline(&dataset, &metric, &cfg, &mut oracle)?;
            log::info!("threshold rule {rule:?}");
            report
        }
    };
    write_report(&args.report, &report)
}

fn serve(args: ServeArgs) -> Result<()> {
    let truth = args.simulate.as_deref().map(labelopt_service::read_truth).transpose()?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let cfg = labelopt_service::ServiceConfig {
        data_dir: args.data_dir,
        truth,
        background: args.background,
    };
    tokio::runtime::Runtime::new()?.block_on(labelopt_service::serve(addr, cfg))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Solve(a) => solve(a),
        Command::ExportMps(a) => export(a),
        Command::RunOpal(a) => {
            let dataset = load(&a.data)?;
            let report = run_opal(&dataset, &a.config()?, &mut TruthOracle::from_dataset(&dataset))?;
            write_report(&a.report, &report)
        }
        Command::RunOpalAl { opal, beta } => {
            let dataset = load(&opal.data)?;
            let cfg = AlConfig {
                beta,
                ..AlConfig::new(opal.config()?)
            };
            let report = run_opal_al(&dataset, &cfg, &mut TruthOracle::from_dataset(&dataset))?;
            write_report(&opal.report, &report)
        }
        Command::RunBaseline(a) => baseline(a),
        Command::GenSynth { spec, out } => {
            let spec: SynthDatasetSpec = serde_json::from_str(&fs::read_to_string(&spec)?)?;
            let files = eval::write_synth(&eval::gen_synth(&spec)?, &out)?;
            println!("{}", files.dataset.display());
            Ok(())
        }
        Command::RunGrid { grid, method, out } => {
            let spec: GridSpec = serde_json::from_str(&fs::read_to_string(&grid)?)?;
            let outcome = eval::run_grid(&spec, method)?;
            io::write_file(&out, |f| {
                eval::write_rows(f, &outcome.rows).map_err(|e| io::IoError::Invalid(e.to_string()))
            })?;
            for (row, msg) in &outcome.errors {
                log::warn!("row {row}: {msg}");
            }
            println!("{} rows, {} failed", outcome.rows.len(), outcome.errors.len());
            Ok(())
        }
        Command::Serve(a) => serve(a),
    }
}
