//! `ccasched`: predict and schedule region EDP on composite-core processors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ccasched_core::dataset::{build_training_table, Dataset, OracleTable, SyntheticSpec};
use ccasched_core::pipeline::{prepare_features, run_pipeline, train_all, PipelineConfig};
use ccasched_core::report::{
    accuracies_to_csv, distribution_to_csv, load_accuracies, shipped_accuracies, tradeoff,
    CostTable,
};
use ccasched_core::scheduler::{
    decisions_to_csv, distribution, oracle_table, read_decisions, regret, schedule_application,
};
use ccasched_core::{
    evaluate, generate_synthetic, Algorithm, Architecture, Error, Hyperparams, Predictor, Result,
    SelectionMode,
};

#[derive(Parser)]
#[command(name = "ccasched", version, about)]
struct Cli {
    /// Architecture JSON (default: 8 base / 4 composed cores, 4 DVFS points).
    #[arg(long, global = true)]
    arch: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic measurement suite and its oracle.
    Gen(GenArgs),
    /// Select features and train predictors on a measurement CSV.
    Train(TrainArgs),
    /// Report RMAE and accuracy of trained models on a measurement CSV.
    Evaluate(EvaluateArgs),
    /// Schedule every ROI of a measurement CSV with a trained model.
    Schedule(ScheduleArgs),
    /// Exhaustive-search optimum per ROI plus its distribution.
    Characterize(DataArg),
    /// Distribution of the configurations chosen in a decisions or oracle CSV.
    Distribution(DistributionArgs),
    /// Rank predictors by accuracy per unit of hardware area.
    Tradeoff(TradeoffArgs),
    /// Run the whole experiment from a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Synthetic spec JSON; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_workloads: Option<u32>,
    #[arg(long)]
    rois_per_workload: Option<u32>,
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Args)]
struct DataArg {
    /// Measurement CSV.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated algorithm tags (default: all five).
    #[arg(long, value_delimiter = ',')]
    algorithms: Vec<String>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// `paper_fixed` or `auto`.
    #[arg(long, default_value = "paper_fixed")]
    feature_mode: String,
    /// JSON list of hyperparameter overrides.
    #[arg(long)]
    hyperparams: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model JSON files.
    #[arg(long, num_args = 1.., required = true)]
    model: Vec<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Oracle CSV; regret is reported when given.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Args)]
struct DistributionArgs {
    /// Decisions CSV or oracle CSV.
    #[arg(long)]
    decisions: PathBuf,
}

#[derive(Args)]
struct TradeoffArgs {
    /// `algorithm,accuracy_pct` CSV (default: the shipped table).
    #[arg(long, conflicts_with = "uniform")]
    accuracy: Option<PathBuf>,
    /// Give every algorithm this accuracy percent.
    #[arg(long)]
    uniform: Option<f64>,
    /// `algorithm,latency_cycles,power_w,area_units` CSV (default: shipped).
    #[arg(long)]
    costs: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_arch(path: Option<&Path>) -> Result<Architecture> {
    path.map_or_else(|| Ok(Architecture::default()), Architecture::load)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn parse_algorithms(tags: &[String]) -> Result<Vec<Algorithm>> {
    if tags.is_empty() {
        return Ok(Algorithm::ALL.to_vec());
    }
    tags.iter().map(|t| t.parse()).collect()
}

fn gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let arch = load_arch(cli.arch.as_deref())?;
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(n) = args.n_workloads {
        spec.n_workloads = n;
    }
    if let Some(n) = args.rois_per_workload {
        spec.rois_per_workload = n;
    }
    if let Some(sd) = args.noise_sd {
        spec.noise_sd = sd;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let (ds, oracle) = generate_synthetic(&spec, &arch)?;
    let m = write(&cli.out, "measurements.csv", &ds.to_csv_string())?;
    let o = write(&cli.out, "oracle.csv", &oracle.to_csv_string())?;
    println!("{} ROIs, {} measurements", ds.n_rois(), ds.n_samples());
    println!("wrote {}\nwrote {}", m.display(), o.display());
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let arch = load_arch(cli.arch.as_deref())?;
    let algorithms = parse_algorithms(&args.algorithms)?;
    let mode: SelectionMode = args.feature_mode.parse()?;
    let overrides: Vec<Hyperparams> = match &args.hyperparams {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text)?
        }
        None => Vec::new(),
    };
    let seed = cli.seed.unwrap_or(42);
    let hyperparams: Vec<Hyperparams> = algorithms
        .iter()
        .map(|&a| {
            overrides
                .iter()
                .find(|hp| hp.algorithm() == a)
                .cloned()
                .unwrap_or_else(|| Hyperparams::default_for(a).with_seed(seed))
        })
        .collect();
    let ds = Dataset::load(&args.data)?;
    let (report, table) = prepare_features(&ds, &arch, args.k, mode)?;
    let predictors = train_all(&table, &hyperparams)?;
    println!("features: {}", report.selected_names.join(", "));
    write(&cli.out, "feature_report.json", &to_json(&report))?;
    let models = cli.out.join("models");
    for p in &predictors {
        let path = write(&models, &format!("{}.json", p.algorithm), &p.to_json())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn evaluate_cmd(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let arch = load_arch(cli.arch.as_deref())?;
    let ds = Dataset::load(&args.data)?;
    let mut accuracies = BTreeMap::new();
    let mut rows = String::from("algorithm,rmae_pct,accuracy_pct\n");
    for path in &args.model {
        let p = Predictor::load(path)?;
        let table = build_training_table(&ds, &arch, &p.selected)?;
        let rmae = evaluate(&p, &table)?;
        let accuracy = 100.0 - rmae;
        println!(
            "{:<18} RMAE {rmae:>8.3}%  accuracy {accuracy:>8.3}%",
            p.algorithm.name()
        );
        rows.push_str(&format!("{},{rmae},{accuracy}\n", p.algorithm));
        accuracies.insert(p.algorithm, accuracy);
    }
    write(&cli.out, "evaluation.csv", &rows)?;
    write(&cli.out, "accuracy.csv", &accuracies_to_csv(&accuracies))?;
    Ok(())
}

fn schedule(cli: &Cli, args: &ScheduleArgs) -> Result<()> {
    let arch = load_arch(cli.arch.as_deref())?;
    let ds = Dataset::load(&args.data)?;
    let p = Predictor::load(&args.model)?;
    let decisions = schedule_application(&p, &ds, &arch)?;
    let path = write(&cli.out, "decisions.csv", &decisions_to_csv(&decisions))?;
    println!("{} ROIs scheduled with {}", decisions.len(), p.algorithm);
    if let Some(oracle) = &args.oracle {
        let oracle = OracleTable::load(oracle)?;
        println!("regret {:.3}%", regret(&decisions, &oracle, &ds)?);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn write_distribution(
    out: &Path,
    chosen: &[ccasched_core::Configuration],
    arch: &Architecture,
) -> Result<()> {
    let report = distribution(chosen, arch)?;
    for (class, total) in &report.classes {
        println!(
            "{:<20} {:>4} {:>7.2}%",
            class.to_string(),
            total.count,
            total.fraction * 100.0
        );
    }
    write(out, "distribution.csv", &distribution_to_csv(&report))?;
    write(out, "distribution.json", &to_json(&report))?;
    Ok(())
}

fn characterize(cli: &Cli, args: &DataArg) -> Result<()> {
    let arch = load_arch(cli.arch.as_deref())?;
    let ds = Dataset::load(&args.data)?;
    let oracle = oracle_table(&ds, &arch)?;
    let chosen = oracle
        .entries()
        .map(|e| e.config(&arch))
        .collect::<Result<Vec<_>>>()?;
    write(&cli.out, "oracle.csv", &oracle.to_csv_string())?;
    write_distribution(&cli.out, &chosen, &arch)
}

fn distribution_cmd(cli: &Cli, args: &DistributionArgs) -> Result<()> {
    let arch = load_arch(cli.arch.as_deref())?;
    let file = fs::File::open(&args.decisions).map_err(|e| io_err(&args.decisions, e))?;
    let chosen: Vec<_> = read_decisions(file, &args.decisions.display().to_string(), &arch)?
        .into_iter()
        .map(|(_, cfg)| cfg)
        .collect();
    write_distribution(&cli.out, &chosen, &arch)
}

fn tradeoff_cmd(cli: &Cli, args: &TradeoffArgs) -> Result<()> {
    let costs = match &args.costs {
        Some(path) => CostTable::load(path)?,
        None => CostTable::shipped(),
    };
    let accuracies = match (&args.accuracy, args.uniform) {
        (Some(path), _) => load_accuracies(path)?,
        (None, Some(pct)) => costs.rows.keys().map(|&a| (a, pct)).collect(),
        (None, None) => shipped_accuracies(),
    };
    let report = tradeoff(&accuracies, &costs)?;
    for row in &report.ranking {
        println!(
            "{:>2}. {:<18} accuracy {:>6.2}%  area {:>6}  ratio {:.6}",
            row.rank,
            row.algorithm.name(),
            row.accuracy_pct,
            row.area_units,
            row.ratio
        );
    }
    write(&cli.out, "tradeoff.csv", &report.to_csv_string())?;
    Ok(())
}

fn pipeline(cli: &Cli, args: &PipelineArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(path) = &cli.arch {
        cfg.arch = Architecture::load(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let summary = run_pipeline(&cfg, &cli.out)?;
    println!(
        "{} ROIs: {} train / {} test; features {}",
        summary.n_rois,
        summary.train_rois,
        summary.test_rois,
        summary.selected_features.join(", ")
    );
    for a in &summary.algorithms {
        println!(
            "{:<18} RMAE {:>8.3}%  regret {:>8.3}%",
            a.algorithm.name(),
            a.rmae_pct,
            a.regret_pct
        );
    }
    println!("wrote {}", cli.out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::Schedule(a) => schedule(cli, a),
        Command::Characterize(a) => characterize(cli, a),
        Command::Distribution(a) => distribution_cmd(cli, a),
        Command::Tradeoff(a) => tradeoff_cmd(cli, a),
        Command::Pipeline(a) => pipeline(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
