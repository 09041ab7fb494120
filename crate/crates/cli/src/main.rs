//! `apart` — generate synthetic regression data, partition a dataset by model
//! competition, run modular-vs-single comparisons, and inspect reports.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use active_partitioning::competition::run_partitioning;
use active_partitioning::data::{gen_anomaly_crest, gen_wave_climb, load_csv, Dataset};
use active_partitioning::harness::{analysis_table, compare, emit_report, ComparisonReport};
use active_partitioning::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "apart",
    about = "Active partitioning: competition-based dataset partitioning and modular models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic regression dataset as CSV.
    GenData(GenDataArgs),
    /// Partition a dataset by model competition and write the result as JSON.
    Partition(PartitionArgs),
    /// Run the repeated modular-vs-single comparison and emit a report.
    Compare(CompareArgs),
    /// Print the per-run analysis metrics table for an existing report.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Synthetic target function: anomaly-crest or wave-climb.
    #[arg(long)]
    function: String,
    /// Number of points to sample.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Gaussian label noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV path (header row required).
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated feature column names.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Comma-separated label column names.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

/// Every experiment config key, exposed as an equally named flag. Flags
/// override the config file, which overrides the chosen profile.
#[derive(Args)]
struct ConfigArgs {
    /// Base profile: paper or desk.
    #[arg(long, default_value = "paper")]
    profile: String,
    /// Flat key=value config file applied on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    partition_epochs: Option<usize>,
    #[arg(long)]
    initial_models: Option<usize>,
    #[arg(long)]
    adding_check_period: Option<usize>,
    #[arg(long)]
    dropping_check_period: Option<usize>,
    #[arg(long)]
    dropping_threshold: Option<f64>,
    #[arg(long)]
    candidate_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    expert_epochs: Option<usize>,
    #[arg(long)]
    search_runs: Option<usize>,
    #[arg(long)]
    min_layers: Option<usize>,
    #[arg(long)]
    max_layers: Option<usize>,
    #[arg(long)]
    min_neurons: Option<usize>,
    #[arg(long)]
    max_neurons: Option<usize>,
    #[arg(long)]
    min_learning_rate: Option<f64>,
    #[arg(long)]
    max_learning_rate: Option<f64>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    svm_gamma: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::profile(&self.profile, 0)?;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            cfg.apply_file(&text)?;
        }
        macro_rules! set {
            ($($key:ident),* $(,)?) => {
                $(if let Some(v) = &self.$key {
                    cfg.set_key(stringify!($key), &v.to_string())?;
                })*
            };
        }
        set!(
            repeats,
            split_ratio,
            master_seed,
            partition_epochs,
            initial_models,
            adding_check_period,
            dropping_check_period,
            dropping_threshold,
            candidate_epochs,
            batch_size,
            expert_epochs,
            search_runs,
            min_layers,
            max_layers,
            min_neurons,
            max_neurons,
            min_learning_rate,
            max_learning_rate,
            svm_c,
            svm_gamma,
            points,
            noise_sd,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output JSON path for the partition result.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for report.json, runs.csv and histogram.svg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Path to a report.json produced by `compare`.
    #[arg(long)]
    report: PathBuf,
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let load = load_csv(&args.data, &args.features, &args.labels)
        .with_context(|| format!("loading {}", args.data.display()))?;
    if load.dropped_rows > 0 {
        eprintln!("note: dropped {} rows with blank cells", load.dropped_rows);
    }
    Ok(load.dataset)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let data = match args.function.as_str() {
                "anomaly-crest" => gen_anomaly_crest(args.n, args.noise, args.seed)?,
                "wave-climb" => gen_wave_climb(args.n, args.noise, args.seed)?,
                other => bail!("unknown function '{other}' (expected anomaly-crest or wave-climb)"),
            };
            let file = fs::File::create(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;
            data.write_csv(file)?;
            println!("wrote {} points to {}", data.len(), args.out.display());
        }
        Command::Partition(args) => {
            let cfg = args.config.resolve()?;
            let data = load_data(&args.data)?.fit_apply_scaler();
            let result = run_partitioning(&data, &cfg.partition_config(cfg.master_seed))?;
            fs::write(&args.out, result.to_json()?)
                .with_context(|| format!("writing {}", args.out.display()))?;
            println!(
                "partitioned {} points into {} partitions; result at {}",
                data.len(),
                result.partitions.len(),
                args.out.display()
            );
        }
        Command::Compare(args) => {
            let cfg = args.config.resolve()?;
            let data = load_data(&args.data)?;
            let report = compare(&data, &cfg, Some(&args.out))?;
            emit_report(&report, &args.out)?;
            println!(
                "modular mean loss {:.6e}, single mean loss {:.6e}; report at {}",
                report.modular_mean_loss,
                report.single_mean_loss,
                args.out.display()
            );
        }
        Command::Analyze(args) => {
            let json = fs::read_to_string(&args.report)
                .with_context(|| format!("reading {}", args.report.display()))?;
            let report = ComparisonReport::from_json(&json)?;
            print!("{}", analysis_table(&report));
        }
    }
    Ok(())
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
