//! The experiment driver: repeated modular-vs-single comparison runs, the
//! performance metric, analysis metrics and report emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::competition::{run_partitioning, PartitionConfig};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::hyper::{random_search, HyperBounds};
use crate::modular::{evaluate_loss, train_modular, ModularTrainConfig};
use crate::nn::TrainConfig;
use crate::seed;

/// Full experiment settings as a flat key=value surface. Every field can be
/// set from a config file or an equally named CLI flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub split_ratio: f64,
    pub master_seed: u64,
    pub partition_epochs: usize,
    pub initial_models: usize,
    pub adding_check_period: usize,
    pub dropping_check_period: usize,
    pub dropping_threshold: f64,
    pub candidate_epochs: usize,
    pub batch_size: usize,
    pub expert_epochs: usize,
    pub search_runs: usize,
    pub min_layers: usize,
    pub max_layers: usize,
    pub min_neurons: usize,
    pub max_neurons: usize,
    pub min_learning_rate: f64,
    pub max_learning_rate: f64,
    pub svm_c: f64,
    pub svm_gamma: Option<f64>,
    /// Synthetic generator size when the CLI generates data.
    pub points: usize,
    pub noise_sd: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper(0)
    }
}

impl ExperimentConfig {
    /// Paper-faithful profile: 10,000 points, 1,000 partitioning epochs,
    /// 100 search runs, 10 repeats.
    pub fn paper(master_seed: u64) -> Self {
        Self {
            repeats: 10,
            split_ratio: 0.8,
            master_seed,
            partition_epochs: 1000,
            initial_models: 10,
            adding_check_period: 1,
            dropping_check_period: 1,
            dropping_threshold: 1.8,
            candidate_epochs: 100,
            batch_size: 16,
            expert_epochs: 500,
            search_runs: 100,
            min_layers: 2,
            max_layers: 6,
            min_neurons: 4,
            max_neurons: 10,
            min_learning_rate: 0.0001,
            max_learning_rate: 0.005,
            svm_c: 1.0,
            svm_gamma: None,
            points: 10_000,
            noise_sd: 0.01,
        }
    }

    /// Desk-scale profile: 2,000 points, 300 partitioning epochs, 20 search
    /// runs, 3 repeats.
    pub fn desk(master_seed: u64) -> Self {
        Self {
            repeats: 3,
            partition_epochs: 300,
            search_runs: 20,
            points: 2_000,
            ..Self::paper(master_seed)
        }
    }

    pub fn profile(name: &str, master_seed: u64) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper(master_seed)),
            "desk" => Ok(Self::desk(master_seed)),
            other => Err(Error::InvalidConfig(format!("unknown profile '{other}'"))),
        }
    }

    pub fn bounds(&self) -> HyperBounds {
        HyperBounds {
            min_layers: self.min_layers,
            max_layers: self.max_layers,
            min_neurons: self.min_neurons,
            max_neurons: self.max_neurons,
            min_learning_rate: self.min_learning_rate,
            max_learning_rate: self.max_learning_rate,
            search_runs: self.search_runs,
        }
    }

    pub fn partition_config(&self, master_seed: u64) -> PartitionConfig {
        PartitionConfig {
            epochs: self.partition_epochs,
            initial_models: self.initial_models,
            adding_check_period: self.adding_check_period,
            dropping_check_period: self.dropping_check_period,
            dropping_threshold: self.dropping_threshold,
            candidate_epochs: self.candidate_epochs,
            master_seed,
            train: TrainConfig { batch_size: self.batch_size, epochs: 1 },
            bounds: self.bounds(),
            svm_c: self.svm_c,
            svm_gamma: self.svm_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig("split_ratio must be in (0,1)".into()));
        }
        if self.expert_epochs == 0 {
            return Err(Error::InvalidConfig("expert_epochs must be >= 1".into()));
        }
        self.partition_config(0).validate()
    }

    /// Sets one flat key, as found in config files and CLI flags.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value '{value}' for key '{key}'")))
        }
        match key {
            "repeats" => self.repeats = parse(key, value)?,
            "split_ratio" => self.split_ratio = parse(key, value)?,
            "master_seed" => self.master_seed = parse(key, value)?,
            "partition_epochs" => self.partition_epochs = parse(key, value)?,
            "initial_models" => self.initial_models = parse(key, value)?,
            "adding_check_period" => self.adding_check_period = parse(key, value)?,
            "dropping_check_period" => self.dropping_check_period = parse(key, value)?,
            "dropping_threshold" => self.dropping_threshold = parse(key, value)?,
            "candidate_epochs" => self.candidate_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "expert_epochs" => self.expert_epochs = parse(key, value)?,
            "search_runs" => self.search_runs = parse(key, value)?,
            "min_layers" => self.min_layers = parse(key, value)?,
            "max_layers" => self.max_layers = parse(key, value)?,
            "min_neurons" => self.min_neurons = parse(key, value)?,
            "max_neurons" => self.max_neurons = parse(key, value)?,
            "min_learning_rate" => self.min_learning_rate = parse(key, value)?,
            "max_learning_rate" => self.max_learning_rate = parse(key, value)?,
            "svm_c" => self.svm_c = parse(key, value)?,
            "svm_gamma" => self.svm_gamma = Some(parse(key, value)?),
            "points" => self.points = parse(key, value)?,
            "noise_sd" => self.noise_sd = parse(key, value)?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Applies a flat key=value config file. Blank lines and `#` comments are
    /// skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value, got '{line}'", no + 1))
            })?;
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

/// Appendix-style per-run analysis: expert count and population variances of
/// the experts' learning rates, parameter counts and partition proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub n_experts: usize,
    pub lr_variance: f64,
    pub param_count_variance: f64,
    pub partition_proportion_variance: f64,
}

fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Population variances over one run's experts.
pub fn analysis_metrics(
    learning_rates: &[f64],
    param_counts: &[usize],
    proportions: &[f64],
) -> RunAnalysis {
    let counts: Vec<f64> = param_counts.iter().map(|&c| c as f64).collect();
    RunAnalysis {
        n_experts: learning_rates.len(),
        lr_variance: population_variance(learning_rates),
        param_count_variance: population_variance(&counts),
        partition_proportion_variance: population_variance(proportions),
    }
}

/// Percentage loss reduction of one modular run against the single model's
/// mean loss: `100 * (1 - modular / single_mean)`.
pub fn performance_value(single_mean_loss: f64, modular_loss: f64) -> Result<f64> {
    if !(single_mean_loss > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "single-model mean loss must be positive, got {single_mean_loss}"
        )));
    }
    Ok(100.0 * (single_mean_loss - modular_loss) / single_mean_loss)
}

/// One comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub modular_test_loss: f64,
    pub single_test_loss: f64,
    pub n_experts: usize,
    pub expert_learning_rates: Vec<f64>,
    pub expert_param_counts: Vec<usize>,
    pub partition_proportions: Vec<f64>,
    pub modular_total_params: usize,
    pub single_param_count: usize,
    pub final_pool_size: usize,
    pub boundary_training_accuracy: f64,
    pub analysis: RunAnalysis,
}

/// Modular-vs-single losses over repeated runs plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_id: String,
    pub repeats: usize,
    pub runs: Vec<RunRecord>,
    pub modular_mean_loss: f64,
    pub single_mean_loss: f64,
    /// Per-run percentage loss reduction against the single-model mean.
    pub performance_values: Vec<f64>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

fn assemble_report(dataset_id: &str, repeats: usize, runs: Vec<RunRecord>) -> Result<ComparisonReport> {
    let n = runs.len().max(1) as f64;
    let modular_mean_loss = runs.iter().map(|r| r.modular_test_loss).sum::<f64>() / n;
    let single_mean_loss = runs.iter().map(|r| r.single_test_loss).sum::<f64>() / n;
    let performance_values = if single_mean_loss > 0.0 {
        runs.iter()
            .map(|r| performance_value(single_mean_loss, r.modular_test_loss))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(ComparisonReport {
        dataset_id: dataset_id.to_string(),
        repeats,
        runs,
        modular_mean_loss,
        single_mean_loss,
        performance_values,
    })
}

/// Runs the full comparison: per repeat, split, partition the training set,
/// train the modular model, then a budget-matched single model, and evaluate
/// both on the test split. Run `i` derives all its randomness from
/// `master_seed + i`.
///
/// If a run fails and `partial_dump` is set, the completed runs are emitted
/// there before the error propagates.
pub fn compare(
    data: &Dataset,
    cfg: &ExperimentConfig,
    partial_dump: Option<&Path>,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.repeats);
    for i in 0..cfg.repeats {
        let run_seed = cfg.master_seed.wrapping_add(i as u64);
        match run_once(data, cfg, i, run_seed) {
            Ok(record) => runs.push(record),
            Err(err) => {
                if let Some(dir) = partial_dump {
                    let partial = assemble_report(&data.provenance, cfg.repeats, runs)?;
                    emit_report(&partial, dir)?;
                }
                return Err(err);
            }
        }
    }
    assemble_report(&data.provenance, cfg.repeats, runs)
}

fn run_once(data: &Dataset, cfg: &ExperimentConfig, run: usize, run_seed: u64) -> Result<RunRecord> {
    let pair = split(data, cfg.split_ratio, run_seed)?;
    let train = &pair.train;

    let pcfg = cfg.partition_config(seed::derive(run_seed, 11));
    let result = run_partitioning(train, &pcfg)?;
    let boundary_training_accuracy = result
        .boundary
        .training_accuracy(&train.features, &result.final_winners)?;

    let mcfg = ModularTrainConfig {
        train: TrainConfig { batch_size: cfg.batch_size, epochs: cfg.expert_epochs },
        bounds: cfg.bounds(),
        master_seed: seed::derive(run_seed, 12),
    };
    let modular = train_modular(&result, train, &mcfg)?;
    let budget = modular.total_params;

    let search = random_search(
        train,
        &train.all_indices(),
        &cfg.bounds(),
        &mcfg.train,
        Some(budget),
        seed::derive(run_seed, 13),
    )?;
    // The single model is the search's winning network itself — the baseline
    // is the best validated result of the budget-capped search.
    let single = search.best_network;

    let modular_test_loss = evaluate_loss(&modular, &pair.test)?;
    let single_test_loss = evaluate_loss(&single, &pair.test)?;

    let mut expert_learning_rates = Vec::new();
    let mut expert_param_counts = Vec::new();
    let mut partition_proportions = Vec::new();
    for (pid, expert) in &modular.experts {
        expert_learning_rates.push(expert.net.learning_rate());
        expert_param_counts.push(expert.net.param_count());
        partition_proportions
            .push(result.partitions[pid].len() as f64 / train.len() as f64);
    }
    let analysis = analysis_metrics(
        &expert_learning_rates,
        &expert_param_counts,
        &partition_proportions,
    );
    Ok(RunRecord {
        run,
        seed: run_seed,
        modular_test_loss,
        single_test_loss,
        n_experts: modular.experts.len(),
        expert_learning_rates,
        expert_param_counts,
        partition_proportions,
        modular_total_params: modular.total_params,
        single_param_count: single.param_count(),
        final_pool_size: result.history.last().map_or(0, |h| h.pool_size),
        boundary_training_accuracy,
        analysis,
    })
}

/// Writes `report.json`, `runs.csv` and `histogram.svg` into `out_dir`.
pub fn emit_report(report: &ComparisonReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.json"), report.to_json()?)?;

    let mut w = csv::Writer::from_path(out_dir.join("runs.csv"))
        .map_err(|e| Error::Csv(e.to_string()))?;
    w.write_record([
        "run",
        "seed",
        "modular_test_loss",
        "single_test_loss",
        "n_experts",
        "modular_total_params",
        "single_param_count",
        "lr_variance",
        "param_count_variance",
        "partition_proportion_variance",
        "performance_value",
    ])
    .map_err(|e| Error::Csv(e.to_string()))?;
    for (i, r) in report.runs.iter().enumerate() {
        let perf = report
            .performance_values
            .get(i)
            .map_or(String::new(), |p| format!("{p}"));
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            format!("{}", r.modular_test_loss),
            format!("{}", r.single_test_loss),
            r.n_experts.to_string(),
            r.modular_total_params.to_string(),
            r.single_param_count.to_string(),
            format!("{}", r.analysis.lr_variance),
            format!("{}", r.analysis.param_count_variance),
            format!("{}", r.analysis.partition_proportion_variance),
            perf,
        ])
        .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;

    std::fs::write(out_dir.join("histogram.svg"), histogram_svg(report))?;
    Ok(())
}

/// Counts per bin for a series over shared bin edges.
fn bin_counts(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut k = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
        if k >= bins {
            k = bins - 1;
        }
        counts[k] += 1;
    }
    counts
}

/// Overlaid modular-vs-single test-loss histogram. Loss on the x-axis, run
/// count on the y-axis; more mass on the left means better.
pub fn histogram_svg(report: &ComparisonReport) -> String {
    let modular: Vec<f64> = report.runs.iter().map(|r| r.modular_test_loss).collect();
    let single: Vec<f64> = report.runs.iter().map(|r| r.single_test_loss).collect();
    let pooled: Vec<f64> = modular.iter().chain(&single).copied().collect();
    let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = 10usize;
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
    let m_counts = bin_counts(&modular, lo, width, bins);
    let s_counts = bin_counts(&single, lo, width, bins);
    let max_count = m_counts.iter().chain(&s_counts).copied().max().unwrap_or(1).max(1);

    let (w, h) = (640.0, 400.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 60.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;
    let bar_w = plot_w / bins as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">Test losses: {}</text>",
        w / 2.0,
        report.dataset_id
    );
    for (name, counts, color) in [
        ("single", &s_counts, "#e08214"),
        ("modular", &m_counts, "#2166ac"),
    ] {
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bh = plot_h * c as f64 / max_count as f64;
            let x = ml + k as f64 * bar_w;
            let y = mt + plot_h - bh;
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{bh}\" fill=\"{color}\" fill-opacity=\"0.6\"><title>{name} bin {k}: {c}</title></rect>"
            );
        }
    }
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        mt + plot_h
    );
    let _ = writeln!(
        svg,
        "<text x=\"{ml}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{lo:.4}</text>",
        mt + plot_h + 20.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{hi:.4}</text>",
        ml + plot_w,
        mt + plot_h + 20.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">test loss</text>",
        ml + plot_w / 2.0,
        mt + plot_h + 40.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"20\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">runs</text>",
        mt + plot_h / 2.0,
        mt + plot_h / 2.0
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{mt}\" width=\"12\" height=\"12\" fill=\"#2166ac\" fill-opacity=\"0.6\"/><text x=\"{}\" y=\"{}\" font-size=\"12\">modular</text>",
        ml + plot_w - 110.0,
        ml + plot_w - 94.0,
        mt + 10.0
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"#e08214\" fill-opacity=\"0.6\"/><text x=\"{}\" y=\"{}\" font-size=\"12\">single</text>",
        ml + plot_w - 110.0,
        mt + 18.0,
        ml + plot_w - 94.0,
        mt + 28.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Renders the per-run analysis metrics as a plain-text table.
pub fn analysis_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dataset: {}", report.dataset_id);
    let _ = writeln!(
        out,
        "modular mean loss: {:.6}  single mean loss: {:.6}",
        report.modular_mean_loss, report.single_mean_loss
    );
    let _ = writeln!(
        out,
        "{:>4} {:>10} {:>12} {:>12} {:>14} {:>14} {:>12}",
        "run", "experts", "lr_var", "params_var", "proportion_var", "perf_value_%", "pool_size"
    );
    for (i, r) in report.runs.iter().enumerate() {
        let perf = report
            .performance_values
            .get(i)
            .map_or("-".to_string(), |p| format!("{p:.2}"));
        let _ = writeln!(
            out,
            "{:>4} {:>10} {:>12.3e} {:>12.3e} {:>14.3e} {:>14} {:>12}",
            r.run,
            r.analysis.n_experts,
            r.analysis.lr_variance,
            r.analysis.param_count_variance,
            r.analysis.partition_proportion_variance,
            perf,
            r.final_pool_size,
        );
    }
    out
}
