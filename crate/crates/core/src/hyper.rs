//! Random hyperparameter search within fixed bounds, used for pool
//! initialization, per-expert optimization and the budget-matched single
//! model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::modular::ModularModel;
use crate::nn::{Architecture, Network, TrainConfig};
use crate::seed;

/// Search bounds. `layers` counts weight layers (hidden layers + output), so
/// the default [2,6] means one to five hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub min_layers: usize,
    pub max_layers: usize,
    pub min_neurons: usize,
    pub max_neurons: usize,
    pub min_learning_rate: f64,
    pub max_learning_rate: f64,
    pub search_runs: usize,
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            min_layers: 2,
            max_layers: 6,
            min_neurons: 4,
            max_neurons: 10,
            min_learning_rate: 0.0001,
            max_learning_rate: 0.005,
            search_runs: 100,
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<()> {
        if self.min_layers < 2
            || self.min_layers > self.max_layers
            || self.min_neurons == 0
            || self.min_neurons > self.max_neurons
            || !(self.min_learning_rate > 0.0)
            || self.min_learning_rate > self.max_learning_rate
            || self.search_runs == 0
        {
            return Err(Error::InvalidConfig("invalid hyperparameter bounds".into()));
        }
        Ok(())
    }

    /// Cheapest architecture within bounds: one hidden layer of the minimum
    /// width.
    pub fn minimal_sample(&self) -> HyperSample {
        HyperSample {
            hidden_widths: vec![self.min_neurons],
            learning_rate: self.min_learning_rate,
        }
    }
}

/// One sampled configuration: per-hidden-layer widths and a learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
}

impl HyperSample {
    pub fn architecture(&self, input_dim: usize, output_dim: usize) -> Result<Architecture> {
        let mut sizes = Vec::with_capacity(self.hidden_widths.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden_widths);
        sizes.push(output_dim);
        Architecture::new(sizes)
    }

    pub fn param_count(&self, input_dim: usize, output_dim: usize) -> usize {
        self.architecture(input_dim, output_dim)
            .map(|a| a.param_count())
            .unwrap_or(0)
    }
}

/// Samples layer count and per-layer widths uniformly, the learning rate
/// log-uniformly.
pub fn sample_hyperparams(bounds: &HyperBounds, rng: &mut ChaCha8Rng) -> HyperSample {
    let weight_layers = rng.random_range(bounds.min_layers..=bounds.max_layers);
    let hidden = weight_layers - 1;
    let hidden_widths = (0..hidden)
        .map(|_| rng.random_range(bounds.min_neurons..=bounds.max_neurons))
        .collect();
    let ln_lo = bounds.min_learning_rate.ln();
    let ln_hi = bounds.max_learning_rate.ln();
    let learning_rate = if ln_lo == ln_hi {
        bounds.min_learning_rate
    } else {
        rng.random_range(ln_lo..ln_hi).exp()
    };
    HyperSample {
        hidden_widths,
        learning_rate,
    }
}

/// Samples until the architecture fits `budget` (up to 1,000 attempts), then
/// falls back to the largest admissible uniform-width architecture, or the
/// minimal one if nothing fits.
pub fn sample_within_budget(
    bounds: &HyperBounds,
    rng: &mut ChaCha8Rng,
    input_dim: usize,
    output_dim: usize,
    budget: Option<usize>,
) -> HyperSample {
    let budget = match budget {
        None => return sample_hyperparams(bounds, rng),
        Some(b) => b,
    };
    for _ in 0..1000 {
        let sample = sample_hyperparams(bounds, rng);
        if sample.param_count(input_dim, output_dim) <= budget {
            return sample;
        }
    }
    let lr = sample_hyperparams(bounds, rng).learning_rate;
    match largest_admissible(bounds, input_dim, output_dim, budget) {
        Some(mut s) => {
            s.learning_rate = lr;
            s
        }
        None => {
            eprintln!(
                "warning: no architecture within bounds fits budget {budget}; using minimal architecture"
            );
            let mut s = bounds.minimal_sample();
            s.learning_rate = lr;
            s
        }
    }
}

/// Largest-parameter-count uniform-width architecture within bounds that
/// stays at or under the budget.
fn largest_admissible(
    bounds: &HyperBounds,
    input_dim: usize,
    output_dim: usize,
    budget: usize,
) -> Option<HyperSample> {
    let mut best: Option<(usize, HyperSample)> = None;
    for layers in bounds.min_layers..=bounds.max_layers {
        for width in bounds.min_neurons..=bounds.max_neurons {
            let sample = HyperSample {
                hidden_widths: vec![width; layers - 1],
                learning_rate: bounds.min_learning_rate,
            };
            let count = sample.param_count(input_dim, output_dim);
            if count <= budget && best.as_ref().is_none_or(|(c, _)| count > *c) {
                best = Some((count, sample));
            }
        }
    }
    best.map(|(_, s)| s)
}

/// One evaluated search run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRun {
    pub sample: HyperSample,
    pub validation_loss: f64,
}

/// Outcome of [`random_search`]: the winning configuration, the network it
/// trained and the full per-run log.
#[derive(Debug)]
pub struct SearchOutcome {
    pub best_sample: HyperSample,
    pub best_network: Network,
    pub best_validation_loss: f64,
    pub runs: Vec<SearchRun>,
}

/// Trains `bounds.search_runs` independently sampled networks on a
/// train/validation split of `indices` and returns the one with the lowest
/// validation loss (ties go to the earlier run). `budget` caps the parameter
/// count of every sampled architecture.
pub fn random_search(
    data: &Dataset,
    indices: &[usize],
    bounds: &HyperBounds,
    cfg: &TrainConfig,
    budget: Option<usize>,
    master_seed: u64,
) -> Result<SearchOutcome> {
    bounds.validate()?;
    if indices.is_empty() {
        return Err(Error::EmptyInput("random_search needs training points".into()));
    }
    let (train_idx, val_idx) = validation_split(indices, master_seed);
    let d = data.feature_dim();
    let m = data.label_dim();

    let samples: Vec<HyperSample> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, 1));
        (0..bounds.search_runs)
            .map(|_| sample_within_budget(bounds, &mut rng, d, m, budget))
            .collect()
    };

    let results: Vec<Result<(Network, f64)>> = samples
        .par_iter()
        .enumerate()
        .map(|(r, sample)| {
            let arch = sample.architecture(d, m)?;
            let net_seed = seed::derive(master_seed, 100 + r as u64);
            let mut net = Network::init(arch, sample.learning_rate, net_seed)?;
            net.train(data, &train_idx, cfg)?;
            let val_loss = net.subset_loss(data, &val_idx)?;
            Ok((net, val_loss))
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut best: Option<(usize, Network, f64)> = None;
    for (r, res) in results.into_iter().enumerate() {
        let (net, val_loss) = res?;
        runs.push(SearchRun {
            sample: samples[r].clone(),
            validation_loss: val_loss,
        });
        if best.as_ref().is_none_or(|(_, _, b)| val_loss < *b) {
            best = Some((r, net, val_loss));
        }
    }
    let (best_run, best_network, best_validation_loss) = best.unwrap();
    Ok(SearchOutcome {
        best_sample: samples[best_run].clone(),
        best_network,
        best_validation_loss,
        runs,
    })
}

/// Holds out 20% (at least one point when possible) of `indices` for
/// validation, deterministically per seed.
fn validation_split(indices: &[usize], master_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, 2));
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n = order.len();
    let n_val = if n >= 2 { (n / 5).max(1) } else { 0 };
    let val = order.split_off(n - n_val);
    (order, val)
}

/// The single model's parameter budget: the combined size of all experts.
pub fn single_model_budget(modular: &ModularModel) -> usize {
    modular.total_params
}

/// Writes a search log as CSV (`run,hidden_widths,learning_rate,validation_loss`).
pub fn write_search_log<W: std::io::Write>(runs: &[SearchRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "hidden_widths", "learning_rate", "validation_loss"])
        .map_err(|e| Error::Csv(e.to_string()))?;
    for (i, run) in runs.iter().enumerate() {
        let widths = run
            .sample
            .hidden_widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("|");
        w.write_record([
            i.to_string(),
            widths,
            format!("{}", run.sample.learning_rate),
            format!("{}", run.validation_loss),
        ])
        .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
