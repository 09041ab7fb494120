//! The modular model: one freshly trained expert per partition, hard-routed
//! by the boundary classifier.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryClassifier;
use crate::competition::{ModelId, PartitionResult};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hyper::{random_search, HyperBounds, HyperSample};
use crate::nn::{mse_loss, Network, TrainConfig};
use crate::seed;

/// One expert and the hyperparameters it was selected with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub partition_id: ModelId,
    pub sample: HyperSample,
    pub net: Network,
    /// Indices (into the training set) the expert was trained on.
    pub train_indices: Vec<usize>,
}

/// Experts plus the gate that routes each input to exactly one of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModularModel {
    pub experts: BTreeMap<ModelId, ExpertSpec>,
    pub gate: BoundaryClassifier,
    pub total_params: usize,
}

/// Settings for expert training: search bounds plus the per-expert training
/// schedule (500 epochs is the experiment default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularTrainConfig {
    pub train: TrainConfig,
    pub bounds: HyperBounds,
    pub master_seed: u64,
}

impl Default for ModularTrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig { batch_size: 16, epochs: 500 },
            bounds: HyperBounds::default(),
            master_seed: 0,
        }
    }
}

/// Trains one expert per partition: a hyperparameter search on the
/// partition's points picks the configuration, then a fresh network is
/// trained on the full partition. The gate is the partitioning's boundary
/// classifier.
pub fn train_modular(
    result: &PartitionResult,
    data: &Dataset,
    cfg: &ModularTrainConfig,
) -> Result<ModularModel> {
    if result.partitions.is_empty() {
        return Err(Error::EmptyInput("partition result has no partitions".into()));
    }
    let d = data.feature_dim();
    let m = data.label_dim();
    let experts: BTreeMap<ModelId, ExpertSpec> = result
        .partitions
        .par_iter()
        .map(|(&pid, indices)| {
            if indices.iter().any(|&i| i >= data.len()) {
                return Err(Error::InvalidConfig(format!(
                    "partition {pid} indexes outside the training set"
                )));
            }
            let search_seed = seed::derive(cfg.master_seed, pid);
            let outcome = random_search(data, indices, &cfg.bounds, &cfg.train, None, search_seed)?;
            let arch = outcome.best_sample.architecture(d, m)?;
            let mut net = Network::init(
                arch,
                outcome.best_sample.learning_rate,
                seed::derive(cfg.master_seed, 1_000_000 + pid),
            )?;
            net.train(data, indices, &cfg.train)?;
            Ok((
                pid,
                ExpertSpec {
                    partition_id: pid,
                    sample: outcome.best_sample,
                    net,
                    train_indices: indices.clone(),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let total_params = experts.values().map(|e| e.net.param_count()).sum();
    let gate = result.boundary.clone();
    for class in &gate.classes {
        if !experts.contains_key(class) {
            return Err(Error::MissingExpert(*class));
        }
    }
    Ok(ModularModel { experts, gate, total_params })
}

impl ModularModel {
    /// Hard routing: the gate picks the expert, whose forward output is
    /// returned unmodified.
    pub fn predict(&self, feature: &[f64]) -> Result<Vec<f64>> {
        let pid = self.gate.classify(feature)?;
        let expert = self.experts.get(&pid).ok_or(Error::MissingExpert(pid))?;
        expert.net.forward(feature)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Anything that maps a feature vector to an output vector.
pub trait Predictor {
    fn predict_point(&self, feature: &[f64]) -> Result<Vec<f64>>;
}

impl Predictor for Network {
    fn predict_point(&self, feature: &[f64]) -> Result<Vec<f64>> {
        self.forward(feature)
    }
}

impl Predictor for ModularModel {
    fn predict_point(&self, feature: &[f64]) -> Result<Vec<f64>> {
        self.predict(feature)
    }
}

/// MSE of a predictor over a whole dataset (scaled space).
pub fn evaluate_loss<P: Predictor>(predictor: &P, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set is empty".into()));
    }
    let preds: Vec<Vec<f64>> = data
        .features
        .iter()
        .map(|f| predictor.predict_point(f))
        .collect::<Result<_>>()?;
    mse_loss(&preds, &data.labels)
}
