//! The competition loop: every model predicts every point, each point is
//! awarded to the best predictor, and every model trains one epoch on the
//! points it won.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{self, BoundaryClassifier};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hyper::{sample_hyperparams, HyperBounds};
use crate::lifecycle;
use crate::nn::{Network, TrainConfig};
use crate::seed;

pub type ModelId = u64;

/// A competing model with its stable id.
#[derive(Debug, Clone)]
pub struct PoolModel {
    pub id: ModelId,
    pub net: Network,
}

/// The competing models. Ids are unique and never reused within a run.
#[derive(Debug, Clone, Default)]
pub struct ModelPool {
    models: Vec<PoolModel>,
    next_id: ModelId,
}

impl ModelPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, net: Network) -> ModelId {
        let id = self.next_id;
        self.next_id += 1;
        self.models.push(PoolModel { id, net });
        id
    }

    pub fn remove(&mut self, id: ModelId) -> Result<()> {
        let pos = self
            .models
            .iter()
            .position(|m| m.id == id)
            .ok_or(Error::UnknownModel(id))?;
        self.models.remove(pos);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[PoolModel] {
        &self.models
    }

    pub fn get(&self, id: ModelId) -> Option<&PoolModel> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn contains(&self, id: ModelId) -> bool {
        self.get(id).is_some()
    }
}

/// The competition scoreboard for one epoch: the per-point per-model squared
/// errors and the winning model per point.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// Pool model ids in pool order at ranking time.
    pub model_ids: Vec<ModelId>,
    /// `losses[point][k]` is the squared error of model `model_ids[k]`.
    pub losses: Vec<Vec<f64>>,
    /// Winner per point: the id minimizing the loss, ties to the lowest id.
    pub winner: Vec<ModelId>,
}

impl Assignment {
    pub fn model_index(&self, id: ModelId) -> Option<usize> {
        self.model_ids.iter().position(|&m| m == id)
    }

    /// Best (winning) loss for a point.
    pub fn best_loss(&self, point: usize) -> f64 {
        let k = self.model_index(self.winner[point]).unwrap();
        self.losses[point][k]
    }

    /// Best losses for all points, in point order.
    pub fn best_losses(&self) -> Vec<f64> {
        (0..self.winner.len()).map(|i| self.best_loss(i)).collect()
    }

    /// Smallest loss on a point among models other than `exclude`.
    pub fn best_loss_without(&self, point: usize, exclude: ModelId) -> f64 {
        self.losses[point]
            .iter()
            .zip(&self.model_ids)
            .filter(|(_, &id)| id != exclude)
            .map(|(&l, _)| l)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_best_loss(&self) -> f64 {
        self.best_losses().iter().sum()
    }

    /// Point indices grouped by winning model, in id order.
    pub fn won_points(&self) -> BTreeMap<ModelId, Vec<usize>> {
        let mut map: BTreeMap<ModelId, Vec<usize>> = BTreeMap::new();
        for (i, &w) in self.winner.iter().enumerate() {
            map.entry(w).or_default().push(i);
        }
        map
    }
}

/// Settings of a partitioning run. Check periods of 0 disable the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub epochs: usize,
    pub initial_models: usize,
    pub adding_check_period: usize,
    pub dropping_check_period: usize,
    pub dropping_threshold: f64,
    pub candidate_epochs: usize,
    pub master_seed: u64,
    pub train: TrainConfig,
    pub bounds: HyperBounds,
    pub svm_c: f64,
    /// Gaussian kernel width; when unset it is matched to the partition
    /// geometry (see `boundary::adaptive_gamma`).
    pub svm_gamma: Option<f64>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            initial_models: 10,
            adding_check_period: 1,
            dropping_check_period: 1,
            dropping_threshold: 1.8,
            candidate_epochs: 100,
            master_seed: 0,
            train: TrainConfig { batch_size: 16, epochs: 1 },
            bounds: HyperBounds::default(),
            svm_c: 1.0,
            svm_gamma: None,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.initial_models == 0 {
            return Err(Error::InvalidConfig(
                "epochs and initial_models must be >= 1".into(),
            ));
        }
        if !(self.dropping_threshold > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "dropping threshold must exceed 1, got {}",
                self.dropping_threshold
            )));
        }
        if self.train.batch_size == 0 || self.candidate_epochs == 0 {
            return Err(Error::InvalidConfig("batch size and candidate epochs must be >= 1".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(Error::InvalidConfig("svm_c must be positive".into()));
        }
        self.bounds.validate()
    }
}

/// Pool size and total best-prediction loss at the end of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub pool_size: usize,
    pub total_loss: f64,
}

/// Pool mutation events, appended to the run history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LifecycleEvent {
    Added {
        epoch: usize,
        model_id: ModelId,
        old_loss: f64,
        new_loss: f64,
    },
    Dropped {
        epoch: usize,
        model_id: ModelId,
        replacability: f64,
    },
}

/// Output of a partitioning run: the final point-to-partition map, the fitted
/// boundary classifier and the per-epoch history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Winning model id per training point at the final epoch.
    pub final_winners: Vec<ModelId>,
    /// Point indices per surviving model that won at least one point.
    pub partitions: BTreeMap<ModelId, Vec<usize>>,
    pub boundary: BoundaryClassifier,
    pub history: Vec<EpochRecord>,
    pub events: Vec<LifecycleEvent>,
}

impl PartitionResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Every model predicts every point; each point goes to the model with the
/// smallest squared error, ties to the lowest id.
pub fn rank_predictions(pool: &ModelPool, data: &Dataset) -> Result<Assignment> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("pool has no models".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset has no points".into()));
    }
    let model_ids: Vec<ModelId> = pool.models().iter().map(|m| m.id).collect();
    // One loss column per model, computed independently.
    let columns: Vec<Vec<f64>> = pool
        .models()
        .par_iter()
        .map(|m| {
            (0..data.len())
                .map(|i| m.net.point_loss(&data.features[i], &data.labels[i]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = data.len();
    let mut losses = vec![vec![0.0; model_ids.len()]; n];
    for (k, col) in columns.iter().enumerate() {
        for i in 0..n {
            losses[i][k] = col[i];
        }
    }
    let winner = losses
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, &l) in row.iter().enumerate() {
                if l < row[best] {
                    best = k;
                }
            }
            model_ids[best]
        })
        .collect();
    Ok(Assignment { model_ids, losses, winner })
}

/// One competition epoch: rank, then train every model on its won points.
/// The returned assignment is the pre-training ranking used for the awards.
pub fn competition_epoch(
    pool: &mut ModelPool,
    data: &Dataset,
    cfg: &PartitionConfig,
) -> Result<Assignment> {
    let assignment = rank_predictions(pool, data)?;
    let won = assignment.won_points();
    let train = TrainConfig { batch_size: cfg.train.batch_size, epochs: 1 };
    pool.models
        .par_iter_mut()
        .map(|m| match won.get(&m.id) {
            Some(points) => m.net.train_epoch(data, points, &train).map(|_| ()),
            None => Ok(()),
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(assignment)
}

/// Runs the full partitioning: heterogeneous pool initialization, the
/// competition loop with adding and dropping checks (adding first), and the
/// final translation of winners into partitions plus a fitted boundary
/// classifier.
pub fn run_partitioning(data: &Dataset, cfg: &PartitionConfig) -> Result<PartitionResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset has no points".into()));
    }
    let n_models = cfg.initial_models.min(data.len());
    if n_models < cfg.initial_models {
        eprintln!(
            "warning: dataset has only {} points; starting with {} models instead of {}",
            data.len(),
            n_models,
            cfg.initial_models
        );
    }
    let d = data.feature_dim();
    let m = data.label_dim();
    let mut sampler = ChaCha8Rng::seed_from_u64(seed::derive(cfg.master_seed, 0));
    let mut pool = ModelPool::new();
    for i in 0..n_models {
        let sample = sample_hyperparams(&cfg.bounds, &mut sampler);
        let arch = sample.architecture(d, m)?;
        let net = Network::init(
            arch,
            sample.learning_rate,
            seed::derive(cfg.master_seed, 1_000 + i as u64),
        )?;
        pool.add(net);
    }

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut events = Vec::new();
    for epoch in 1..=cfg.epochs {
        let assignment = competition_epoch(&mut pool, data, cfg)?;
        if cfg.adding_check_period > 0 && epoch % cfg.adding_check_period == 0 {
            let proposal = lifecycle::propose_model(
                &mut pool,
                &assignment,
                data,
                cfg,
                &mut sampler,
                seed::derive(cfg.master_seed, 2_000_000 + epoch as u64),
            )?;
            if let (true, Some(id)) = (proposal.accepted, proposal.model_id) {
                events.push(LifecycleEvent::Added {
                    epoch,
                    model_id: id,
                    old_loss: proposal.old_loss,
                    new_loss: proposal.new_loss,
                });
            }
        }
        if cfg.dropping_check_period > 0 && epoch % cfg.dropping_check_period == 0 {
            if let Some((id, replacability)) =
                lifecycle::drop_redundant(&mut pool, &assignment, cfg.dropping_threshold)?
            {
                events.push(LifecycleEvent::Dropped { epoch, model_id: id, replacability });
            }
        }
        history.push(EpochRecord {
            epoch,
            pool_size: pool.len(),
            total_loss: assignment.total_best_loss(),
        });
    }

    // Winners after the final epoch define the partitions.
    let final_assignment = rank_predictions(&pool, data)?;
    let partitions = final_assignment.won_points();
    let gamma = cfg
        .svm_gamma
        .unwrap_or_else(|| boundary::adaptive_gamma(&data.features, &final_assignment.winner));
    let boundary = boundary::fit_boundary(
        &data.features,
        &final_assignment.winner,
        cfg.svm_c,
        gamma,
        seed::derive(cfg.master_seed, 3),
    )?;
    Ok(PartitionResult {
        final_winners: final_assignment.winner.clone(),
        partitions,
        boundary,
        history,
        events,
    })
}
