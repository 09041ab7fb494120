//! Dynamic pool sizing: adding a model trained on badly predicted points and
//! dropping models whose removal barely changes the overall loss.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::competition::{Assignment, ModelId, ModelPool, PartitionConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hyper::sample_hyperparams;
use crate::nn::{Network, TrainConfig};

/// Outcome of one adding check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddProposal {
    pub loss_bound: f64,
    pub candidate_points: Vec<usize>,
    pub old_loss: f64,
    pub new_loss: f64,
    pub accepted: bool,
    /// Id the candidate joined the pool under, when accepted.
    pub model_id: Option<ModelId>,
}

impl AddProposal {
    fn rejected(loss_bound: f64) -> Self {
        Self {
            loss_bound,
            candidate_points: Vec::new(),
            old_loss: f64::NAN,
            new_loss: f64::NAN,
            accepted: false,
            model_id: None,
        }
    }
}

/// Mean plus population standard deviation of the best-prediction losses,
/// and the indices strictly above that bound.
pub fn compute_loss_bound(best_losses: &[f64]) -> Result<(f64, Vec<usize>)> {
    if best_losses.is_empty() {
        return Err(Error::EmptyInput("no losses".into()));
    }
    let n = best_losses.len() as f64;
    let mean = best_losses.iter().sum::<f64>() / n;
    let var = best_losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    let bound = mean + var.sqrt();
    let candidates = best_losses
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > bound)
        .map(|(i, _)| i)
        .collect();
    Ok((bound, candidates))
}

/// Trains a fresh candidate on the badly predicted points and adds it to the
/// pool if it beats the current pool's mean loss there.
pub fn propose_model(
    pool: &mut ModelPool,
    assignment: &Assignment,
    data: &Dataset,
    cfg: &PartitionConfig,
    sampler: &mut ChaCha8Rng,
    net_seed: u64,
) -> Result<AddProposal> {
    let best = assignment.best_losses();
    let (loss_bound, candidate_points) = compute_loss_bound(&best)?;
    if candidate_points.is_empty() {
        return Ok(AddProposal::rejected(loss_bound));
    }
    let old_loss =
        candidate_points.iter().map(|&i| best[i]).sum::<f64>() / candidate_points.len() as f64;

    let sample = sample_hyperparams(&cfg.bounds, sampler);
    let arch = sample.architecture(data.feature_dim(), data.label_dim())?;
    let mut candidate = Network::init(arch, sample.learning_rate, net_seed)?;
    let train = TrainConfig {
        batch_size: cfg.train.batch_size,
        epochs: cfg.candidate_epochs,
    };
    candidate.train(data, &candidate_points, &train)?;
    let new_loss = candidate.subset_loss(data, &candidate_points)?;

    let accepted = new_loss < old_loss;
    let model_id = accepted.then(|| pool.add(candidate));
    Ok(AddProposal {
        loss_bound,
        candidate_points,
        old_loss,
        new_loss,
        accepted,
        model_id,
    })
}

/// Ratio of the total best-prediction loss without `model_id` (its points
/// falling back to their second-best model) to the loss with all models.
/// A sole model is never droppable and reports +inf.
pub fn replacability(pool: &ModelPool, assignment: &Assignment, model_id: ModelId) -> Result<f64> {
    if !pool.contains(model_id) {
        return Err(Error::UnknownModel(model_id));
    }
    if pool.len() == 1 {
        return Ok(f64::INFINITY);
    }
    let Some(_) = assignment.model_index(model_id) else {
        // Not ranked yet (added after the snapshot): nothing to measure.
        return Ok(f64::INFINITY);
    };
    let mut loss_with_all = 0.0;
    let mut loss_without = 0.0;
    for point in 0..assignment.winner.len() {
        let best = assignment.best_loss(point);
        loss_with_all += best;
        loss_without += if assignment.winner[point] == model_id {
            assignment.best_loss_without(point, model_id)
        } else {
            best
        };
    }
    if loss_with_all == 0.0 {
        return Ok(if loss_without == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(loss_without / loss_with_all)
}

/// Drops the single least replaceable-looking model (lowest replacability
/// below the threshold), if any. Never empties the pool.
pub fn drop_redundant(
    pool: &mut ModelPool,
    assignment: &Assignment,
    threshold: f64,
) -> Result<Option<(ModelId, f64)>> {
    if !(threshold > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "dropping threshold must exceed 1, got {threshold}"
        )));
    }
    if pool.len() <= 1 {
        return Ok(None);
    }
    let mut worst: Option<(ModelId, f64)> = None;
    for model in pool.models() {
        let r = replacability(pool, assignment, model.id)?;
        // Ties go to the higher (newer) id.
        if r < threshold && worst.as_ref().is_none_or(|(_, w)| r <= *w) {
            worst = Some((model.id, r));
        }
    }
    if let Some((id, r)) = worst {
        pool.remove(id)?;
        return Ok(Some((id, r)));
    }
    Ok(None)
}
