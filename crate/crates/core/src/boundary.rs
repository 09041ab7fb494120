//! Freezes a point-to-partition assignment into a reusable classifier:
//! one-vs-one soft-margin SVMs with a Gaussian kernel, trained by sequential
//! minimal optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::competition::ModelId;
use crate::error::{Error, Result};
use crate::seed;

const SMO_TOL: f64 = 1e-3;
const SMO_MAX_PASSES: usize = 10;
const SMO_MAX_SWEEPS: usize = 200;

/// One pairwise decision function. `class_pos` is always the lower id and
/// wins the vote when the decision value is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    pub class_pos: ModelId,
    pub class_neg: ModelId,
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual coefficient times label per support vector; bounded by C.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl PairMachine {
    fn decision(&self, gamma: f64, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * gaussian_kernel(gamma, sv, x))
            .sum::<f64>()
            + self.bias
    }
}

/// Multi-class max-margin boundary over feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClassifier {
    pub classes: Vec<ModelId>,
    pub feature_dim: usize,
    pub c: f64,
    pub gamma: f64,
    pub machines: Vec<PairMachine>,
}

fn gaussian_kernel(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

/// Kernel width matched to the partition geometry: the reciprocal of the
/// squared median distance from a point to its nearest point in a different
/// partition. Falls back to `1/feature_dim` when there is only one class or
/// the classes overlap exactly.
pub fn adaptive_gamma(features: &[Vec<f64>], labels: &[ModelId]) -> f64 {
    let fallback = 1.0 / features.first().map_or(1.0, |f| f.len() as f64);
    if features.len() != labels.len() || features.len() < 2 {
        return fallback;
    }
    let mut nearest: Vec<f64> = features
        .par_iter()
        .zip(labels)
        .map(|(f, &l)| {
            features
                .iter()
                .zip(labels)
                .filter(|(_, &m)| m != l)
                .map(|(g, _)| {
                    f.iter()
                        .zip(g)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if nearest.is_empty() {
        return fallback;
    }
    nearest.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let median_sq = nearest[nearest.len() / 2];
    if median_sq <= 0.0 {
        return fallback;
    }
    (1.0 / median_sq).max(fallback)
}

/// Fits one-vs-one Gaussian-kernel SVMs on the labelled points. A single
/// distinct label yields a constant classifier.
pub fn fit_boundary(
    features: &[Vec<f64>],
    labels: &[ModelId],
    c: f64,
    gamma: f64,
    master_seed: u64,
) -> Result<BoundaryClassifier> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::EmptyInput(
            "fit_boundary needs non-empty aligned features and labels".into(),
        ));
    }
    if !(c > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("need C > 0 and gamma > 0, got C={c} gamma={gamma}")));
    }
    let feature_dim = features[0].len();
    let mut classes: Vec<ModelId> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut pairs = Vec::new();
    for i in 0..classes.len() {
        for j in (i + 1)..classes.len() {
            pairs.push((classes[i], classes[j]));
        }
    }
    let machines: Vec<PairMachine> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(pos, neg))| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (f, &l) in features.iter().zip(labels) {
                if l == pos {
                    xs.push(f.as_slice());
                    ys.push(1.0);
                } else if l == neg {
                    xs.push(f.as_slice());
                    ys.push(-1.0);
                }
            }
            let (alphas, bias) = smo_fit(&xs, &ys, c, gamma, seed::derive(master_seed, p as u64));
            let mut support_vectors = Vec::new();
            let mut coefficients = Vec::new();
            for ((x, y), a) in xs.iter().zip(&ys).zip(&alphas) {
                if *a > 1e-8 {
                    support_vectors.push(x.to_vec());
                    coefficients.push(a * y);
                }
            }
            PairMachine { class_pos: pos, class_neg: neg, support_vectors, coefficients, bias }
        })
        .collect();

    Ok(BoundaryClassifier { classes, feature_dim, c, gamma, machines })
}

/// Sequential minimal optimization on one binary sub-problem. Returns the
/// dual variables and bias.
fn smo_fit(xs: &[&[f64]], ys: &[f64], c: f64, gamma: f64, rng_seed: u64) -> (Vec<f64>, f64) {
    let n = xs.len();
    let mut alphas = vec![0.0; n];
    let mut b = 0.0;
    if n < 2 {
        return (alphas, b);
    }
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = gaussian_kernel(gamma, xs[i], xs[j]);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let decision = |alphas: &[f64], b: f64, i: usize| -> f64 {
        let mut f = b;
        for j in 0..n {
            if alphas[j] != 0.0 {
                f += alphas[j] * ys[j] * kernel[j * n + i];
            }
        }
        f
    };

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut passes = 0;
    let mut sweeps = 0;
    while passes < SMO_MAX_PASSES && sweeps < SMO_MAX_SWEEPS {
        sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            let e_i = decision(&alphas, b, i) - ys[i];
            let r = ys[i] * e_i;
            if !((r < -SMO_TOL && alphas[i] < c) || (r > SMO_TOL && alphas[i] > 0.0)) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = decision(&alphas, b, j) - ys[j];
            let (a_i_old, a_j_old) = (alphas[i], alphas[j]);
            let (lo, hi) = if ys[i] != ys[j] {
                ((a_j_old - a_i_old).max(0.0), (c + a_j_old - a_i_old).min(c))
            } else {
                ((a_i_old + a_j_old - c).max(0.0), (a_i_old + a_j_old).min(c))
            };
            if lo >= hi {
                continue;
            }
            let eta = 2.0 * kernel[i * n + j] - kernel[i * n + i] - kernel[j * n + j];
            if eta >= 0.0 {
                continue;
            }
            let mut a_j = a_j_old - ys[j] * (e_i - e_j) / eta;
            a_j = a_j.clamp(lo, hi);
            if (a_j - a_j_old).abs() < 1e-7 {
                continue;
            }
            let a_i = a_i_old + ys[i] * ys[j] * (a_j_old - a_j);
            alphas[i] = a_i;
            alphas[j] = a_j;
            let b1 = b - e_i
                - ys[i] * (a_i - a_i_old) * kernel[i * n + i]
                - ys[j] * (a_j - a_j_old) * kernel[i * n + j];
            let b2 = b - e_j
                - ys[i] * (a_i - a_i_old) * kernel[i * n + j]
                - ys[j] * (a_j - a_j_old) * kernel[j * n + j];
            b = if a_i > 0.0 && a_i < c {
                b1
            } else if a_j > 0.0 && a_j < c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            changed += 1;
        }
        if changed == 0 {
            passes += 1;
        } else {
            passes = 0;
        }
    }
    (alphas, b)
}

impl BoundaryClassifier {
    /// One-vs-one voting; vote ties break to the lowest partition id.
    pub fn classify(&self, feature: &[f64]) -> Result<ModelId> {
        if feature.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: feature.len(),
            });
        }
        if self.classes.len() == 1 {
            return Ok(self.classes[0]);
        }
        let mut votes = vec![0usize; self.classes.len()];
        for machine in &self.machines {
            let winner = if machine.decision(self.gamma, feature) >= 0.0 {
                machine.class_pos
            } else {
                machine.class_neg
            };
            let k = self.classes.iter().position(|&c| c == winner).unwrap();
            votes[k] += 1;
        }
        // classes are sorted, so the first maximum is the lowest id.
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = k;
            }
        }
        Ok(self.classes[best])
    }

    /// Fraction of points whose classification reproduces the label.
    pub fn training_accuracy(&self, features: &[Vec<f64>], labels: &[ModelId]) -> Result<f64> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::EmptyInput("training_accuracy needs aligned non-empty inputs".into()));
        }
        let mut hits = 0usize;
        for (f, &l) in features.iter().zip(labels) {
            if self.classify(f)? == l {
                hits += 1;
            }
        }
        Ok(hits as f64 / features.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}
