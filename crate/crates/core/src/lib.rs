//! Active partitioning: competition-based dataset partitioning and modular
//! expert models.
//!
//! A pool of small feedforward networks competes for data points. Every epoch,
//! each model predicts the whole dataset, each point is awarded to the model
//! with the best prediction, and each model trains for one epoch on the points
//! it won. The pool grows when badly predicted points support a new model and
//! shrinks when a model turns out to be replaceable. The final point-to-model
//! assignment is frozen into a max-margin boundary classifier, and each
//! partition can then be learned by a freshly trained expert, gated by that
//! classifier, forming a modular model that is benchmarked against a
//! parameter-budget-matched single model.
//!
//! Crate layout mirrors the pipeline:
//!
//! - [`nn`]: the competing model type (tanh MLP, MSE loss, Adam)
//! - [`data`]: synthetic generators, CSV ingestion, scaling, splits
//! - [`hyper`]: random hyperparameter search within fixed bounds
//! - [`competition`]: the prediction/ranking/training loop
//! - [`lifecycle`]: adding and dropping of pool models
//! - [`boundary`]: one-vs-one Gaussian-kernel SVM over the final assignment
//! - [`modular`]: per-partition experts gated by the boundary classifier
//! - [`harness`]: repeated modular-vs-single comparison runs and reports

pub mod boundary;
pub mod competition;
pub mod data;
pub mod error;
pub mod harness;
pub mod hyper;
pub mod lifecycle;
pub mod modular;
pub mod nn;
pub mod seed;

pub use boundary::BoundaryClassifier;
pub use competition::{Assignment, ModelId, ModelPool, PartitionConfig, PartitionResult};
pub use data::{Dataset, SplitPair};
pub use error::{Error, Result};
pub use harness::{ComparisonReport, ExperimentConfig, RunAnalysis};
pub use hyper::{HyperBounds, HyperSample};
pub use modular::ModularModel;
pub use nn::{Architecture, Network, TrainConfig};
