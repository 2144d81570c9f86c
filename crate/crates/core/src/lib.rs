//! Causal embedding trainers for counterfactual recommendation.
//!
//! The library covers the full experimental loop for learning reward
//! predictors under uniform item exposure from popularity-biased logs:
//!
//! - [`ingest`]: rating-log parsing, reward binarization, the skewed
//!   train/validation/test split whose test partition simulates uniform
//!   exposure, and a synthetic generator with known ground truth;
//! - [`propensity`]: logging-propensity estimation, inverse propensity
//!   scoring, treatment effects and policy evaluation;
//! - [`cause`]: the joint two-task trainer that fits separate treatment and
//!   control embeddings under a discrepancy regularizer;
//! - [`baselines`]: sigmoid matrix factorization, its propensity-weighted
//!   variant and pairwise ranking, with the exploration-sample adaptation
//!   modes;
//! - [`metrics`]: MSE/NLL/AUC plus lift over the average-conversion-rate
//!   predictor;
//! - [`experiment`]: config files, the end-to-end runner, multi-seed sweeps
//!   and the injection sweep;
//! - [`model_io`]: bit-exact text persistence for trained models.
//!
//! Everything is deterministic for a fixed seed: trainers and generators use
//! seeded ChaCha8 streams and fixed reduction orders throughout.

pub mod baselines;
pub mod cause;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod math;
pub mod metrics;
pub mod model_io;
pub mod propensity;
pub mod types;

pub use error::{CauseError, Result};
pub use types::{EmbeddingSet, Hyperparams, Interaction, SampleOrigin, TrainMode};
