//! Logging-propensity estimation, inverse propensity scoring, treatment
//! effects and policy evaluation.
//!
//! Propensities are user-independent per-item exposure probabilities of the
//! logging policy, estimated from the biased sample with Laplace smoothing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CauseError, Result};
use crate::math::{inner_product, sigmoid, Matrix};
use crate::types::{EmbeddingSet, Interaction};

/// Per-item exposure probabilities of the logging policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub probs: Vec<f64>,
    pub smoothing_alpha: f64,
    pub total_events: usize,
}

impl PropensityModel {
    pub fn prob(&self, item: usize) -> Result<f64> {
        self.probs
            .get(item)
            .copied()
            .ok_or_else(|| CauseError::Domain(format!("item index {item} out of range")))
    }

    /// One probability per line, for external tooling.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for p in &self.probs {
            writeln!(out, "{p:.17e}").expect("write to string");
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Smoothed relative item frequencies: (count_j + alpha) / (N + alpha * K).
pub fn estimate_propensity(
    events: &[Interaction],
    num_items: usize,
    smoothing_alpha: f64,
) -> Result<PropensityModel> {
    if num_items == 0 {
        return Err(CauseError::Data("propensity over zero items".into()));
    }
    if smoothing_alpha < 0.0 {
        return Err(CauseError::Domain(
            "smoothing alpha must be non-negative".into(),
        ));
    }
    let mut counts = vec![0usize; num_items];
    for e in events {
        if e.item >= num_items {
            return Err(CauseError::Data(format!(
                "event item {} out of range {num_items}",
                e.item
            )));
        }
        counts[e.item] += 1;
    }
    let n = events.len();
    let denom = n as f64 + smoothing_alpha * num_items as f64;
    if denom <= 0.0 {
        return Err(CauseError::Data(
            "no events and no smoothing; propensities undefined".into(),
        ));
    }
    let probs = counts
        .iter()
        .map(|&c| (c as f64 + smoothing_alpha) / denom)
        .collect();
    Ok(PropensityModel {
        probs,
        smoothing_alpha,
        total_events: n,
    })
}

/// Capped inverse-propensity reward estimate min(y / pi, cap).
pub fn ips_reward(y: f64, pi: f64, cap: f64) -> Result<f64> {
    debug_assert!(y == 0.0 || y == 1.0);
    if pi <= 0.0 {
        return Err(CauseError::Domain(format!(
            "propensity must be positive, got {pi}"
        )));
    }
    if cap <= 0.0 {
        return Err(CauseError::Domain("cap must be positive".into()));
    }
    Ok((y / pi).min(cap))
}

/// Raw-score treatment effect of showing item `j` to user `i`: the inner
/// product of the user vector with the item shift (treatment minus control).
/// Uses the control user representation, which equals the treatment copy
/// whenever the user side is shared.
pub fn ite_pair(model: &EmbeddingSet, user: usize, item: usize) -> Result<f64> {
    let u = model.gamma_c.try_row(user)?;
    let t = model.theta_t.try_row(item)?;
    let c = model.theta_c.try_row(item)?;
    Ok(inner_product(u, t)? - inner_product(u, c)?)
}

/// Probability-scale companion of [`ite_pair`]: difference of calibrated
/// sigmoid predictions under the treatment and control item representations.
pub fn ite_pair_prob(model: &EmbeddingSet, user: usize, item: usize) -> Result<f64> {
    let u = model.gamma_c.try_row(user)?;
    let t = model.theta_t.try_row(item)?;
    let c = model.theta_c.try_row(item)?;
    let pt = sigmoid(model.calib_scale * inner_product(u, t)? + model.calib_bias);
    let pc = sigmoid(model.calib_scale * inner_product(u, c)? + model.calib_bias);
    Ok(pt - pc)
}

/// Exposure-ratio estimate implied by the embeddings:
/// 1 + <u, shift_j> / <u, theta_c_j>, which equals the score ratio
/// <u, theta_t_j> / <u, theta_c_j> up to rounding.
pub fn ips_from_embeddings(model: &EmbeddingSet, user: usize, item: usize) -> Result<f64> {
    let u = model.gamma_c.try_row(user)?;
    let c = model.theta_c.try_row(item)?;
    let denom = inner_product(u, c)?;
    if denom == 0.0 {
        return Err(CauseError::Singularity(format!(
            "control score for user {user}, item {item} is zero"
        )));
    }
    let shift = model.item_shift(item)?;
    Ok(1.0 + inner_product(u, &shift)? / denom)
}

/// A recommendation policy: a deterministic item choice per user, or a full
/// per-user item distribution whose rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Deterministic(Vec<usize>),
    Stochastic(Matrix),
}

/// A policy together with its expected reward under a reward matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    pub reward_estimate: f64,
    pub user_marginal: Vec<f64>,
}

/// Per-user argmax over a score matrix. Ties break toward the lowest item
/// index.
pub fn optimal_policy(scores: &Matrix) -> Result<Policy> {
    if scores.cols() == 0 || scores.rows() == 0 {
        return Err(CauseError::Data("empty score matrix".into()));
    }
    let mut choices = Vec::with_capacity(scores.rows());
    for i in 0..scores.rows() {
        let row = scores.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CauseError::Domain(format!(
                "non-finite score in row {i}"
            )));
        }
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        choices.push(best);
    }
    Ok(Policy::Deterministic(choices))
}

fn validate_marginal(marginal: &[f64], num_users: usize) -> Result<()> {
    if marginal.len() != num_users {
        return Err(CauseError::Dimension {
            expected: num_users,
            got: marginal.len(),
        });
    }
    let sum: f64 = marginal.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || marginal.iter().any(|p| *p < 0.0) {
        return Err(CauseError::Domain(
            "user marginal must be a probability vector".into(),
        ));
    }
    Ok(())
}

/// Expected reward of a policy against a matrix of true reward means:
/// sum over pairs of r_ij * policy(j | i) * p(u_i). The user marginal
/// defaults to uniform.
pub fn policy_reward(
    reward_matrix: &Matrix,
    policy: &Policy,
    user_marginal: Option<&[f64]>,
) -> Result<f64> {
    let num_users = reward_matrix.rows();
    let num_items = reward_matrix.cols();
    if num_users == 0 || num_items == 0 {
        return Err(CauseError::Data("empty reward matrix".into()));
    }
    let uniform = vec![1.0 / num_users as f64; num_users];
    let marginal = match user_marginal {
        Some(m) => {
            validate_marginal(m, num_users)?;
            m
        }
        None => &uniform,
    };

    let mut total = 0.0;
    match policy {
        Policy::Deterministic(choices) => {
            if choices.len() != num_users {
                return Err(CauseError::Dimension {
                    expected: num_users,
                    got: choices.len(),
                });
            }
            for (i, (&j, &weight)) in choices.iter().zip(marginal).enumerate() {
                if j >= num_items {
                    return Err(CauseError::Domain(format!(
                        "policy item {j} out of range {num_items}"
                    )));
                }
                total += reward_matrix.get(i, j) * weight;
            }
        }
        Policy::Stochastic(rows) => {
            if rows.rows() != num_users || rows.cols() != num_items {
                return Err(CauseError::Dimension {
                    expected: num_users * num_items,
                    got: rows.rows() * rows.cols(),
                });
            }
            for (i, &weight) in marginal.iter().enumerate().take(num_users) {
                let row = rows.row(i);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                    return Err(CauseError::Domain(format!(
                        "policy row {i} is not a probability distribution"
                    )));
                }
                let mut row_reward = 0.0;
                for (j, &pj) in row.iter().enumerate() {
                    row_reward += reward_matrix.get(i, j) * pj;
                }
                total += row_reward * weight;
            }
        }
    }
    Ok(total)
}

/// Evaluate a policy, bundling its expected reward with the marginal used.
pub fn evaluate_policy(
    reward_matrix: &Matrix,
    policy: Policy,
    user_marginal: Option<&[f64]>,
) -> Result<PolicyEvaluation> {
    let reward_estimate = policy_reward(reward_matrix, &policy, user_marginal)?;
    let marginal = match user_marginal {
        Some(m) => m.to_vec(),
        None => vec![1.0 / reward_matrix.rows() as f64; reward_matrix.rows()],
    };
    Ok(PolicyEvaluation {
        policy,
        reward_estimate,
        user_marginal: marginal,
    })
}

/// Treatment effect of one policy over another: the difference of their
/// expected rewards on the same reward matrix.
pub fn policy_ite(
    reward_matrix: &Matrix,
    policy: &Policy,
    control: &Policy,
    user_marginal: Option<&[f64]>,
) -> Result<f64> {
    Ok(policy_reward(reward_matrix, policy, user_marginal)?
        - policy_reward(reward_matrix, control, user_marginal)?)
}
