//! Single-task factorization baselines: plain sigmoid matrix factorization,
//! its propensity-weighted variant, and pairwise ranking, each with the
//! exploration-sample adaptation modes.
//!
//! All three share the optimizer of the joint trainer (per-sample SGD with
//! momentum and linear learning-rate decay) and the same reproducibility
//! contract: a ChaCha8 generator seeded with `hyper.seed` draws the user
//! matrix then the item matrix, then shuffles the sample order each epoch.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cause::{lr_at, momentum_step, DIVERGENCE_BOUND};
use crate::error::{CauseError, Result};
use crate::ingest::SplitDataset;
use crate::math::{bce_loss, dot, sigmoid, Matrix};
use crate::propensity::PropensityModel;
use crate::types::{EmbeddingSet, Hyperparams, Interaction, TrainMode};

/// Which slice of the split a baseline trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationMode {
    /// Biased sample only.
    No,
    /// Biased and uniform-exposure samples together.
    Blend,
    /// Uniform-exposure sample only.
    Test,
}

impl AdaptationMode {
    pub fn token(&self) -> &'static str {
        match self {
            AdaptationMode::No => "no",
            AdaptationMode::Blend => "blend",
            AdaptationMode::Test => "test",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        match s {
            "no" => Ok(AdaptationMode::No),
            "blend" => Ok(AdaptationMode::Blend),
            "test" => Ok(AdaptationMode::Test),
            other => Err(CauseError::Config(format!(
                "unknown adaptation mode `{other}`"
            ))),
        }
    }
}

/// The training events a mode prescribes, in deterministic pre-shuffle order
/// (biased sample first).
pub fn assemble_training_set(
    split: &SplitDataset,
    mode: AdaptationMode,
) -> Result<Vec<Interaction>> {
    match mode {
        AdaptationMode::No => Ok(split.s_c.clone()),
        AdaptationMode::Blend => {
            let mut out = split.s_c.clone();
            out.extend_from_slice(&split.s_t);
            Ok(out)
        }
        AdaptationMode::Test => {
            if split.s_t.is_empty() {
                return Err(CauseError::Data(
                    "test adaptation needs a non-empty uniform-exposure sample".into(),
                ));
            }
            Ok(split.s_t.clone())
        }
    }
}

/// Gradient of one weighted factorization sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sp2vGradients {
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub calib_scale: f64,
    pub calib_bias: f64,
}

/// Weighted sample loss: `weight * bce(sigmoid(scale * <u, p> + bias), y)
/// + lambda * (|u|^2 + |p|^2)`. The weight multiplies only the data term.
pub fn sp2v_sample_loss(
    u: &[f64],
    p: &[f64],
    scale: f64,
    bias: f64,
    y: f64,
    weight: f64,
    lambda: f64,
) -> f64 {
    let z = scale * dot(u, p) + bias;
    weight * bce_loss(sigmoid(z), y)
        + lambda * (u.iter().map(|x| x * x).sum::<f64>() + p.iter().map(|x| x * x).sum::<f64>())
}

/// Analytic gradient of [`sp2v_sample_loss`].
pub fn sp2v_sample_gradients(
    u: &[f64],
    p: &[f64],
    scale: f64,
    bias: f64,
    y: f64,
    weight: f64,
    lambda: f64,
) -> Sp2vGradients {
    let raw = dot(u, p);
    let residual = weight * (sigmoid(scale * raw + bias) - y);
    Sp2vGradients {
        user: u
            .iter()
            .zip(p)
            .map(|(uk, pk)| residual * scale * pk + 2.0 * lambda * uk)
            .collect(),
        item: u
            .iter()
            .zip(p)
            .map(|(uk, pk)| residual * scale * uk + 2.0 * lambda * pk)
            .collect(),
        calib_scale: residual * raw,
        calib_bias: residual,
    }
}

fn check_finite(name: &str, row: &[f64], step: usize) -> Result<()> {
    for &v in row {
        if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
            return Err(CauseError::Divergence {
                step,
                msg: format!("{name} reached {v}"),
            });
        }
    }
    Ok(())
}

fn shared_embedding_set(gamma: Matrix, theta: Matrix, scale: f64, bias: f64) -> EmbeddingSet {
    EmbeddingSet {
        gamma_t: gamma.clone(),
        gamma_c: gamma,
        theta_t: theta.clone(),
        theta_c: theta,
        calib_scale: scale,
        calib_bias: bias,
        mode: TrainMode::ProdOnly,
    }
}

/// Train the sigmoid factorization baseline, optionally with per-event
/// weights on the data term. Returns an embedding set whose treatment and
/// control copies alias the single learned matrices.
pub fn train_sp2v(
    events: &[Interaction],
    num_users: usize,
    num_items: usize,
    hyper: &Hyperparams,
    weights: Option<&[f64]>,
) -> Result<EmbeddingSet> {
    hyper.validate()?;
    if events.is_empty() {
        return Err(CauseError::Data("no training events".into()));
    }
    if let Some(w) = weights {
        if w.len() != events.len() {
            return Err(CauseError::Dimension {
                expected: events.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(CauseError::Data(
                "event weights must be positive and finite".into(),
            ));
        }
    }
    for e in events {
        if e.user >= num_users || e.item >= num_items {
            return Err(CauseError::Data(format!(
                "event ({}, {}) outside bounds {num_users}x{num_items}",
                e.user, e.item
            )));
        }
    }

    let s = hyper.init_scale;
    let dim = hyper.dim;
    let lambda = hyper.lambda_c;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut gamma = Matrix::from_fn(num_users, dim, |_, _| rng.random_range(-s..=s));
    let mut theta = Matrix::from_fn(num_items, dim, |_, _| rng.random_range(-s..=s));
    let mut vel_gamma = Matrix::zeros(num_users, dim);
    let mut vel_theta = Matrix::zeros(num_items, dim);
    let (mut scale, mut bias) = (1.0f64, 0.0f64);
    let (mut vel_scale, mut vel_bias) = (0.0f64, 0.0f64);

    let n = events.len();
    let total_steps = hyper.epochs * n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            for &idx in batch {
                let e = &events[idx];
                let w = weights.map_or(1.0, |w| w[idx]);
                let lr = lr_at(step, total_steps, hyper.lr_start, hyper.lr_end)?;
                let g = sp2v_sample_gradients(
                    gamma.row(e.user),
                    theta.row(e.item),
                    scale,
                    bias,
                    e.reward_value(),
                    w,
                    lambda,
                );
                momentum_step(
                    gamma.row_mut(e.user),
                    &g.user,
                    vel_gamma.row_mut(e.user),
                    lr,
                    hyper.momentum,
                )?;
                check_finite("user", gamma.row(e.user), step)?;
                momentum_step(
                    theta.row_mut(e.item),
                    &g.item,
                    vel_theta.row_mut(e.item),
                    lr,
                    hyper.momentum,
                )?;
                check_finite("item", theta.row(e.item), step)?;
                vel_scale = hyper.momentum * vel_scale - lr * g.calib_scale;
                scale += vel_scale;
                vel_bias = hyper.momentum * vel_bias - lr * g.calib_bias;
                bias += vel_bias;
                check_finite("calibration", &[scale, bias], step)?;
                step += 1;
            }
        }
    }
    Ok(shared_embedding_set(gamma, theta, scale, bias))
}

/// Capped inverse-propensity weights for a training set, optionally
/// self-normalized to mean one. Constant weights normalize to exactly one.
pub fn ips_weights(
    events: &[Interaction],
    propensities: &PropensityModel,
    cap: f64,
    normalize: bool,
) -> Result<Vec<f64>> {
    if cap <= 0.0 {
        return Err(CauseError::Domain("weight cap must be positive".into()));
    }
    let mut weights = Vec::with_capacity(events.len());
    for e in events {
        let pi = propensities.prob(e.item)?;
        if pi <= 0.0 {
            return Err(CauseError::Domain(format!(
                "propensity for item {} is not positive",
                e.item
            )));
        }
        weights.push((1.0 / pi).min(cap));
    }
    if normalize && !weights.is_empty() {
        if weights.windows(2).all(|w| w[0] == w[1]) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        } else {
            let mean: f64 = weights.iter().sum::<f64>() / weights.len() as f64;
            weights.iter_mut().for_each(|w| *w /= mean);
        }
    }
    Ok(weights)
}

/// The sigmoid factorization baseline on inverse-propensity-weighted data.
pub fn train_wsp2v(
    events: &[Interaction],
    num_users: usize,
    num_items: usize,
    hyper: &Hyperparams,
    propensities: &PropensityModel,
    cap: f64,
    normalize: bool,
) -> Result<EmbeddingSet> {
    if propensities.probs.len() != num_items {
        return Err(CauseError::Dimension {
            expected: num_items,
            got: propensities.probs.len(),
        });
    }
    let weights = ips_weights(events, propensities, cap, normalize)?;
    train_sp2v(events, num_users, num_items, hyper, Some(&weights))
}

/// Pairwise ranking loss `-ln sigmoid(score_diff)`, computed stably.
pub fn bpr_pair_loss(score_diff: f64) -> f64 {
    if score_diff >= 0.0 {
        (-score_diff).exp().ln_1p()
    } else {
        -score_diff + score_diff.exp().ln_1p()
    }
}

/// Pairwise gradient for a (user, positive item, negative item) triple under
/// `-ln sigmoid(<u, p+> - <u, p->) + lambda (|u|^2 + |p+|^2 + |p-|^2)`.
pub fn bpr_pair_gradients(
    u: &[f64],
    p_pos: &[f64],
    p_neg: &[f64],
    lambda: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = dot(u, p_pos) - dot(u, p_neg);
    let slope = sigmoid(x) - 1.0;
    let gu = u
        .iter()
        .enumerate()
        .map(|(k, uk)| slope * (p_pos[k] - p_neg[k]) + 2.0 * lambda * uk)
        .collect();
    let gp = p_pos
        .iter()
        .enumerate()
        .map(|(k, pk)| slope * u[k] + 2.0 * lambda * pk)
        .collect();
    let gn = p_neg
        .iter()
        .enumerate()
        .map(|(k, pk)| -slope * u[k] + 2.0 * lambda * pk)
        .collect();
    (gu, gp, gn)
}

/// Pairwise ranking trainer on implicit feedback. Only positive events drive
/// updates; negatives are drawn uniformly (with replacement) from the items
/// the user has no positive for. Users whose positives cover every item are
/// skipped with a warning on stderr.
pub fn train_bpr(
    events: &[Interaction],
    num_users: usize,
    num_items: usize,
    hyper: &Hyperparams,
    negatives_per_positive: usize,
) -> Result<EmbeddingSet> {
    hyper.validate()?;
    if negatives_per_positive == 0 {
        return Err(CauseError::Config(
            "negatives_per_positive must be positive".into(),
        ));
    }
    for e in events {
        if e.user >= num_users || e.item >= num_items {
            return Err(CauseError::Data(format!(
                "event ({}, {}) outside bounds {num_users}x{num_items}",
                e.user, e.item
            )));
        }
    }

    let mut positive_items: Vec<std::collections::HashSet<usize>> =
        vec![std::collections::HashSet::new(); num_users];
    for e in events {
        if e.reward {
            positive_items[e.user].insert(e.item);
        }
    }
    let saturated: Vec<usize> = (0..num_users)
        .filter(|&u| positive_items[u].len() == num_items)
        .collect();
    for &u in &saturated {
        eprintln!("warning: user {u} has positives on every item; skipped in ranking training");
    }
    let positives: Vec<&Interaction> = events
        .iter()
        .filter(|e| e.reward && positive_items[e.user].len() < num_items)
        .collect();
    if positives.is_empty() {
        return Err(CauseError::Data(
            "ranking training needs at least one usable positive event".into(),
        ));
    }

    let s = hyper.init_scale;
    let dim = hyper.dim;
    let lambda = hyper.lambda_c;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut gamma = Matrix::from_fn(num_users, dim, |_, _| rng.random_range(-s..=s));
    let mut theta = Matrix::from_fn(num_items, dim, |_, _| rng.random_range(-s..=s));
    let mut vel_gamma = Matrix::zeros(num_users, dim);
    let mut vel_theta = Matrix::zeros(num_items, dim);

    let n = positives.len();
    let total_steps = hyper.epochs * n * negatives_per_positive;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let e = positives[idx];
            for _ in 0..negatives_per_positive {
                let neg = loop {
                    let cand = rng.random_range(0..num_items);
                    if !positive_items[e.user].contains(&cand) {
                        break cand;
                    }
                };
                let lr = lr_at(step, total_steps, hyper.lr_start, hyper.lr_end)?;
                let (gu, gp, gn) =
                    bpr_pair_gradients(gamma.row(e.user), theta.row(e.item), theta.row(neg), lambda);
                momentum_step(
                    gamma.row_mut(e.user),
                    &gu,
                    vel_gamma.row_mut(e.user),
                    lr,
                    hyper.momentum,
                )?;
                check_finite("user", gamma.row(e.user), step)?;
                momentum_step(
                    theta.row_mut(e.item),
                    &gp,
                    vel_theta.row_mut(e.item),
                    lr,
                    hyper.momentum,
                )?;
                check_finite("positive item", theta.row(e.item), step)?;
                momentum_step(
                    theta.row_mut(neg),
                    &gn,
                    vel_theta.row_mut(neg),
                    lr,
                    hyper.momentum,
                )?;
                check_finite("negative item", theta.row(neg), step)?;
                step += 1;
            }
        }
    }
    Ok(shared_embedding_set(gamma, theta, 1.0, 0.0))
}
