//! Joint two-task embedding trainer.
//!
//! Control and treatment events are factorized jointly: each task fits its
//! own copy of the duplicated matrices (items, users, or both) while a
//! discrepancy regularizer pulls the two copies together. Optimization is
//! per-sample SGD with classical momentum and a linearly decaying learning
//! rate.
//!
//! Reproducibility contract, relied on by tests and persistence:
//! `train_cause` seeds a ChaCha8 generator with `hyper.seed`, draws the
//! initial embeddings via [`init_embeddings`], then each epoch shuffles the
//! index vector `0..n` over the concatenation of `s_c` followed by `s_t`
//! with that same generator. Every reduction runs in a fixed order, so two
//! runs with identical inputs produce bit-identical embeddings.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CauseError, Result};
use crate::math::{bce_loss, dot, sigmoid, Matrix, PROB_EPS};
use crate::types::{EmbeddingSet, Hyperparams, Interaction, SampleOrigin, TrainMode};

/// Training aborts once any parameter magnitude crosses this bound.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// How the treatment representation is built and which item matrix serves
/// predictions afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CauseVariant {
    /// Per-item treatment embeddings; predict with the regularized control
    /// matrix.
    ProdC,
    /// Per-item treatment embeddings; predict with the treatment matrix.
    ProdT,
    /// One pooled treatment vector shared by all items; predict with the
    /// control matrix.
    Avg,
}

/// Sparse gradient of one sample's loss: the touched rows plus the two
/// calibration scalars. For a shared pair the gradient sits in the control
/// slot and applies to the shared (mirrored) row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradients {
    pub gamma_t: Option<(usize, Vec<f64>)>,
    pub gamma_c: Option<(usize, Vec<f64>)>,
    pub theta_t: Option<(usize, Vec<f64>)>,
    pub theta_c: Option<(usize, Vec<f64>)>,
    pub calib_scale: f64,
    pub calib_bias: f64,
}

/// Mean per-sample training loss for each epoch, in epoch order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch_mean_loss: Vec<f64>,
}

struct TrainState {
    emb: EmbeddingSet,
    vel_gamma_t: Matrix,
    vel_gamma_c: Matrix,
    vel_theta_t: Matrix,
    vel_theta_c: Matrix,
    vel_scale: f64,
    vel_bias: f64,
    step: usize,
}

/// Draw the initial embeddings from `rng`, uniform in
/// `[-init_scale, +init_scale]`.
///
/// Draw order is part of the reproducibility contract: the user side first
/// (treatment copy then control copy when duplicated, a single shared draw
/// otherwise), then the item side the same way. Under [`CauseVariant::Avg`]
/// the full treatment item matrix is drawn and its first row is then
/// broadcast to every row, so draw counts match the other variants.
pub fn init_embeddings(
    num_users: usize,
    num_items: usize,
    mode: TrainMode,
    variant: CauseVariant,
    hyper: &Hyperparams,
    rng: &mut ChaCha8Rng,
) -> EmbeddingSet {
    let s = hyper.init_scale;
    let dim = hyper.dim;
    let draw = |rows: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_fn(rows, dim, |_, _| rng.random_range(-s..=s))
    };

    let (gamma_t, gamma_c) = if mode.users_duplicated() {
        let gt = draw(num_users, rng);
        let gc = draw(num_users, rng);
        (gt, gc)
    } else {
        let g = draw(num_users, rng);
        (g.clone(), g)
    };
    let (mut theta_t, theta_c) = if mode.items_duplicated() {
        let tt = draw(num_items, rng);
        let tc = draw(num_items, rng);
        (tt, tc)
    } else {
        let t = draw(num_items, rng);
        (t.clone(), t)
    };
    if variant == CauseVariant::Avg {
        let pooled = theta_t.row(0).to_vec();
        for j in 0..theta_t.rows() {
            theta_t.row_mut(j).copy_from_slice(&pooled);
        }
    }

    EmbeddingSet {
        gamma_t,
        gamma_c,
        theta_t,
        theta_c,
        calib_scale: 1.0,
        calib_bias: 0.0,
        mode,
    }
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_indices(emb: &EmbeddingSet, inter: &Interaction) -> Result<()> {
    if inter.user >= emb.num_users() || inter.item >= emb.num_items() {
        return Err(CauseError::Domain(format!(
            "event ({}, {}) outside embedding bounds {}x{}",
            inter.user,
            inter.item,
            emb.num_users(),
            emb.num_items()
        )));
    }
    Ok(())
}

fn sample_eval(
    emb: &EmbeddingSet,
    inter: &Interaction,
    hyper: &Hyperparams,
) -> Result<(f64, SampleGradients)> {
    check_indices(emb, inter)?;
    let (i, j) = (inter.user, inter.item);
    let treatment = inter.origin == SampleOrigin::Treatment;

    // The task-appropriate rows; the control copy is canonical for shared
    // pairs, so both tasks read it there.
    let u = if emb.mode.users_duplicated() && treatment {
        emb.gamma_t.row(i)
    } else {
        emb.gamma_c.row(i)
    };
    let p = if emb.mode.items_duplicated() && treatment {
        emb.theta_t.row(j)
    } else {
        emb.theta_c.row(j)
    };

    let raw = dot(u, p);
    let z = emb.calib_scale * raw + emb.calib_bias;
    let p_hat = sigmoid(z);
    let y = inter.reward_value();
    let residual = p_hat - y;
    let l2 = if treatment {
        hyper.lambda_t
    } else {
        hyper.lambda_c
    };

    let mut loss = bce_loss(p_hat, y);
    let mut grads = SampleGradients {
        gamma_t: None,
        gamma_c: None,
        theta_t: None,
        theta_c: None,
        calib_scale: residual * raw,
        calib_bias: residual,
    };

    let base_item: Vec<f64> = u.iter().map(|x| residual * emb.calib_scale * x).collect();
    let base_user: Vec<f64> = p.iter().map(|x| residual * emb.calib_scale * x).collect();

    if emb.mode.items_duplicated() {
        let tt = emb.theta_t.row(j);
        let tc = emb.theta_c.row(j);
        loss += l2 * squared_norm(p) + hyper.lambda_dist * squared_dist(tt, tc);
        if treatment {
            let g = base_item
                .iter()
                .enumerate()
                .map(|(k, b)| b + 2.0 * l2 * tt[k] + 2.0 * hyper.lambda_dist * (tt[k] - tc[k]))
                .collect();
            grads.theta_t = Some((j, g));
        } else {
            let g = base_item
                .iter()
                .enumerate()
                .map(|(k, b)| b + 2.0 * l2 * tc[k] - 2.0 * hyper.lambda_dist * (tt[k] - tc[k]))
                .collect();
            grads.theta_c = Some((j, g));
        }
    } else {
        // Shared items: plain L2, no discrepancy (the copies are equal).
        loss += l2 * squared_norm(p);
        let g = base_item
            .iter()
            .enumerate()
            .map(|(k, b)| b + 2.0 * l2 * p[k])
            .collect();
        grads.theta_c = Some((j, g));
    }

    if emb.mode.users_duplicated() {
        let gt = emb.gamma_t.row(i);
        let gc = emb.gamma_c.row(i);
        loss += l2 * squared_norm(u) + hyper.lambda_dist * squared_dist(gt, gc);
        if treatment {
            let g = base_user
                .iter()
                .enumerate()
                .map(|(k, b)| b + 2.0 * l2 * gt[k] + 2.0 * hyper.lambda_dist * (gt[k] - gc[k]))
                .collect();
            grads.gamma_t = Some((i, g));
        } else {
            let g = base_user
                .iter()
                .enumerate()
                .map(|(k, b)| b + 2.0 * l2 * gc[k] - 2.0 * hyper.lambda_dist * (gt[k] - gc[k]))
                .collect();
            grads.gamma_c = Some((i, g));
        }
    } else {
        // Shared users: plain L2, no discrepancy.
        loss += l2 * squared_norm(u);
        let g = base_user
            .iter()
            .enumerate()
            .map(|(k, b)| b + 2.0 * l2 * u[k])
            .collect();
        grads.gamma_c = Some((i, g));
    }

    Ok((loss, grads))
}

/// Loss of a single event under the joint objective: cross-entropy of the
/// calibrated score, the task L2 term on the touched user and item rows, and
/// the discrepancy penalty between duplicated copies.
pub fn sample_loss(emb: &EmbeddingSet, inter: &Interaction, hyper: &Hyperparams) -> Result<f64> {
    sample_eval(emb, inter, hyper).map(|(loss, _)| loss)
}

/// Analytic gradient of [`sample_loss`] with respect to the rows the event
/// touches (per-task dispatch: control events update control rows, treatment
/// events treatment rows) and the calibration scalars.
pub fn sample_gradients(
    emb: &EmbeddingSet,
    inter: &Interaction,
    hyper: &Hyperparams,
) -> Result<SampleGradients> {
    sample_eval(emb, inter, hyper).map(|(_, grads)| grads)
}

/// Classical momentum update: `v <- momentum * v - lr * grad`,
/// `param <- param + v`, in place.
pub fn momentum_step(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(CauseError::Dimension {
            expected: param.len(),
            got: grad.len().max(velocity.len()),
        });
    }
    for k in 0..param.len() {
        velocity[k] = momentum * velocity[k] - lr * grad[k];
        param[k] += velocity[k];
    }
    Ok(())
}

/// Linearly decaying learning rate over the whole run.
pub fn lr_at(step: usize, total_steps: usize, lr_start: f64, lr_end: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(CauseError::Domain("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(CauseError::Domain(format!(
            "step {step} out of range 0..={total_steps}"
        )));
    }
    // Convex-combination form so both endpoints are hit exactly.
    let t = step as f64 / total_steps as f64;
    Ok(lr_start * (1.0 - t) + lr_end * t)
}

fn check_row(name: &str, row: &[f64], step: usize) -> Result<()> {
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

fn apply_gradients(
    state: &mut TrainState,
    grads: &SampleGradients,
    lr: f64,
    momentum: f64,
    variant: CauseVariant,
) -> Result<()> {
    let step = state.step;

    if let Some((i, g)) = &grads.gamma_t {
        momentum_step(
            state.emb.gamma_t.row_mut(*i),
            g,
            state.vel_gamma_t.row_mut(*i),
            lr,
            momentum,
        )?;
        check_row("gamma_t", state.emb.gamma_t.row(*i), step)?;
    }
    if let Some((i, g)) = &grads.gamma_c {
        momentum_step(
            state.emb.gamma_c.row_mut(*i),
            g,
            state.vel_gamma_c.row_mut(*i),
            lr,
            momentum,
        )?;
        check_row("gamma_c", state.emb.gamma_c.row(*i), step)?;
        if !state.emb.mode.users_duplicated() {
            // Shared users: mirror the canonical control row.
            let row = state.emb.gamma_c.row(*i).to_vec();
            state.emb.gamma_t.row_mut(*i).copy_from_slice(&row);
        }
    }
    if let Some((j, g)) = &grads.theta_t {
        if variant == CauseVariant::Avg {
            // One pooled treatment vector: row 0 is canonical, every row
            // mirrors it.
            momentum_step(
                state.emb.theta_t.row_mut(0),
                g,
                state.vel_theta_t.row_mut(0),
                lr,
                momentum,
            )?;
            check_row("theta_t (pooled)", state.emb.theta_t.row(0), step)?;
            let pooled = state.emb.theta_t.row(0).to_vec();
            for r in 0..state.emb.theta_t.rows() {
                state.emb.theta_t.row_mut(r).copy_from_slice(&pooled);
            }
        } else {
            momentum_step(
                state.emb.theta_t.row_mut(*j),
                g,
                state.vel_theta_t.row_mut(*j),
                lr,
                momentum,
            )?;
            check_row("theta_t", state.emb.theta_t.row(*j), step)?;
        }
    }
    if let Some((j, g)) = &grads.theta_c {
        momentum_step(
            state.emb.theta_c.row_mut(*j),
            g,
            state.vel_theta_c.row_mut(*j),
            lr,
            momentum,
        )?;
        check_row("theta_c", state.emb.theta_c.row(*j), step)?;
        if !state.emb.mode.items_duplicated() {
            let row = state.emb.theta_c.row(*j).to_vec();
            state.emb.theta_t.row_mut(*j).copy_from_slice(&row);
        }
    }

    state.vel_scale = momentum * state.vel_scale - lr * grads.calib_scale;
    state.emb.calib_scale += state.vel_scale;
    state.vel_bias = momentum * state.vel_bias - lr * grads.calib_bias;
    state.emb.calib_bias += state.vel_bias;
    for (name, v) in [
        ("calib_scale", state.emb.calib_scale),
        ("calib_bias", state.emb.calib_bias),
    ] {
        if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
            return Err(CauseError::Divergence {
                step,
                msg: format!("{name} reached {v}"),
            });
        }
    }
    Ok(())
}

/// Train the joint model and report the per-epoch mean training loss.
pub fn train_cause_with_log(
    s_c: &[Interaction],
    s_t: &[Interaction],
    num_users: usize,
    num_items: usize,
    hyper: &Hyperparams,
    mode: TrainMode,
    variant: CauseVariant,
) -> Result<(EmbeddingSet, TrainLog)> {
    hyper.validate()?;
    if s_c.is_empty() {
        return Err(CauseError::Data("control sample is empty".into()));
    }
    if variant == CauseVariant::Avg && !mode.items_duplicated() {
        return Err(CauseError::Config(
            "avg variant needs duplicated item matrices".into(),
        ));
    }
    for e in s_c.iter().chain(s_t) {
        if e.user >= num_users || e.item >= num_items {
            return Err(CauseError::Data(format!(
                "event ({}, {}) outside bounds {num_users}x{num_items}",
                e.user, e.item
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let emb = init_embeddings(num_users, num_items, mode, variant, hyper, &mut rng);
    let dim = hyper.dim;
    let mut state = TrainState {
        emb,
        vel_gamma_t: Matrix::zeros(num_users, dim),
        vel_gamma_c: Matrix::zeros(num_users, dim),
        vel_theta_t: Matrix::zeros(num_items, dim),
        vel_theta_c: Matrix::zeros(num_items, dim),
        vel_scale: 0.0,
        vel_bias: 0.0,
        step: 0,
    };

    let n = s_c.len() + s_t.len();
    let total_steps = hyper.epochs * n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog {
        epoch_mean_loss: Vec::with_capacity(hyper.epochs),
    };

    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            for &idx in batch {
                let inter = if idx < s_c.len() {
                    &s_c[idx]
                } else {
                    &s_t[idx - s_c.len()]
                };
                let lr = lr_at(state.step, total_steps, hyper.lr_start, hyper.lr_end)?;
                let (loss, grads) = sample_eval(&state.emb, inter, hyper)?;
                epoch_loss += loss;
                apply_gradients(&mut state, &grads, lr, hyper.momentum, variant)?;
                state.step += 1;
            }
        }
        log.epoch_mean_loss.push(epoch_loss / n as f64);
    }

    debug_assert!(state.emb.all_finite());
    Ok((state.emb, log))
}

/// Train the joint model. See the module docs for the determinism contract.
pub fn train_cause(
    s_c: &[Interaction],
    s_t: &[Interaction],
    num_users: usize,
    num_items: usize,
    hyper: &Hyperparams,
    mode: TrainMode,
    variant: CauseVariant,
) -> Result<EmbeddingSet> {
    train_cause_with_log(s_c, s_t, num_users, num_items, hyper, mode, variant)
        .map(|(emb, _)| emb)
}

/// Calibrated reward probability for one pair. `ProdC` and `Avg` score with
/// the control matrices, `ProdT` with the treatment matrices; the output is
/// clamped away from exactly 0 and 1.
pub fn predict(
    emb: &EmbeddingSet,
    variant: CauseVariant,
    user: usize,
    item: usize,
) -> Result<f64> {
    let (u, p) = match variant {
        CauseVariant::ProdC | CauseVariant::Avg => {
            (emb.gamma_c.try_row(user)?, emb.theta_c.try_row(item)?)
        }
        CauseVariant::ProdT => (emb.gamma_t.try_row(user)?, emb.theta_t.try_row(item)?),
    };
    let z = emb.calib_scale * dot(u, p) + emb.calib_bias;
    Ok(sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS))
}
