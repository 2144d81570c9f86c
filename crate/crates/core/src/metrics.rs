//! Evaluation metrics and report assembly.
//!
//! Losses are reported both raw and as lift over the constant predictor that
//! always outputs the test set's average conversion rate; improvements on
//! loss metrics are positive lifts. Ranking quality is reported as raw AUC.

use crate::error::{CauseError, Result};
use crate::math::bce_loss;

/// Mean squared error between predictions and binary labels.
pub fn mse(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let d = p - if y { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Mean binary cross-entropy (negative log-likelihood) with the standard
/// probability clamp.
pub fn nll(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, &y)| bce_loss(*p, if y { 1.0 } else { 0.0 }))
        .sum();
    Ok(sum / preds.len() as f64)
}

fn check_lengths(preds: &[f64], labels: &[bool]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(CauseError::Dimension {
            expected: labels.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(CauseError::Data("no prediction/label pairs".into()));
    }
    Ok(())
}

/// Probability that a positive outranks a negative, ties counted half: the
/// Mann-Whitney statistic, computed by sorting with average ranks for ties.
/// Invariant under any strictly increasing transform of the scores.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CauseError::Domain("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CauseError::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Walk runs of tied scores, assigning each member the average rank.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end+1 average to (start + end) / 2 + 1.
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        start = end + 1;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Direction convention for lift computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    /// Loss metric: smaller is better, so improvements get positive lifts.
    LossLowerBetter,
}

/// Relative improvement over a baseline metric value.
pub fn lift(metric_value: f64, baseline_value: f64, kind: LiftKind) -> Result<f64> {
    if baseline_value <= 0.0 {
        return Err(CauseError::Domain(format!(
            "lift baseline must be positive, got {baseline_value}"
        )));
    }
    match kind {
        LiftKind::LossLowerBetter => Ok((baseline_value - metric_value) / baseline_value),
    }
}

/// Loss values of the constant predictor that always outputs the label mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBaseline {
    pub avg_cr: f64,
    pub mse: f64,
    pub nll: f64,
}

pub fn constant_baseline(labels: &[bool]) -> Result<ConstantBaseline> {
    if labels.is_empty() {
        return Err(CauseError::Data("no labels".into()));
    }
    let avg_cr =
        labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    let constant = vec![avg_cr; labels.len()];
    Ok(ConstantBaseline {
        avg_cr,
        mse: mse(&constant, labels)?,
        nll: nll(&constant, labels)?,
    })
}

/// One evaluated run: losses, their lifts against the constant predictor,
/// AUC and run metadata. Ranking-only methods leave the loss fields empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub n_events: usize,
    pub avg_cr: f64,
    pub mse: Option<f64>,
    pub mse_lift: Option<f64>,
    pub nll: Option<f64>,
    pub nll_lift: Option<f64>,
    pub auc: f64,
}

pub const CSV_HEADER: &str = "method,dataset,seed,n_events,avg_cr,mse,mse_lift,nll,nll_lift,auc";

fn fmt_metric(v: f64) -> String {
    format!("{v:.9}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_metric).unwrap_or_default()
}

impl MetricReport {
    /// Score a prediction vector. With `with_losses` the scores are treated
    /// as probabilities and MSE/NLL plus lifts are filled in; without, only
    /// AUC is computed (scores may then live on any monotone scale).
    pub fn from_predictions(
        method: &str,
        dataset: &str,
        seed: u64,
        scores: &[f64],
        labels: &[bool],
        with_losses: bool,
    ) -> Result<Self> {
        let auc_value = auc(scores, labels)?;
        let baseline = constant_baseline(labels)?;
        let (mse_v, mse_l, nll_v, nll_l) = if with_losses {
            let m = mse(scores, labels)?;
            let n = nll(scores, labels)?;
            (
                Some(m),
                Some(lift(m, baseline.mse, LiftKind::LossLowerBetter)?),
                Some(n),
                Some(lift(n, baseline.nll, LiftKind::LossLowerBetter)?),
            )
        } else {
            (None, None, None, None)
        };
        Ok(MetricReport {
            method: method.to_string(),
            dataset: dataset.to_string(),
            seed,
            n_events: labels.len(),
            avg_cr: baseline.avg_cr,
            mse: mse_v,
            mse_lift: mse_l,
            nll: nll_v,
            nll_lift: nll_l,
            auc: auc_value,
        })
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.dataset,
            self.seed,
            self.n_events,
            fmt_metric(self.avg_cr),
            fmt_opt(self.mse),
            fmt_opt(self.mse_lift),
            fmt_opt(self.nll),
            fmt_opt(self.nll_lift),
            fmt_metric(self.auc),
        )
    }
}

/// Mean and sample standard deviation of a series (n - 1 denominator).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}
