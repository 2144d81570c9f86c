//! Domain types shared across the crate: interaction events, the learned
//! embedding matrices and trainer hyperparameters.

use crate::error::{CauseError, Result};
use crate::math::Matrix;

/// Which sample an event belongs to: the biased logging sample (control)
/// or the uniform-exposure sample (treatment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleOrigin {
    Control,
    Treatment,
}

/// One observed (user, item, binary reward) event tagged with its sample
/// of origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub reward: bool,
    pub origin: SampleOrigin,
}

impl Interaction {
    pub fn new(user: usize, item: usize, reward: bool, origin: SampleOrigin) -> Self {
        Interaction {
            user,
            item,
            reward,
            origin,
        }
    }

    /// Reward as 0.0 / 1.0 for loss arithmetic.
    pub fn reward_value(&self) -> f64 {
        if self.reward {
            1.0
        } else {
            0.0
        }
    }
}

/// Which side of the factorization keeps separate treatment/control copies.
/// The other side is shared: both copies are kept equal at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Separate item matrices, shared users.
    ProdOnly,
    /// Separate user matrices, shared items.
    UserOnly,
    /// All four matrices learned independently.
    Both,
}

impl TrainMode {
    pub fn items_duplicated(&self) -> bool {
        matches!(self, TrainMode::ProdOnly | TrainMode::Both)
    }

    pub fn users_duplicated(&self) -> bool {
        matches!(self, TrainMode::UserOnly | TrainMode::Both)
    }

    pub fn token(&self) -> &'static str {
        match self {
            TrainMode::ProdOnly => "prod",
            TrainMode::UserOnly => "user",
            TrainMode::Both => "both",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        match s {
            "prod" => Ok(TrainMode::ProdOnly),
            "user" => Ok(TrainMode::UserOnly),
            "both" => Ok(TrainMode::Both),
            other => Err(CauseError::Config(format!("unknown train mode `{other}`"))),
        }
    }
}

/// The four learned matrices plus the calibration scalars of the scoring
/// transform `sigmoid(scale * <u, p> + bias)`.
///
/// For a shared pair (users in [`TrainMode::ProdOnly`], items in
/// [`TrainMode::UserOnly`]) the control copy is canonical and the treatment
/// copy mirrors it exactly. The item shift matrix (treatment minus control)
/// is always derived on demand, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub gamma_t: Matrix,
    pub gamma_c: Matrix,
    pub theta_t: Matrix,
    pub theta_c: Matrix,
    pub calib_scale: f64,
    pub calib_bias: f64,
    pub mode: TrainMode,
}

impl EmbeddingSet {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize, mode: TrainMode) -> Self {
        EmbeddingSet {
            gamma_t: Matrix::zeros(num_users, dim),
            gamma_c: Matrix::zeros(num_users, dim),
            theta_t: Matrix::zeros(num_items, dim),
            theta_c: Matrix::zeros(num_items, dim),
            calib_scale: 1.0,
            calib_bias: 0.0,
            mode,
        }
    }

    pub fn num_users(&self) -> usize {
        self.gamma_c.rows()
    }

    pub fn num_items(&self) -> usize {
        self.theta_c.rows()
    }

    pub fn dim(&self) -> usize {
        self.gamma_c.cols()
    }

    /// Per-item shift between treatment and control representations.
    pub fn item_shift(&self, item: usize) -> Result<Vec<f64>> {
        let t = self.theta_t.try_row(item)?;
        let c = self.theta_c.try_row(item)?;
        Ok(t.iter().zip(c).map(|(a, b)| a - b).collect())
    }

    pub fn shapes_consistent(&self) -> bool {
        self.gamma_t.rows() == self.gamma_c.rows()
            && self.theta_t.rows() == self.theta_c.rows()
            && [&self.gamma_t, &self.gamma_c, &self.theta_t, &self.theta_c]
                .iter()
                .all(|m| m.cols() == self.dim())
    }

    pub fn all_finite(&self) -> bool {
        self.gamma_t.is_finite()
            && self.gamma_c.is_finite()
            && self.theta_t.is_finite()
            && self.theta_c.is_finite()
            && self.calib_scale.is_finite()
            && self.calib_bias.is_finite()
    }
}

/// Trainer hyperparameters. `lambda_t` / `lambda_c` weight the per-task L2
/// terms, `lambda_dist` the discrepancy between the duplicated matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub lambda_dist: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Hyperparams {
    /// Defaults for a given embedding dimension. The initialization scale
    /// shrinks with the dimension so initial scores stay small.
    pub fn for_dim(dim: usize) -> Self {
        Hyperparams {
            dim,
            lambda_t: 1e-4,
            lambda_c: 1e-4,
            lambda_dist: 1e-2,
            lr_start: 0.02,
            lr_end: 0.001,
            momentum: 0.9,
            epochs: 20,
            batch_size: 512,
            seed: 42,
            init_scale: Self::default_init_scale(dim),
        }
    }

    pub fn default_init_scale(dim: usize) -> f64 {
        0.1 / (dim.max(1) as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(CauseError::Config("dim must be positive".into()));
        }
        if self.lambda_t < 0.0 || self.lambda_c < 0.0 || self.lambda_dist < 0.0 {
            return Err(CauseError::Config(
                "regularization weights must be non-negative".into(),
            ));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(CauseError::Config("learning rates must be positive".into()));
        }
        if self.lr_end > self.lr_start {
            return Err(CauseError::Config(
                "lr_end must not exceed lr_start".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CauseError::Config("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CauseError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.init_scale <= 0.0 {
            return Err(CauseError::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::for_dim(16)
    }
}
