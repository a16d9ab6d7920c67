//! Training hyperparameters and early stopping shared by both generator kinds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian::ScheduleParams;

/// Optimization and architecture settings for a conditional generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Hidden width of both the score network and the condition embedder.
    pub width: usize,
    /// Number of hidden layers in each network.
    pub depth: usize,
    pub embed_dim: usize,
    pub time_dim: usize,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub val_fraction: f64,
    /// Decay of the weight moving average used for validation and the
    /// returned generator; 0 disables averaging.
    pub ema_decay: f64,
    /// Decoupled weight decay on weight matrices.
    pub weight_decay: f64,
    /// L1 penalty on the embedder's input weights, applied as a proximal
    /// step; sparsifies the predictors the embedder reads.
    pub input_l1: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 1e-4,
            max_epochs: 200,
            patience: 20,
            width: 128,
            depth: 3,
            embed_dim: 64,
            time_dim: 16,
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            val_fraction: 0.1,
            ema_decay: 0.0,
            weight_decay: 0.0,
            input_l1: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for the categorical generator: one hidden layer of 256 units, 30 epochs.
    pub fn discrete_default() -> Self {
        Self { width: 256, depth: 1, max_epochs: 30, patience: 30, ..Self::default() }
    }

    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams { steps: self.steps, beta_min: self.beta_min, beta_max: self.beta_max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be positive"));
        }
        if self.width == 0 || self.embed_dim == 0 {
            return Err(invalid("width and embed_dim must be positive"));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(invalid(format!("time_dim must be even and positive, got {}", self.time_dim)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(invalid("val_fraction must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(invalid("ema_decay must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay * self.learning_rate < 1.0) {
            return Err(invalid("weight_decay must be nonnegative and below 1 / learning_rate"));
        }
        if !(self.input_l1 >= 0.0 && self.input_l1.is_finite()) {
            return Err(invalid("input_l1 must be nonnegative"));
        }
        Ok(())
    }
}

/// Layer sizes `[input, width x depth, output]`.
pub(crate) fn layer_dims(input: usize, width: usize, depth: usize, output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(width, depth));
    dims.push(output);
    dims
}

/// Tracks the best validation loss and the state that achieved it.
pub(crate) struct EarlyStopping<S> {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    best_state: Option<S>,
    stale: usize,
}

impl<S> EarlyStopping<S> {
    pub fn new(patience: usize) -> Self {
        Self { patience, best_loss: f64::INFINITY, best_epoch: 0, best_state: None, stale: 0 }
    }

    /// Records an epoch; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, loss: f64, snapshot: impl FnOnce() -> S) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.best_state = Some(snapshot());
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.stale >= self.patience
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn into_best(self) -> Option<S> {
        self.best_state
    }
}

/// Provenance of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Standalone,
    Source,
    Finetuned,
}

/// Training metadata carried with a generator and its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub role: Role,
    pub seed: u64,
    pub epochs_run: usize,
    pub final_validation_loss: Option<f64>,
    pub training_rows: usize,
}

/// Per-epoch losses from a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}
