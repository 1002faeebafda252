//! Chamfer objective, Adam updates of the head, checkpointing and the
//! mini-batch training loop.

mod adam;
mod checkpoint;
mod fit;
mod loss;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, Checkpoint, OptimizerState, CHECKPOINT_FORMAT};
pub use fit::{fit, FeatureCache, FitReport, StepRecord, Trainer};
pub use loss::{chamfer_loss, chamfer_loss_with_grad, mean_chamfer, training_objective};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Validation period in steps; 0 evaluates at every epoch end.
    pub eval_every: usize,
    /// `last.ckpt` period in steps; 0 saves at every epoch end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            alpha: 5.0,
            learning_rate: adam.learning_rate,
            batch_size: 32,
            max_epochs: 100,
            max_steps: None,
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            eval_every: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return fail("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Progress counters and the data-order stream of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: usize,
    pub epoch: usize,
    /// Position within `order` for the current epoch.
    pub cursor: usize,
    pub order: Vec<usize>,
    pub rng: ChaCha8Rng,
    pub best_val_cd: Option<f64>,
    pub backbone_hash: String,
}

impl TrainState {
    pub fn completed_epochs(&self) -> usize {
        if !self.order.is_empty() && self.cursor >= self.order.len() {
            self.epoch + 1
        } else {
            self.epoch
        }
    }
}
