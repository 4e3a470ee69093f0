//! Training orchestration: estimator pretraining, the SightGAN adversarial
//! loop, small-budget fine-tuning, and dataset translation.
//!
//! Everything here is deterministic given a [`TrainConfig`]: model
//! initialization, batch order, replay-buffer decisions and optimizer
//! updates all derive from `config.seed` through fixed per-consumer stream
//! tags, so two runs with equal inputs produce bitwise-identical parameter
//! trajectories and loss histories. Checkpoints capture the full mutable
//! state (weights, optimizer moments, RNG positions, buffer contents), and
//! resuming from one replays the exact remainder of the run.

mod batches;
mod estimator;
mod reference;
mod replay;
mod sightgan;
mod state;
mod translate;

pub use estimator::{
    finetune_estimator, train_estimator, EpochStats, TrainTarget, TrainedEstimator,
};
pub use reference::train_cyclegan;
pub use replay::ReplayBuffer;
pub use sightgan::{resume_sightgan, train_sightgan, TranslationModel, CHECKPOINT_DIR, HISTORY_FILE};
pub use translate::translate_dataset;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::{DiscriminatorConfig, EstimatorConfig, GeneratorConfig};
use serde::{Deserialize, Serialize};

// Per-consumer RNG stream tags, mixed with `config.seed`. The reference
// CycleGAN trainer uses the same tags so that, with the extra losses
// disabled, both trainers consume identical random streams — a precondition
// of the step-equivalence oracle.
pub(crate) mod seed_tags {
    pub const STREAM_SIM: u64 = 1;
    pub const STREAM_REAL: u64 = 2;
    pub const POOL_FAKE_REAL: u64 = 3;
    pub const POOL_FAKE_SIM: u64 = 4;
    pub const INIT_G: u64 = 10;
    pub const INIT_F: u64 = 11;
    pub const INIT_DS: u64 = 12;
    pub const INIT_DR: u64 = 13;
    pub const EST_INIT: u64 = 20;
    pub const EST_SPLIT: u64 = 21;
    pub const EST_STREAM: u64 = 22;
}

/// Which pool the distillation estimator is pretrained on. The consistency
/// loss compares estimates in both domains, so the default trains on the
/// combined pool; single-domain choices exist for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainPool {
    Sim,
    Real,
    Mixed,
}

/// Hyperparameters shared by all training entry points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lr_estimator: f64,
    pub weights: LossWeights,
    /// Capacity of each generated-image replay pool.
    pub replay_buffer_size: usize,
    pub seed: u64,
    /// Checkpoint every this many generator steps.
    pub checkpoint_interval: u64,
    /// Side length datasets must be rendered at.
    pub image_size: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub estimator: EstimatorConfig,
    /// Fraction of the pooled samples held out for per-epoch validation
    /// RMSE; 0 validates on the training set itself.
    pub validation_fraction: f64,
    pub pretrain_pool: PretrainPool,
    /// Restrict fine-tuning updates to the estimator head (fc1/fc2/out).
    pub head_only_finetune: bool,
    /// Learning-rate multiplier applied by `finetune_estimator`.
    pub finetune_lr_factor: f64,
    /// Also penalize background drift of the cycled images (experimental
    /// extension of the two-term region-consistency loss).
    pub extended_mask_terms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            // CycleGAN reference rates; estimators run at half that, and
            // everything decays linearly over the last half of training.
            lr_generator: 2e-4,
            lr_discriminator: 2e-4,
            lr_estimator: 1e-4,
            weights: LossWeights::default(),
            replay_buffer_size: 50,
            seed: 0,
            checkpoint_interval: 500,
            image_size: 64,
            generator: GeneratorConfig::desk(16, 2),
            discriminator: DiscriminatorConfig::desk(16, 2),
            estimator: EstimatorConfig::desk(32, 8, 3),
            validation_fraction: 0.1,
            pretrain_pool: PretrainPool::Mixed,
            head_only_finetune: false,
            finetune_lr_factor: 0.1,
            extended_mask_terms: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be >= 1".into()));
        }
        for (name, lr) in [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_estimator", self.lr_estimator),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {lr}")));
            }
        }
        self.weights.validate()?;
        if self.checkpoint_interval == 0 {
            return Err(Error::Validation("checkpoint_interval must be >= 1".into()));
        }
        if self.image_size < 4 || self.image_size % 4 != 0 {
            return Err(Error::Validation(format!(
                "image_size must be a positive multiple of 4, got {}",
                self.image_size
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Validation(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.finetune_lr_factor.is_finite()
            && self.finetune_lr_factor > 0.0
            && self.finetune_lr_factor <= 1.0)
        {
            return Err(Error::Validation(format!(
                "finetune_lr_factor must lie in (0, 1], got {}",
                self.finetune_lr_factor
            )));
        }
        Ok(())
    }
}

/// Linear learning-rate decay over the last half of training: full rate for
/// the first `total / 2` steps, then a straight line that would reach zero
/// one step past the end.
pub fn lr_scale(step: u64, total_steps: u64) -> f64 {
    assert!(total_steps >= 1, "empty schedule");
    assert!(step < total_steps, "step {step} beyond schedule {total_steps}");
    let half = total_steps / 2;
    if step < half {
        1.0
    } else {
        (total_steps - step) as f64 / (total_steps - half) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_rejected() {
        for breakage in [
            |c: &mut TrainConfig| c.epochs = 0,
            |c: &mut TrainConfig| c.batch_size = 0,
            |c: &mut TrainConfig| c.lr_generator = 0.0,
            |c: &mut TrainConfig| c.lr_discriminator = -1e-4,
            |c: &mut TrainConfig| c.lr_estimator = f64::NAN,
            |c: &mut TrainConfig| c.checkpoint_interval = 0,
            |c: &mut TrainConfig| c.image_size = 30,
            |c: &mut TrainConfig| c.validation_fraction = 1.0,
            |c: &mut TrainConfig| c.finetune_lr_factor = 0.0,
            |c: &mut TrainConfig| c.weights.lambda_cycle = -1.0,
        ] {
            let mut c = TrainConfig::default();
            breakage(&mut c);
            assert!(c.validate().is_err(), "accepted {c:?}");
        }
    }

    #[test]
    fn config_serde_round_trips_with_defaults() {
        let full = TrainConfig::default();
        let json = serde_json::to_string(&full).unwrap();
        let back: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(full, back);

        // Partial documents fill in defaults; unknown keys are refused.
        let partial: TrainConfig =
            serde_json::from_str(r#"{"epochs": 3, "seed": 9, "pretrain_pool": "sim"}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.pretrain_pool, PretrainPool::Sim);
        assert_eq!(partial.batch_size, TrainConfig::default().batch_size);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1.0}"#).is_err());
    }

    #[test]
    fn lr_schedule_holds_then_decays_linearly() {
        assert_eq!(lr_scale(0, 1), 1.0);
        let total = 10;
        let scales: Vec<f64> = (0..total).map(|s| lr_scale(s, total)).collect();
        for s in 0..5 {
            assert_eq!(scales[s], 1.0);
        }
        // 5 decay steps: 1.0, 0.8, 0.6, 0.4, 0.2 — never reaching zero.
        for (k, expect) in [(5, 1.0), (6, 0.8), (7, 0.6), (8, 0.4), (9, 0.2)] {
            assert!((scales[k] - expect).abs() < 1e-12, "step {k}: {}", scales[k]);
        }
        for w in scales.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(scales[total as usize - 1] > 0.0);
    }
}
