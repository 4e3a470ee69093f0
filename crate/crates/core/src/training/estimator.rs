//! Mean-squared-error regression training for the contact position and
//! force estimators, plus small-budget fine-tuning.
//!
//! Targets are normalized componentwise by a geometry- (or force-range-)
//! derived scale so the optimizer works on O(1) quantities; the scale
//! travels with the trained model and predictions are reported back in
//! native units (mm or N).

use super::batches::{
    batch_differences, batch_references, batch_targets, load_frames, pool_frames, BatchStream,
    LoadedDataset, LoadedFrame,
};
use super::{lr_scale, seed_tags, TrainConfig};
use crate::autograd::{Adam, AdamConfig, Graph, Scalar};
use crate::data::{Dataset, SensorGeometry, FORCE_XY_MAX_N, FORCE_Z_MAX_N};
use crate::error::{Error, Result};
use crate::eval::{force_rmse, position_rmse};
use crate::nets::Estimator;
use crate::sim::mix_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which label an estimator regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainTarget {
    /// Contact position in mm (the f_θ of the consistency loss).
    Position,
    /// Contact force in N (the g_ψ of the force experiments).
    Force,
}

/// Componentwise normalization scale for a target on a given sensor.
fn target_scale(target: TrainTarget, geom: &SensorGeometry) -> [f64; 3] {
    match target {
        TrainTarget::Position => {
            let r = geom.shell_radius_mm;
            [r, r, geom.cylinder_height_mm + r]
        }
        TrainTarget::Force => [FORCE_XY_MAX_N, FORCE_XY_MAX_N, FORCE_Z_MAX_N],
    }
}

/// One epoch of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean squared error over the epoch's training batches, in normalized
    /// target units.
    pub train_mse: f64,
    /// RMSE on the held-out split (or the training set when no split), in
    /// native units (mm or N).
    pub val_rmse: f64,
}

/// A regression net bundled with its target kind and normalization scale.
#[derive(Clone)]
pub struct TrainedEstimator {
    pub net: Estimator<f32>,
    pub target: TrainTarget,
    pub scale: [f64; 3],
    pub history: Vec<EpochStats>,
}

impl TrainedEstimator {
    /// Predictions in native units for every frame of `ds`, in dataset order.
    pub fn predict_dataset(&self, ds: &Dataset, batch_size: usize) -> Result<Vec<[f64; 3]>> {
        let set = load_frames(ds, false)?;
        let idx: Vec<usize> = (0..set.len()).collect();
        predict_with(&self.net, self.scale, &set, &idx, batch_size)
    }

    /// RMSE against the dataset's own labels, in native units.
    pub fn evaluate(&self, ds: &Dataset, batch_size: usize) -> Result<f64> {
        let set = load_frames(ds, false)?;
        let idx: Vec<usize> = (0..set.len()).collect();
        let labels = collect_labels(&set, &idx, self.target)?;
        let predictions = predict_with(&self.net, self.scale, &set, &idx, batch_size)?;
        match self.target {
            TrainTarget::Position => position_rmse(&predictions, &labels),
            TrainTarget::Force => force_rmse(&predictions, &labels),
        }
    }
}

fn predict_with(
    net: &Estimator<f32>,
    scale: [f64; 3],
    set: &LoadedDataset,
    idx: &[usize],
    batch_size: usize,
) -> Result<Vec<[f64; 3]>> {
    if batch_size == 0 {
        return Err(Error::Validation("batch_size must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size) {
        let mut g = Graph::new();
        let wired = net.insert(&mut g, false);
        let refs = g.constant(batch_references(set, chunk));
        let diffs = g.constant(batch_differences(set, chunk));
        let pred = net.forward(&mut g, &wired, refs, diffs)?;
        let values = g.value(pred);
        for row in 0..chunk.len() {
            out.push([
                values[[row, 0]] as f64 * scale[0],
                values[[row, 1]] as f64 * scale[1],
                values[[row, 2]] as f64 * scale[2],
            ]);
        }
    }
    Ok(out)
}

fn collect_labels(
    set: &LoadedDataset,
    idx: &[usize],
    target: TrainTarget,
) -> Result<Vec<[f64; 3]>> {
    idx.iter()
        .map(|&i| {
            let f = &set.frames[i];
            match target {
                TrainTarget::Position => Ok(f.position_mm),
                TrainTarget::Force => f.force_n.ok_or_else(|| {
                    Error::Validation(format!("frame {i} lacks the force label required here"))
                }),
            }
        })
        .collect()
}

fn select_target(target: TrainTarget) -> impl Fn(&LoadedFrame) -> [f64; 3] {
    move |f: &LoadedFrame| match target {
        TrainTarget::Position => f.position_mm,
        TrainTarget::Force => f.force_n.expect("force labels were validated up front"),
    }
}

/// Estimators learn a plain regression; standard first-moment decay rather
/// than the GAN-stabilized 0.5.
fn adam_config(lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: 0.9,
        ..AdamConfig::default()
    }
}

/// Core MSE loop shared by pretraining and fine-tuning: trains `net` on
/// `train_idx`, reporting per-epoch validation RMSE on `val_idx`.
#[allow(clippy::too_many_arguments)]
fn fit(
    net: &mut Estimator<f32>,
    set: &LoadedDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    target: TrainTarget,
    scale: [f64; 3],
    lr: f64,
    head_only: bool,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    let select = select_target(target);
    let val_labels = collect_labels(set, val_idx, target)?;

    // With head-only updates, gradients of every backbone tensor are zeroed
    // before the optimizer step; fresh zero moments then keep those tensors
    // exactly unchanged.
    let head_tensor: Vec<bool> = net
        .params()
        .tensors()
        .iter()
        .map(|t| ["fc1.", "fc2.", "out."].iter().any(|p| t.name.starts_with(p)))
        .collect();

    let mut adam = Adam::new(net.params(), adam_config(lr));
    let mut stream = BatchStream::new(train_idx.len(), mix_seed(config.seed, seed_tags::EST_STREAM));
    let steps_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs * steps_per_epoch) as u64;

    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        let mut sq_error_sum = 0.0f64;
        for _ in 0..steps_per_epoch {
            let local = stream.take_up_to(config.batch_size);
            let idx: Vec<usize> = local.iter().map(|&i| train_idx[i]).collect();

            let mut g = Graph::new();
            let wired = net.insert(&mut g, true);
            let refs = g.constant(batch_references(set, &idx));
            let diffs = g.constant(batch_differences(set, &idx));
            let targets = g.constant(batch_targets(set, &idx, scale, &select));
            let pred = net.forward(&mut g, &wired, refs, diffs)?;
            let d = g.sub(pred, targets);
            let sq = g.mul(d, d);
            let loss = g.mean_all(sq);

            let loss_value = g.scalar_value(loss).to_f64();
            if !loss_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at step {step}"
                )));
            }
            sq_error_sum += loss_value * idx.len() as f64;

            let mut grads = g.backward(loss);
            let mut grad_arrays = grads.for_vars(&wired.vars, &net.params().shapes());
            if head_only {
                for (grad, is_head) in grad_arrays.iter_mut().zip(&head_tensor) {
                    if !is_head {
                        grad.fill(0.0);
                    }
                }
            }
            adam.step(net.params_mut(), &grad_arrays, lr_scale(step, total_steps));
            step += 1;
        }

        let predictions = predict_with(net, scale, set, val_idx, config.batch_size)?;
        let val_rmse = match target {
            TrainTarget::Position => position_rmse(&predictions, &val_labels)?,
            TrainTarget::Force => force_rmse(&predictions, &val_labels)?,
        };
        history.push(EpochStats {
            epoch,
            train_mse: sq_error_sum / train_idx.len() as f64,
            val_rmse,
        });
    }
    Ok(history)
}

/// Trains a fresh estimator on the pooled datasets. A
/// `config.validation_fraction` share of the pool (deterministically chosen
/// from the seed) is held out for the per-epoch RMSE; with a zero fraction
/// the training set doubles as the validation set.
pub fn train_estimator(
    datasets: &[&Dataset],
    target: TrainTarget,
    config: &TrainConfig,
) -> Result<TrainedEstimator> {
    config.validate()?;
    let sets = datasets
        .iter()
        .map(|ds| load_frames(ds, false))
        .collect::<Result<Vec<_>>>()?;
    let set = pool_frames(sets)?;
    if set.frames.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let all: Vec<usize> = (0..set.len()).collect();
    collect_labels(&set, &all, target)?;

    let mut shuffled = all;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, seed_tags::EST_SPLIT));
    shuffled.shuffle(&mut rng);
    let n_val = (config.validation_fraction * set.len() as f64).floor() as usize;
    let (val_idx, train_idx) = shuffled.split_at(n_val);
    let val_idx = if val_idx.is_empty() { train_idx } else { val_idx };

    let scale = target_scale(target, &set.geometry);
    let mut net = Estimator::<f32>::new(
        config.estimator.clone(),
        mix_seed(config.seed, seed_tags::EST_INIT),
    );
    let history = fit(
        &mut net,
        &set,
        train_idx,
        val_idx,
        target,
        scale,
        config.lr_estimator,
        false,
        config,
    )?;
    Ok(TrainedEstimator {
        net,
        target,
        scale,
        history,
    })
}

/// Continues training on the first `k` frames of `samples` at a reduced
/// learning rate (`lr_estimator × finetune_lr_factor`), the small-budget
/// adaptation protocol. `k = 0` returns the model unchanged — the zero-shot
/// case. With `config.head_only_finetune` only the head layers move.
pub fn finetune_estimator(
    model: &TrainedEstimator,
    samples: &Dataset,
    k: usize,
    config: &TrainConfig,
) -> Result<TrainedEstimator> {
    config.validate()?;
    if k == 0 {
        return Ok(model.clone());
    }
    if k > samples.len() {
        return Err(Error::Validation(format!(
            "asked for {k} fine-tuning samples but the dataset holds {}",
            samples.len()
        )));
    }
    let mut set = load_frames(samples, false)?;
    set.frames.truncate(k);
    let idx: Vec<usize> = (0..k).collect();
    collect_labels(&set, &idx, model.target)?;

    let mut net = model.net.clone();
    let history = fit(
        &mut net,
        &set,
        &idx,
        &idx,
        model.target,
        model.scale,
        config.lr_estimator * config.finetune_lr_factor,
        config.head_only_finetune,
        config,
    )?;
    Ok(TrainedEstimator {
        net,
        target: model.target,
        scale: model.scale,
        history,
    })
}

#[cfg(test)]
mod tests;
