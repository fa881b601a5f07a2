//! Training loops: Adam with l2 regularization on the weight matrices,
//! per-epoch relaxation annealing, early stopping on a validation carve-out,
//! and warm-started per-player fine-tuning.
//!
//! Everything is single-threaded and seeded, so a run is bitwise
//! reproducible given its configuration.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_batches, Batch, DatasetSplit, FeatureLayout, Sample};
use crate::error::{Error, Result};
use crate::eval::min_ade;
use crate::loss::{epsilon_at_epoch, mtp_loss_grad_flat, LossConfig};
use crate::model::{
    backward, denormalize_prediction, forward, init_parameters, mode_prediction_from_row,
    params_hash, Checkpoint, ModelConfig, OutputKind, ParamLayout, Parameters,
};
use crate::norm::NormalizationSpec;

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the `lambda * ||w||^2` penalty over weight matrices.
    pub l2_weight: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub loss: LossConfig,
    pub seed: u64,
    /// Fraction of training possessions carved out for validation.
    pub validation_fraction: f64,
}

impl TrainConfig {
    /// Hyperparameters for training the base model on all players.
    pub fn base(loss: LossConfig) -> Self {
        TrainConfig {
            batch_size: 1024,
            learning_rate: 5e-4,
            l2_weight: 0.001,
            max_epochs: 30,
            patience: 5,
            loss,
            seed: 0,
            validation_fraction: 0.1,
        }
    }

    /// Hyperparameters for fine-tuning on one player's data.
    pub fn finetune(loss: LossConfig) -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            ..TrainConfig::base(loss)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_weight >= 0.0) {
            return Err(Error::contract("learning rate and l2 weight must be valid"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::contract("validation fraction must lie in (0, 0.5)"));
        }
        self.loss.validate()
    }
}

/// One epoch of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
    pub epsilon: f64,
    /// Wall-clock seconds; kept out of persisted artifacts (and equality)
    /// so that reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_loss == other.train_loss
            && self.validation_metric == other.validation_metric
            && self.epsilon == other.epsilon
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch that actually ran.
    pub stopped_epoch: Option<usize>,
    pub best_epoch: Option<usize>,
    pub best_validation: Option<f64>,
}

/// Patience-based stopping on a to-be-minimized metric.
#[derive(Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    bad_epochs: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, bool) {
        if metric < self.best {
            self.best = metric;
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
            (true, false)
        } else {
            self.bad_epochs += 1;
            (false, self.bad_epochs >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best_epoch.map(|_| self.best)
    }
}

/// Adam with the standard published defaults (0.9 / 0.999 moment decay,
/// 1e-8 stabilizer).
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub stabilizer: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            stabilizer: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.stabilizer);
        }
    }
}

/// Splits training samples into (train, validation) at possession
/// granularity, deterministically in the seed.
fn carve_validation(samples: &[Sample], fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let keys: BTreeSet<&str> = samples.iter().map(|s| s.possession_key.as_str()).collect();
    let mut keys: Vec<&str> = keys.into_iter().collect();
    if keys.len() < 2 {
        // Too few possessions to carve; validate on the training data.
        return (samples.to_vec(), samples.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x76616c69646174); // "validat"
    keys.shuffle(&mut rng);
    let n_val = (((keys.len() as f64) * fraction).round() as usize).clamp(1, keys.len() - 1);
    let val_keys: BTreeSet<&str> = keys[..n_val].iter().copied().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for s in samples {
        if val_keys.contains(s.possession_key.as_str()) {
            val.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    (train, val)
}

/// Per-batch loss and output gradient in network units.
fn batch_loss_and_grad(
    outputs: &Array2<f64>,
    targets: &Array2<f64>,
    loss_cfg: &LossConfig,
    epsilon: f64,
    model_cfg: &ModelConfig,
) -> Result<(f64, Array2<f64>)> {
    let batch = outputs.nrows();
    let span = 2 * model_cfg.horizon;
    let mut grad = Array2::<f64>::zeros(outputs.raw_dim());
    let mut total = 0.0;
    let scale = 1.0 / batch as f64;

    for row_idx in 0..batch {
        let row = outputs.row(row_idx);
        let row = row.as_slice().expect("contiguous row");
        let truth = targets.row(row_idx);
        let truth = truth.as_slice().expect("contiguous row");
        let modes: Vec<&[f64]> = (0..model_cfg.modes)
            .map(|m| &row[m * span..(m + 1) * span])
            .collect();
        let probs = crate::model::softmax(&row[model_cfg.modes * span..]);
        let (breakdown, grad_modes, grad_logits) =
            mtp_loss_grad_flat(truth, &modes, &probs, loss_cfg, epsilon)?;
        total += breakdown.total;
        for (m, gm) in grad_modes.iter().enumerate() {
            for (j, g) in gm.iter().enumerate() {
                grad[[row_idx, m * span + j]] = g * scale;
            }
        }
        for (k, g) in grad_logits.iter().enumerate() {
            grad[[row_idx, model_cfg.modes * span + k]] = g * scale;
        }
    }
    Ok((total / batch as f64, grad))
}

fn batch_targets<'a>(batch: &'a Batch, kind: OutputKind) -> &'a Array2<f64> {
    match kind {
        OutputKind::Velocity => &batch.velocity_targets,
        OutputKind::Location => &batch.location_targets,
    }
}

/// Mean best-over-modes ADE on a sample set, in feet. Used as the
/// validation early-stopping metric.
fn validation_metric(
    samples: &[Sample],
    params: &Parameters,
    model_cfg: &ModelConfig,
    layout: &FeatureLayout,
    norm: &NormalizationSpec,
    batch_size: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::INFINITY);
    }
    let batches = make_batches(samples, layout, norm, batch_size, 0, u64::MAX)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for batch in &batches {
        let pass = forward(params, model_cfg, &batch.features)?;
        for (row_idx, &sample_idx) in batch.indices.iter().enumerate() {
            let sample = &samples[sample_idx];
            let row = pass.outputs.row(row_idx);
            let pred = mode_prediction_from_row(
                row.as_slice().expect("contiguous row"),
                model_cfg,
                sample.target.dt,
            )?;
            let physical = match model_cfg.output_kind {
                OutputKind::Velocity => denormalize_prediction(&pred, norm),
                OutputKind::Location => {
                    let loc = crate::model::location_prediction_from_row(
                        row.as_slice().expect("contiguous row"),
                        model_cfg,
                        sample.target.dt,
                        norm,
                    )?;
                    crate::model::location_to_velocity_prediction(&loc, sample.anchor_location)?
                }
            };
            sum += min_ade(&sample.target_locations, &physical, sample.anchor_location)?;
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

struct LoopOutcome {
    params: Parameters,
    report: TrainReport,
    final_epsilon: Option<f64>,
}

/// Shared epoch loop for base training and fine-tuning.
fn run_training_loop(
    start_params: Parameters,
    train_samples: &[Sample],
    val_samples: &[Sample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    norm: &NormalizationSpec,
) -> Result<LoopOutcome> {
    let layout = FeatureLayout::new(model_cfg.history_len);
    let param_layout = ParamLayout::for_config(model_cfg);
    let weight_mask = param_layout.weight_mask();

    let mut params = start_params;
    let mut adam = Adam::new(params.len());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_params = params.clone();
    let mut report = TrainReport::default();
    let mut final_epsilon = None;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        // A single mode has no off-winner weights to relax.
        let epsilon = if model_cfg.modes == 1 {
            0.0
        } else {
            epsilon_at_epoch(&cfg.loss, epoch)
        };
        final_epsilon = Some(epsilon);

        let batches = make_batches(train_samples, &layout, norm, cfg.batch_size, cfg.seed, epoch as u64)?;
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let pass = forward(&params, model_cfg, &batch.features)?;
            let targets = batch_targets(batch, model_cfg.output_kind);
            let (batch_loss, grad_outputs) =
                batch_loss_and_grad(&pass.outputs, targets, &cfg.loss, epsilon, model_cfg)?;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch} batch {batch_idx}: loss {batch_loss}; param norm {:.3e}",
                    params.values.iter().map(|v| v * v).sum::<f64>().sqrt()
                )));
            }
            loss_sum += batch_loss * batch.indices.len() as f64;
            loss_n += batch.indices.len();

            let mut grad = backward(&params, model_cfg, &pass, &grad_outputs)?;
            if cfg.l2_weight > 0.0 {
                for (i, g) in grad.iter_mut().enumerate() {
                    if weight_mask[i] {
                        *g += 2.0 * cfg.l2_weight * params.values[i];
                    }
                }
            }
            adam.step(&mut params.values, &grad, cfg.learning_rate);
            if !params.all_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch} batch {batch_idx}: non-finite parameters after update"
                )));
            }
        }

        let metric = validation_metric(val_samples, &params, model_cfg, &layout, norm, cfg.batch_size)?;
        let (improved, stop) = stopper.observe(epoch, metric);
        if improved {
            best_params = params.clone();
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / loss_n.max(1) as f64,
            validation_metric: metric,
            epsilon,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
        report.stopped_epoch = Some(epoch);
        if stop {
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    report.best_validation = stopper.best_metric();

    let params = if report.best_epoch.is_some() { best_params } else { params };
    Ok(LoopOutcome {
        params,
        report,
        final_epsilon,
    })
}

/// Trains a model from scratch on the split's training side. Returns the
/// parameters of the best validation epoch and the per-epoch log.
pub fn train(
    dataset: &DatasetSplit,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    norm: &NormalizationSpec,
) -> Result<(Parameters, TrainReport)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if cfg.loss.modes != model_cfg.modes {
        return Err(Error::ConfigMismatch(format!(
            "loss expects {} modes, model emits {}",
            cfg.loss.modes, model_cfg.modes
        )));
    }
    if dataset.train.is_empty() {
        return Err(Error::contract("training set must be non-empty"));
    }
    let params = init_parameters(model_cfg, model_cfg.seed);
    if cfg.max_epochs == 0 {
        return Ok((params, TrainReport::default()));
    }
    let (train_sub, val) = carve_validation(&dataset.train, cfg.validation_fraction, cfg.seed);
    let outcome = run_training_loop(params, &train_sub, &val, model_cfg, cfg, norm)?;
    Ok((outcome.params, outcome.report))
}

/// Result of fine-tuning, including the provenance fields that tie the new
/// model to its base checkpoint.
pub struct FinetuneOutcome {
    pub params: Parameters,
    pub report: TrainReport,
    pub base_hash: String,
    pub final_epsilon: Option<f64>,
}

/// Warm-starts from a base checkpoint and continues training on one
/// player's samples with the fine-tune schedule.
pub fn finetune(
    base: &Checkpoint,
    player_samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let model_cfg = base.model;
    model_cfg.validate()?;
    if cfg.loss.modes != model_cfg.modes {
        return Err(Error::ConfigMismatch(format!(
            "loss expects {} modes, base model emits {}",
            cfg.loss.modes, model_cfg.modes
        )));
    }
    let layout = ParamLayout::for_config(&model_cfg);
    if base.parameters.len() != layout.total {
        return Err(Error::ConfigMismatch(
            "base checkpoint parameter count does not match its config".to_string(),
        ));
    }
    if player_samples.is_empty() {
        return Err(Error::contract("fine-tuning set must be non-empty"));
    }
    let base_hash = params_hash(&base.parameters);
    let params = base.parameters();
    if cfg.max_epochs == 0 {
        return Ok(FinetuneOutcome {
            params,
            report: TrainReport::default(),
            base_hash,
            final_epsilon: None,
        });
    }
    let (train_sub, val) = carve_validation(player_samples, cfg.validation_fraction, cfg.seed);
    let outcome = run_training_loop(params, &train_sub, &val, &model_cfg, cfg, &base.norm)?;
    Ok(FinetuneOutcome {
        params: outcome.params,
        report: outcome.report,
        base_hash,
        final_epsilon: outcome.final_epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopper_rule_trace() {
        // Metric sequence 5, 4, 4.5, 4.6 with patience 2: stop after the
        // fourth epoch, best at epoch 1.
        let mut s = EarlyStopper::new(2);
        assert_eq!(s.observe(0, 5.0), (true, false));
        assert_eq!(s.observe(1, 4.0), (true, false));
        assert_eq!(s.observe(2, 4.5), (false, false));
        assert_eq!(s.observe(3, 4.6), (false, true));
        assert_eq!(s.best_epoch(), Some(1));
        assert_eq!(s.best_metric(), Some(4.0));
    }

    #[test]
    fn adam_with_pure_l2_shrinks_parameters() {
        // With zero data gradient the l2 term alone must strictly shrink
        // the parameter norm on every step.
        let mut params = vec![1.0, -2.0, 0.5, 3.0];
        let lambda = 0.001;
        let mut adam = Adam::new(params.len());
        let mut prev_norm: f64 = params.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..25 {
            let grad: Vec<f64> = params.iter().map(|w| 2.0 * lambda * w).collect();
            adam.step(&mut params, &grad, 1e-3);
            let norm = params.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < prev_norm, "norm {norm} did not shrink from {prev_norm}");
            prev_norm = norm;
        }
    }

    #[test]
    fn adam_moves_toward_quadratic_minimum() {
        // Minimize (w - 3)^2; Adam should approach 3.
        let mut params = vec![0.0];
        let mut adam = Adam::new(1);
        for _ in 0..2000 {
            let grad = vec![2.0 * (params[0] - 3.0)];
            adam.step(&mut params, &grad, 0.01);
        }
        assert!((params[0] - 3.0).abs() < 0.05, "converged to {}", params[0]);
    }
}
