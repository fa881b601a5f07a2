//! The sequence predictor and its straw-man baselines.
//!
//! The network encodes the (L+1)-step, 23-wide feature matrix with a stack
//! of LSTM layers and decodes the final hidden state through one fully
//! connected layer into `(2H + 1) * M` outputs: for each of the M modes, H
//! velocity pairs followed by one selection logit per mode. Probabilities
//! are the softmax of the M logits, so they always form a distribution.
//!
//! All trainable weights live in one flat `f64` vector addressed through
//! [`ParamLayout`]; that makes finite-difference gradient checking, l2
//! masking, and bit-exact checkpointing straightforward.

mod lstm;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::court::{
    locations_from_velocities, velocities_from_locations, Location2D, Trajectory, Velocity2D,
    VelocityProfile,
};
use crate::dataset::{FeatureLayout, Sample};
use crate::error::{Error, Result};
use crate::norm::{FeatureKind, NormalizationSpec};

const CHECKPOINT_FORMAT: &str = "courtcast.checkpoint.v1";

/// What the output velocity slots mean: future velocities (the main model)
/// or future locations (the location-head baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    #[default]
    Velocity,
    Location,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// History length L; the encoder consumes L+1 steps.
    pub history_len: usize,
    /// Prediction horizon H.
    pub horizon: usize,
    /// Number of modes M.
    pub modes: usize,
    pub recurrent_layers: usize,
    pub recurrent_width: usize,
    pub output_kind: OutputKind,
    pub feature_width: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// The architecture used for full-scale training: two recurrent layers
    /// of width 128 over 23-wide features.
    pub fn standard(history_len: usize, horizon: usize, modes: usize, seed: u64) -> Self {
        ModelConfig {
            history_len,
            horizon,
            modes,
            recurrent_layers: 2,
            recurrent_width: 128,
            output_kind: OutputKind::Velocity,
            feature_width: crate::dataset::FEATURE_WIDTH,
            seed,
        }
    }

    /// Total outputs per sample: M trajectories of 2H components plus M
    /// logits.
    pub fn output_size(&self) -> usize {
        (2 * self.horizon + 1) * self.modes
    }

    pub fn steps(&self) -> usize {
        self.history_len + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes < 1 {
            return Err(Error::contract("modes must be at least 1"));
        }
        if self.horizon < 1 || self.history_len < 1 {
            return Err(Error::contract("horizon and history length must be at least 1"));
        }
        if self.recurrent_layers < 1 || self.recurrent_width < 1 {
            return Err(Error::contract("recurrent stack must be non-trivial"));
        }
        if self.feature_width < 1 {
            return Err(Error::contract("feature width must be positive"));
        }
        Ok(())
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub is_bias: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Addressing scheme of the flat parameter vector for a given config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl ParamLayout {
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let w = cfg.recurrent_width;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize, is_bias: bool, offset: &mut usize| {
            tensors.push(TensorSpec {
                name,
                rows,
                cols,
                offset: *offset,
                is_bias,
            });
            *offset += rows * cols;
        };
        for layer in 0..cfg.recurrent_layers {
            let in_dim = if layer == 0 { cfg.feature_width } else { w };
            push(format!("lstm{layer}.wx"), in_dim, 4 * w, false, &mut offset);
            push(format!("lstm{layer}.wh"), w, 4 * w, false, &mut offset);
            push(format!("lstm{layer}.b"), 1, 4 * w, true, &mut offset);
        }
        push("decoder.w".to_string(), w, cfg.output_size(), false, &mut offset);
        push("decoder.b".to_string(), 1, cfg.output_size(), true, &mut offset);
        ParamLayout { tensors, total: offset }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn matrix<'a>(&self, name: &str, values: &'a [f64]) -> ArrayView2<'a, f64> {
        let spec = self.tensor(name).expect("tensor name");
        ArrayView2::from_shape((spec.rows, spec.cols), &values[spec.offset..spec.offset + spec.len()])
            .expect("contiguous view")
    }

    fn vector<'a>(&self, name: &str, values: &'a [f64]) -> ArrayView1<'a, f64> {
        let spec = self.tensor(name).expect("tensor name");
        ArrayView1::from_shape(spec.len(), &values[spec.offset..spec.offset + spec.len()])
            .expect("contiguous view")
    }

    /// True at positions belonging to weight matrices; false at biases.
    /// This is the l2-regularization mask.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for t in &self.tensors {
            if !t.is_bias {
                for slot in &mut mask[t.offset..t.offset + t.len()] {
                    *slot = true;
                }
            }
        }
        mask
    }
}

/// All trainable weights as one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub values: Vec<f64>,
}

impl Parameters {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Deterministic initialization: every weight matrix draws from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases start at zero. Each mode's
/// decoder columns get their own draws, so modes start diverse.
pub fn init_parameters(cfg: &ModelConfig, seed: u64) -> Parameters {
    let layout = ParamLayout::for_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; layout.total];
    for t in &layout.tensors {
        if t.is_bias {
            continue;
        }
        let bound = 1.0 / (t.rows as f64).sqrt();
        for v in &mut values[t.offset..t.offset + t.len()] {
            *v = rng.gen_range(-bound..bound);
        }
    }
    Parameters { values }
}

/// Forward activations kept for the backward pass.
pub struct ForwardPass {
    /// Raw outputs, shape (batch, (2H+1)M).
    pub outputs: Array2<f64>,
    layer_caches: Vec<lstm::LayerCache>,
    h_last: Array2<f64>,
    steps: usize,
}

/// Runs the network over a batch of normalized feature matrices, shape
/// `(batch, L+1, feature_width)`. Deterministic in (params, input); carries
/// no state across calls.
pub fn forward(params: &Parameters, cfg: &ModelConfig, features: &Array3<f64>) -> Result<ForwardPass> {
    cfg.validate()?;
    let layout = ParamLayout::for_config(cfg);
    if params.values.len() != layout.total {
        return Err(Error::ConfigMismatch(format!(
            "parameter vector has {} values, config requires {}",
            params.values.len(),
            layout.total
        )));
    }
    let shape = features.shape();
    if shape[1] != cfg.steps() || shape[2] != cfg.feature_width {
        return Err(Error::contract(format!(
            "feature shape ({}, {}) does not match config ({}, {})",
            shape[1],
            shape[2],
            cfg.steps(),
            cfg.feature_width
        )));
    }

    let mut xs: Vec<Array2<f64>> = (0..cfg.steps())
        .map(|t| features.index_axis(Axis(1), t).to_owned())
        .collect();

    let mut layer_caches = Vec::with_capacity(cfg.recurrent_layers);
    for layer in 0..cfg.recurrent_layers {
        let lp = lstm::LayerParams {
            wx: layout.matrix(&format!("lstm{layer}.wx"), &params.values),
            wh: layout.matrix(&format!("lstm{layer}.wh"), &params.values),
            b: layout.vector(&format!("lstm{layer}.b"), &params.values),
        };
        let (hs, cache) = lstm::lstm_layer_forward(&lp, &xs);
        layer_caches.push(cache);
        xs = hs;
    }
    let h_last = xs.last().expect("at least one step").clone();

    let wd = layout.matrix("decoder.w", &params.values);
    let bd = layout.vector("decoder.b", &params.values);
    let mut outputs = h_last.dot(&wd);
    outputs += &bd;

    Ok(ForwardPass {
        outputs,
        layer_caches,
        h_last,
        steps: cfg.steps(),
    })
}

/// Gradient of a scalar loss with respect to every parameter, given the
/// gradient on the raw outputs. Returns a flat vector in layout order.
pub fn backward(
    params: &Parameters,
    cfg: &ModelConfig,
    pass: &ForwardPass,
    grad_outputs: &Array2<f64>,
) -> Result<Vec<f64>> {
    let layout = ParamLayout::for_config(cfg);
    let batch = pass.outputs.nrows();
    if grad_outputs.shape() != pass.outputs.shape() {
        return Err(Error::contract("output gradient shape mismatch"));
    }
    let mut grad = vec![0.0; layout.total];

    let wd = layout.matrix("decoder.w", &params.values);
    let dwd = pass.h_last.t().dot(grad_outputs);
    let dbd = grad_outputs.sum_axis(Axis(0));
    let dh_last = grad_outputs.dot(&wd.t());

    let write = |grad: &mut [f64], name: &str, data: &[f64]| {
        let spec = layout.tensor(name).expect("tensor name");
        grad[spec.offset..spec.offset + spec.len()].copy_from_slice(data);
    };
    write(&mut grad, "decoder.w", dwd.as_slice().expect("contiguous"));
    write(&mut grad, "decoder.b", dbd.as_slice().expect("contiguous"));

    // External hidden-state gradients for the top layer: only the final
    // step feeds the decoder.
    let width = cfg.recurrent_width;
    let mut dh_ext: Vec<Array2<f64>> = (0..pass.steps)
        .map(|_| Array2::zeros((batch, width)))
        .collect();
    dh_ext[pass.steps - 1] = dh_last;

    for layer in (0..cfg.recurrent_layers).rev() {
        let lp = lstm::LayerParams {
            wx: layout.matrix(&format!("lstm{layer}.wx"), &params.values),
            wh: layout.matrix(&format!("lstm{layer}.wh"), &params.values),
            b: layout.vector(&format!("lstm{layer}.b"), &params.values),
        };
        let grads = lstm::lstm_layer_backward(&lp, &pass.layer_caches[layer], &dh_ext);
        write(
            &mut grad,
            &format!("lstm{layer}.wx"),
            grads.dwx.as_slice().expect("contiguous"),
        );
        write(
            &mut grad,
            &format!("lstm{layer}.wh"),
            grads.dwh.as_slice().expect("contiguous"),
        );
        write(
            &mut grad,
            &format!("lstm{layer}.b"),
            grads.db.as_slice().expect("contiguous"),
        );
        dh_ext = grads.dxs;
    }
    Ok(grad)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// M candidate velocity profiles plus their selection probabilities.
/// Unit-agnostic: the network emits normalized profiles, evaluation works
/// in physical ft/s after [`denormalize_prediction`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModePrediction {
    pub modes: Vec<VelocityProfile>,
    pub probs: Vec<f64>,
}

impl ModePrediction {
    pub fn new(modes: Vec<VelocityProfile>, probs: Vec<f64>) -> Self {
        ModePrediction { modes, probs }
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.len() != self.probs.len() || self.modes.is_empty() {
            return Err(Error::contract("modes and probabilities must pair up"));
        }
        if self.probs.iter().any(|p| *p < 0.0) {
            return Err(Error::contract("probabilities must be non-negative"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Splits one output row into the per-mode velocity profiles (in the units
/// the row is in, i.e. normalized) and softmax probabilities.
pub fn mode_prediction_from_row(row: &[f64], cfg: &ModelConfig, dt: f64) -> Result<ModePrediction> {
    if row.len() != cfg.output_size() {
        return Err(Error::contract(format!(
            "output row has {} values, config requires {}",
            row.len(),
            cfg.output_size()
        )));
    }
    let span = 2 * cfg.horizon;
    let mut modes = Vec::with_capacity(cfg.modes);
    for m in 0..cfg.modes {
        modes.push(VelocityProfile::from_flat(&row[m * span..(m + 1) * span], dt)?);
    }
    let probs = softmax(&row[cfg.modes * span..]);
    Ok(ModePrediction::new(modes, probs))
}

/// Converts a normalized-unit prediction into physical ft/s.
pub fn denormalize_prediction(pred: &ModePrediction, norm: &NormalizationSpec) -> ModePrediction {
    let modes = pred
        .modes
        .iter()
        .map(|p| {
            VelocityProfile::new(
                p.velocities
                    .iter()
                    .map(|v| {
                        Velocity2D::new(
                            norm.denormalize(v.vx, FeatureKind::Velocity),
                            norm.denormalize(v.vy, FeatureKind::Velocity),
                        )
                    })
                    .collect(),
                p.dt,
            )
        })
        .collect();
    ModePrediction::new(modes, pred.probs.clone())
}

/// M candidate trajectories (absolute locations) from the location head.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationModePrediction {
    pub modes: Vec<Trajectory>,
    pub probs: Vec<f64>,
}

/// Splits one location-head output row into physical trajectories.
pub fn location_prediction_from_row(
    row: &[f64],
    cfg: &ModelConfig,
    dt: f64,
    norm: &NormalizationSpec,
) -> Result<LocationModePrediction> {
    if cfg.output_kind != OutputKind::Location {
        return Err(Error::ConfigMismatch(
            "location_prediction_from_row requires a location-output config".to_string(),
        ));
    }
    if row.len() != cfg.output_size() {
        return Err(Error::contract("output row length mismatch"));
    }
    let span = 2 * cfg.horizon;
    let mut modes = Vec::with_capacity(cfg.modes);
    for m in 0..cfg.modes {
        let locations = row[m * span..(m + 1) * span]
            .chunks_exact(2)
            .map(|c| {
                Location2D::new(
                    norm.denormalize(c[0], FeatureKind::LocationX),
                    norm.denormalize(c[1], FeatureKind::LocationY),
                )
            })
            .collect();
        modes.push(Trajectory::new(locations, 0, dt));
    }
    let probs = softmax(&row[cfg.modes * span..]);
    Ok(LocationModePrediction { modes, probs })
}

/// Derives the velocity-profile view of a location prediction so that
/// velocity metrics apply to location-output models too.
pub fn location_to_velocity_prediction(
    pred: &LocationModePrediction,
    anchor: Location2D,
) -> Result<ModePrediction> {
    let modes = pred
        .modes
        .iter()
        .map(|t| velocities_from_locations(anchor, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModePrediction::new(modes, pred.probs.clone()))
}

/// Constant-location baseline: the player stays put. Always a single mode
/// of zero velocities with probability 1.
pub fn predict_cl(sample: &Sample) -> ModePrediction {
    let h = sample.target.len();
    ModePrediction::new(
        vec![VelocityProfile::new(vec![Velocity2D::zero(); h], sample.target.dt)],
        vec![1.0],
    )
}

/// Constant-velocity baseline: the last observed velocity repeats over the
/// whole horizon.
pub fn predict_cv(sample: &Sample) -> Result<ModePrediction> {
    if sample.history_self.len() < 2 {
        return Err(Error::contract("constant-velocity baseline needs at least 2 history steps"));
    }
    let v = sample.last_observed_velocity();
    let h = sample.target.len();
    Ok(ModePrediction::new(
        vec![VelocityProfile::new(vec![v; h], sample.target.dt)],
        vec![1.0],
    ))
}

/// Integrates a (physical-unit) prediction into candidate trajectories.
pub fn prediction_trajectories(pred: &ModePrediction, anchor: Location2D) -> Result<Vec<Trajectory>> {
    pred.modes
        .iter()
        .map(|m| locations_from_velocities(anchor, m))
        .collect()
}

/// Versioned checkpoint container: everything needed to reload and run a
/// trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    pub feature_layout: FeatureLayout,
    pub norm: NormalizationSpec,
    pub parameters: Vec<f64>,
    pub provenance: Provenance,
}

/// Training provenance recorded inside every checkpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: BTreeMap<String, u64>,
    pub trained_epochs: usize,
    pub best_epoch: Option<usize>,
    pub loss: Option<crate::loss::LossConfig>,
    /// Epsilon actually used at the last trained epoch.
    pub final_epsilon: Option<f64>,
    pub base_checkpoint_hash: Option<String>,
    pub config_echo: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        model: ModelConfig,
        feature_layout: FeatureLayout,
        norm: NormalizationSpec,
        params: &Parameters,
        provenance: Provenance,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model,
            feature_layout,
            norm,
            parameters: params.values.clone(),
            provenance,
        }
    }

    pub fn parameters(&self) -> Parameters {
        Parameters {
            values: self.parameters.clone(),
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string_pretty(checkpoint)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if checkpoint.format != CHECKPOINT_FORMAT {
        return Err(Error::Version {
            expected: CHECKPOINT_FORMAT.to_string(),
            found: checkpoint.format,
        });
    }
    let layout = ParamLayout::for_config(&checkpoint.model);
    if checkpoint.parameters.len() != layout.total {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint has {} parameters, config requires {}",
            checkpoint.parameters.len(),
            layout.total
        )));
    }
    Ok(checkpoint)
}

/// FNV-1a over the parameter bit patterns; used to tie fine-tuned
/// checkpoints back to their base model.
pub fn params_hash(values: &[f64]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::court::Location2D;
    use approx::assert_abs_diff_eq;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            history_len: 3,
            horizon: 2,
            modes: 2,
            recurrent_layers: 2,
            recurrent_width: 4,
            output_kind: OutputKind::Velocity,
            feature_width: 5,
            seed: 1,
        }
    }

    fn random_features(cfg: &ModelConfig, batch: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((batch, cfg.steps(), cfg.feature_width), |_| {
            rng.gen_range(-1.0..1.0)
        })
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let cfg = ModelConfig::standard(10, 10, 4, 0);
        let layout = ParamLayout::for_config(&cfg);
        let w = 128usize;
        let o = (2 * 10 + 1) * 4;
        let expected = (4 * w * (23 + w) + 4 * w) + (4 * w * (w + w) + 4 * w) + (w * o + o);
        assert_eq!(layout.total, expected);
        assert_eq!(init_parameters(&cfg, 0).len(), expected);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = tiny_config();
        let a = init_parameters(&cfg, 7);
        let b = init_parameters(&cfg, 7);
        let c = init_parameters(&cfg, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.all_finite());
    }

    #[test]
    fn forward_is_deterministic_and_shaped() {
        let cfg = tiny_config();
        let params = init_parameters(&cfg, 3);
        let features = random_features(&cfg, 4, 9);
        let p1 = forward(&params, &cfg, &features).unwrap();
        let p2 = forward(&params, &cfg, &features).unwrap();
        assert_eq!(p1.outputs, p2.outputs);
        assert_eq!(p1.outputs.shape(), &[4, cfg.output_size()]);
        assert_eq!(cfg.output_size(), (2 * 2 + 1) * 2);

        let h10_m4 = ModelConfig {
            horizon: 10,
            modes: 4,
            ..cfg
        };
        assert_eq!(h10_m4.output_size(), 84);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let cfg = tiny_config();
        let params = init_parameters(&cfg, 3);
        let bad = Array3::<f64>::zeros((2, cfg.steps() + 1, cfg.feature_width));
        assert!(forward(&params, &cfg, &bad).is_err());
    }

    #[test]
    fn single_mode_probability_is_one() {
        let cfg = ModelConfig { modes: 1, ..tiny_config() };
        let params = init_parameters(&cfg, 3);
        let features = random_features(&cfg, 3, 5);
        let pass = forward(&params, &cfg, &features).unwrap();
        for row in pass.outputs.rows() {
            let pred = mode_prediction_from_row(row.as_slice().unwrap(), &cfg, 0.12).unwrap();
            assert_eq!(pred.probs, vec![1.0]);
            pred.validate().unwrap();
        }
    }

    #[test]
    fn probabilities_form_distribution() {
        let cfg = tiny_config();
        let params = init_parameters(&cfg, 3);
        let features = random_features(&cfg, 8, 5);
        let pass = forward(&params, &cfg, &features).unwrap();
        for row in pass.outputs.rows() {
            let pred = mode_prediction_from_row(row.as_slice().unwrap(), &cfg, 0.12).unwrap();
            pred.validate().unwrap();
        }
    }

    /// Central-difference check of the full network gradient on a scalar
    /// loss (sum of squared outputs), per parameter.
    #[test]
    fn backward_matches_finite_differences() {
        let cfg = tiny_config();
        let mut params = init_parameters(&cfg, 13);
        let features = random_features(&cfg, 3, 17);

        let loss_of = |p: &Parameters| -> f64 {
            let pass = forward(p, &cfg, &features).unwrap();
            pass.outputs.iter().map(|v| v * v).sum::<f64>()
        };

        let pass = forward(&params, &cfg, &features).unwrap();
        let grad_out = pass.outputs.mapv(|v| 2.0 * v);
        let analytic = backward(&params, &cfg, &pass, &grad_out).unwrap();

        let step = 1e-6;
        for idx in (0..params.len()).step_by(7) {
            let orig = params.values[idx];
            params.values[idx] = orig + step;
            let plus = loss_of(&params);
            params.values[idx] = orig - step;
            let minus = loss_of(&params);
            params.values[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let diff = (analytic[idx] - numeric).abs();
            assert!(
                diff <= 1e-7 + 1e-5 * analytic[idx].abs().max(numeric.abs()),
                "param {idx}: analytic {} vs numeric {}",
                analytic[idx],
                numeric
            );
        }
    }

    #[test]
    fn baselines_are_trivial_modes() {
        use crate::court::Trajectory;
        let dt = 0.12;
        let history: Vec<Location2D> = (0..11)
            .map(|i| Location2D::new(10.0 + 0.6 * i as f64, 20.0))
            .collect();
        let sample = Sample {
            player_of_interest_id: 1,
            history_self: history.clone(),
            history_others: vec![vec![Location2D::new(0.0, 0.0); 11]; 9],
            history_ball: vec![Location2D::new(0.0, 0.0); 11],
            shot_clock_s: 14.0,
            target: VelocityProfile::new(vec![Velocity2D::new(5.0, 0.0); 4], dt),
            target_locations: Trajectory::new(
                (1..=4)
                    .map(|h| Location2D::new(history[10].x + 0.6 * h as f64, 20.0))
                    .collect(),
                10,
                dt,
            ),
            anchor_location: history[10],
            possession_key: "g:0".to_string(),
        };

        let cl = predict_cl(&sample);
        assert_eq!(cl.probs, vec![1.0]);
        assert!(cl.modes[0].velocities.iter().all(|v| v.norm() == 0.0));

        let cv = predict_cv(&sample).unwrap();
        assert_eq!(cv.probs, vec![1.0]);
        for v in &cv.modes[0].velocities {
            assert_abs_diff_eq!(v.vx, 5.0, epsilon = 1e-9);
            assert_abs_diff_eq!(v.vy, 0.0, epsilon = 1e-9);
        }
        // Ground truth continues at the same velocity: prediction is exact.
        for (a, b) in cv.modes[0].velocities.iter().zip(sample.target.velocities.iter()) {
            assert_abs_diff_eq!(a.vx, b.vx, epsilon = 1e-9);
            assert_abs_diff_eq!(a.vy, b.vy, epsilon = 1e-9);
        }
    }

    #[test]
    fn location_round_trip_consistency() {
        let cfg = ModelConfig {
            output_kind: OutputKind::Location,
            modes: 1,
            ..tiny_config()
        };
        assert_eq!(
            ModelConfig {
                horizon: 10,
                ..cfg
            }
            .output_size(),
            21
        );
        let params = init_parameters(&cfg, 3);
        let features = random_features(&cfg, 2, 21);
        let pass = forward(&params, &cfg, &features).unwrap();
        let norm = NormalizationSpec::default();
        let anchor = Location2D::new(50.0, 25.0);
        for row in pass.outputs.rows() {
            let loc_pred =
                location_prediction_from_row(row.as_slice().unwrap(), &cfg, 0.12, &norm).unwrap();
            let vel_pred = location_to_velocity_prediction(&loc_pred, anchor).unwrap();
            let back = prediction_trajectories(&vel_pred, anchor).unwrap();
            for (a, b) in loc_pred.modes[0].locations.iter().zip(back[0].locations.iter()) {
                assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-9);
                assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = tiny_config();
        let params = init_parameters(&cfg, 99);
        let ckpt = Checkpoint::new(
            cfg,
            FeatureLayout::new(cfg.history_len),
            NormalizationSpec::default(),
            &params,
            Provenance::default(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.parameters.iter().zip(params.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
