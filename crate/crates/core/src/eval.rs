//! Metrics and reports: displacement errors, velocity MSE, best-of-M
//! selection, probability calibration, and acceleration realism.
//!
//! All metrics run in denormalized physical units (feet, ft/s). Multi-mode
//! predictions are scored by the mode with the smallest final displacement
//! error; that same chosen mode then supplies ADE and (by default) MSE.
//! Aggregates are plain sums and counts, so merging partial results is
//! associative.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::court::{
    acceleration_profile, Location2D, Trajectory, VelocityProfile, FT_TO_M,
};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::model::{prediction_trajectories, ModePrediction};

const PREDICTIONS_FORMAT: &str = "courtcast.predictions.v1";

/// Number of 5%-wide calibration bins over [0, 1].
pub const CALIBRATION_BINS: usize = 20;

/// Percentiles reported in acceleration statistics.
pub const ACCEL_PERCENTILES: [f64; 4] = [50.0, 90.0, 99.0, 99.9];

/// Average and final displacement error between two location sequences of
/// equal length, in the input unit (feet here).
pub fn ade_fde(truth: &Trajectory, pred: &Trajectory) -> Result<(f64, f64)> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::LengthMismatch {
            context: "ade_fde",
            left: truth.len(),
            right: pred.len(),
        });
    }
    let mut sum = 0.0;
    let mut last = 0.0;
    for (t, p) in truth.locations.iter().zip(pred.locations.iter()) {
        last = t.distance(p);
        sum += last;
    }
    Ok((sum / truth.len() as f64, last))
}

/// Velocity mean squared error in physical units (ft^2/s^2); the same
/// formula as the trajectory loss, applied as a metric.
pub fn mse_metric(truth: &VelocityProfile, pred: &VelocityProfile) -> Result<f64> {
    crate::loss::mse_loss(truth, pred)
}

/// Metrics of the mode chosen by smallest FDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestOfM {
    pub chosen_mode: usize,
    pub ade: f64,
    pub fde: f64,
    pub mse: f64,
}

/// Integrates every mode from the anchor, picks the smallest-FDE mode
/// (ties to the lowest index), and reports that mode's metrics.
pub fn best_of_m(
    truth_locations: &Trajectory,
    prediction: &ModePrediction,
    anchor: Location2D,
) -> Result<BestOfM> {
    if prediction.modes.is_empty() {
        return Err(Error::contract("best_of_m requires at least one mode"));
    }
    let trajectories = prediction_trajectories(prediction, anchor)?;
    let mut chosen = 0usize;
    let mut chosen_ade = f64::INFINITY;
    let mut chosen_fde = f64::INFINITY;
    for (m, traj) in trajectories.iter().enumerate() {
        let (ade, fde) = ade_fde(truth_locations, traj)?;
        if fde < chosen_fde {
            chosen = m;
            chosen_fde = fde;
            chosen_ade = ade;
        }
    }
    let truth_vel = crate::court::velocities_from_locations(anchor, truth_locations)?;
    let mse = mse_metric(&truth_vel, &prediction.modes[chosen])?;
    Ok(BestOfM {
        chosen_mode: chosen,
        ade: chosen_ade,
        fde: chosen_fde,
        mse,
    })
}

/// Minimum over modes of the ADE; the early-stopping metric.
pub fn min_ade(
    truth_locations: &Trajectory,
    prediction: &ModePrediction,
    anchor: Location2D,
) -> Result<f64> {
    let trajectories = prediction_trajectories(prediction, anchor)?;
    let mut best = f64::INFINITY;
    for traj in &trajectories {
        let (ade, _) = ade_fde(truth_locations, traj)?;
        if ade < best {
            best = ade;
        }
    }
    Ok(best)
}

/// Which mode's velocities feed the aggregate MSE for multi-modal models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseAggregation {
    /// The smallest-FDE mode (same mode that supplies ADE/FDE).
    #[default]
    ChosenMode,
    /// The mode with the highest predicted probability.
    MostProbable,
}

/// Dataset-level accuracy aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub horizon: usize,
    pub modes: usize,
    pub sample_count: usize,
    pub ade_ft: f64,
    pub fde_ft: f64,
    pub mse_ft2s2: f64,
    /// Mean displacement error at each horizon step 1..=H, feet.
    pub per_horizon_ft: Vec<f64>,
}

/// One 5% calibration bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Absent when the bin is empty.
    pub mean_predicted: Option<f64>,
    pub empirical_frequency: Option<f64>,
}

/// Predicted-probability calibration against empirical winner frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
    pub total_entries: usize,
}

/// Bin index for a probability: `floor(p / 0.05)`, with p = 1 landing in
/// the final bin.
pub fn calibration_bin_index(p: f64) -> usize {
    ((p / 0.05).floor() as usize).min(CALIBRATION_BINS - 1)
}

/// Builds the calibration table from per-mode (predicted probability, won)
/// outcomes. Every mode of every sample contributes one entry.
pub fn calibration_from_outcomes(entries: &[(f64, bool)]) -> CalibrationTable {
    let mut sums = vec![(0usize, 0.0f64, 0usize); CALIBRATION_BINS]; // (count, prob sum, wins)
    for &(p, won) in entries {
        let b = calibration_bin_index(p);
        sums[b].0 += 1;
        sums[b].1 += p;
        if won {
            sums[b].2 += 1;
        }
    }
    let bins = sums
        .iter()
        .enumerate()
        .map(|(i, &(count, prob_sum, wins))| CalibrationBin {
            lo: i as f64 * 0.05,
            hi: (i + 1) as f64 * 0.05,
            count,
            mean_predicted: (count > 0).then(|| prob_sum / count as f64),
            empirical_frequency: (count > 0).then(|| wins as f64 / count as f64),
        })
        .collect();
    CalibrationTable {
        bins,
        total_entries: entries.len(),
    }
}

/// Calibration over an evaluation set: for every mode of every prediction,
/// bins its probability and marks whether it was the best-of-M winner.
pub fn calibration(items: &[(ModePrediction, Trajectory, Location2D)]) -> Result<CalibrationTable> {
    let mut entries = Vec::new();
    for (pred, truth, anchor) in items {
        if pred.num_modes() < 2 {
            return Err(Error::contract("calibration requires at least 2 modes"));
        }
        let chosen = best_of_m(truth, pred, *anchor)?.chosen_mode;
        for (m, &p) in pred.probs.iter().enumerate() {
            entries.push((p, m == chosen));
        }
    }
    Ok(calibration_from_outcomes(&entries))
}

/// Acceleration distribution summary, ft/s^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelStats {
    pub n: usize,
    pub max_fps2: f64,
    /// (percentile, value in ft/s^2) pairs, nearest-rank.
    pub percentiles_fps2: Vec<(f64, f64)>,
}

impl AccelStats {
    pub fn max_mps2(&self) -> f64 {
        self.max_fps2 * FT_TO_M
    }

    pub fn percentile_fps2(&self, pct: f64) -> Option<f64> {
        self.percentiles_fps2
            .iter()
            .find(|(p, _)| (*p - pct).abs() < 1e-9)
            .map(|(_, v)| *v)
    }
}

/// Nearest-rank percentiles plus the maximum over a set of acceleration
/// magnitudes.
pub fn acceleration_stats(mut values: Vec<f64>) -> AccelStats {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    let percentile = |pct: f64| -> f64 {
        if n == 0 {
            return f64::NAN;
        }
        let rank = ((pct / 100.0) * n as f64).ceil() as usize;
        values[rank.clamp(1, n) - 1]
    };
    AccelStats {
        n,
        max_fps2: values.last().copied().unwrap_or(f64::NAN),
        percentiles_fps2: ACCEL_PERCENTILES.iter().map(|&p| (p, percentile(p))).collect(),
    }
}

/// Acceleration magnitudes of a prediction's chosen mode, seeded by the
/// last observed history velocity.
pub fn predicted_accelerations(
    sample: &Sample,
    prediction: &ModePrediction,
    chosen_mode: usize,
) -> Result<Vec<f64>> {
    acceleration_profile(
        &prediction.modes[chosen_mode],
        sample.last_observed_velocity(),
    )
}

/// Ground-truth acceleration magnitudes, computed identically from the
/// target velocities.
pub fn truth_accelerations(sample: &Sample) -> Result<Vec<f64>> {
    acceleration_profile(&sample.target, sample.last_observed_velocity())
}

/// Acceleration realism comparison: ground truth vs each evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub ground_truth: AccelStats,
    pub models: BTreeMap<String, AccelStats>,
}

/// Everything `evaluate` produces for one model on one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metrics: MetricsReport,
    /// Present when the model emits at least two modes.
    pub calibration: Option<CalibrationTable>,
    pub model_accel: AccelStats,
    pub truth_accel: AccelStats,
}

/// Scores a model over a sample set. `predict` maps a chunk of samples to
/// physical-unit predictions; evaluation aggregates are order-independent
/// sums and counts.
pub fn evaluate<F>(
    samples: &[Sample],
    mut predict: F,
    model_id: &str,
    mse_aggregation: MseAggregation,
) -> Result<EvalResult>
where
    F: FnMut(&[Sample]) -> Result<Vec<ModePrediction>>,
{
    if samples.is_empty() {
        return Err(Error::contract("evaluation set must be non-empty"));
    }
    let horizon = samples[0].target.len();
    let mut modes_seen = 0usize;

    let mut ade_sum = 0.0;
    let mut fde_sum = 0.0;
    let mut mse_sum = 0.0;
    let mut per_h_sum = vec![0.0; horizon];
    let mut n = 0usize;
    let mut cal_entries: Vec<(f64, bool)> = Vec::new();
    let mut model_acc: Vec<f64> = Vec::new();
    let mut truth_acc: Vec<f64> = Vec::new();

    const CHUNK: usize = 512;
    for chunk in samples.chunks(CHUNK) {
        let preds = predict(chunk)?;
        if preds.len() != chunk.len() {
            return Err(Error::contract("predictor returned wrong number of predictions"));
        }
        for (sample, pred) in chunk.iter().zip(preds.iter()) {
            pred.validate()?;
            modes_seen = pred.num_modes();
            let best = best_of_m(&sample.target_locations, pred, sample.anchor_location)?;
            ade_sum += best.ade;
            fde_sum += best.fde;
            mse_sum += match mse_aggregation {
                MseAggregation::ChosenMode => best.mse,
                MseAggregation::MostProbable => {
                    let top = pred
                        .probs
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    let truth_vel = crate::court::velocities_from_locations(
                        sample.anchor_location,
                        &sample.target_locations,
                    )?;
                    mse_metric(&truth_vel, &pred.modes[top])?
                }
            };
            let chosen_traj =
                prediction_trajectories(pred, sample.anchor_location)?.swap_remove(best.chosen_mode);
            for (h, (t, p)) in sample
                .target_locations
                .locations
                .iter()
                .zip(chosen_traj.locations.iter())
                .enumerate()
            {
                per_h_sum[h] += t.distance(p);
            }
            if pred.num_modes() >= 2 {
                for (m, &p) in pred.probs.iter().enumerate() {
                    cal_entries.push((p, m == best.chosen_mode));
                }
            }
            model_acc.extend(predicted_accelerations(sample, pred, best.chosen_mode)?);
            truth_acc.extend(truth_accelerations(sample)?);
            n += 1;
        }
    }

    let metrics = MetricsReport {
        model_id: model_id.to_string(),
        horizon,
        modes: modes_seen,
        sample_count: n,
        ade_ft: ade_sum / n as f64,
        fde_ft: fde_sum / n as f64,
        mse_ft2s2: mse_sum / n as f64,
        per_horizon_ft: per_h_sum.iter().map(|s| s / n as f64).collect(),
    };
    let calibration = (!cal_entries.is_empty()).then(|| calibration_from_outcomes(&cal_entries));
    Ok(EvalResult {
        metrics,
        calibration,
        model_accel: acceleration_stats(model_acc),
        truth_accel: acceleration_stats(truth_acc),
    })
}

/// Marker roles for the entities drawn on a court plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRole {
    Attacker,
    Defender,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityMarker {
    pub role: EntityRole,
    pub player_id: Option<u64>,
    pub location: Location2D,
}

/// Everything needed to render or re-score one prediction: anchor, history,
/// ground truth, the M candidate paths with probabilities, and the anchor
/// snapshot of all entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_index: usize,
    pub player_of_interest_id: u64,
    pub anchor: Location2D,
    pub history: Vec<Location2D>,
    pub ground_truth: Vec<Location2D>,
    /// Denormalized predicted locations, one path per mode.
    pub modes: Vec<Vec<Location2D>>,
    pub probs: Vec<f64>,
    pub entities: Vec<EntityMarker>,
}

/// Builds a prediction record from a sample and its physical-unit
/// prediction.
pub fn prediction_record(
    sample_index: usize,
    sample: &Sample,
    prediction: &ModePrediction,
) -> Result<PredictionRecord> {
    let trajectories = prediction_trajectories(prediction, sample.anchor_location)?;
    let mut entities = Vec::with_capacity(11);
    entities.push(EntityMarker {
        role: EntityRole::Attacker,
        player_id: Some(sample.player_of_interest_id),
        location: *sample.history_self.last().expect("non-empty history"),
    });
    for (i, other) in sample.history_others.iter().enumerate() {
        entities.push(EntityMarker {
            role: if i < 4 { EntityRole::Attacker } else { EntityRole::Defender },
            player_id: None,
            location: *other.last().expect("non-empty history"),
        });
    }
    entities.push(EntityMarker {
        role: EntityRole::Ball,
        player_id: None,
        location: *sample.history_ball.last().expect("non-empty history"),
    });
    Ok(PredictionRecord {
        sample_index,
        player_of_interest_id: sample.player_of_interest_id,
        anchor: sample.anchor_location,
        history: sample.history_self.clone(),
        ground_truth: sample.target_locations.locations.clone(),
        modes: trajectories.into_iter().map(|t| t.locations).collect(),
        probs: prediction.probs.clone(),
        entities,
    })
}

/// Writes prediction records as a versioned JSON-lines file.
pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{PREDICTIONS_FORMAT}")?;
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let tag = lines.next().ok_or_else(|| Error::parse("empty predictions file"))??;
    if tag != PREDICTIONS_FORMAT {
        return Err(Error::Version {
            expected: PREDICTIONS_FORMAT.to_string(),
            found: tag,
        });
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
