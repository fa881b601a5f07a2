//! Multi-mode trajectory training loss.
//!
//! For a ground-truth velocity profile and M predicted profiles with
//! selection probabilities, the loss weights each mode by a relaxed
//! Kronecker delta centered on the winning mode (the one closest to the
//! truth under a configurable distance) and sums a classification term and
//! a trajectory term:
//!
//! ```text
//! total = sum_m delta_eps(m == m*) * ( -log p_m + alpha * mse(truth, mode_m) )
//! ```
//!
//! The classification term is cross-entropy: the negative log of the
//! winning mode's probability. Minimizing it drives the winner's
//! probability toward 1 and, through the softmax, the remaining modes
//! toward 0.
//!
//! The relaxation weight `epsilon` starts positive so that badly
//! initialized modes still receive gradient (otherwise they never win the
//! argmin and never improve), and is annealed to 0 over the first epochs.

use serde::{Deserialize, Serialize};

use crate::court::VelocityProfile;
use crate::error::{Error, Result};
use crate::model::ModePrediction;

/// Probabilities below this are clamped before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Distance used to pick the winning mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Mean squared error over all velocity components.
    Mse,
    /// Norm of the summed velocity errors; proportional to the final
    /// displacement error (`fde = dt * distance`).
    #[serde(alias = "l")]
    Displacement,
    /// Norm of the error of the final velocity (the predicted "heading").
    #[serde(alias = "v")]
    FinalVelocity,
}

impl DistanceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(DistanceKind::Mse),
            "l" | "displacement" => Ok(DistanceKind::Displacement),
            "v" | "final_velocity" => Ok(DistanceKind::FinalVelocity),
            other => Err(Error::contract(format!("unknown distance kind `{other}`"))),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            DistanceKind::Mse => "mse",
            DistanceKind::Displacement => "l",
            DistanceKind::FinalVelocity => "v",
        }
    }
}

/// How the relaxation weight decays across epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// `eps(k) = max(0, eps0 - k * decrement)`; reaches 0 in finitely many
    /// epochs.
    #[default]
    Subtractive,
    /// `eps(k) = eps0 * decrement^k`; decays geometrically, never exactly 0.
    Multiplicative,
}

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Trade-off between classification and trajectory terms.
    pub alpha: f64,
    /// Initial relaxation weight.
    pub epsilon0: f64,
    /// Per-epoch decrement (subtractive) or factor (multiplicative).
    pub epsilon_decrement_per_epoch: f64,
    pub epsilon_schedule: EpsilonSchedule,
    pub distance_kind: DistanceKind,
    /// Number of modes the loss expects.
    pub modes: usize,
}

impl LossConfig {
    /// Schedule used when training the base model on all players. A
    /// single-mode model has nothing to relax, so it gets epsilon 0.
    pub fn base(modes: usize) -> Self {
        LossConfig {
            alpha: 1.0,
            epsilon0: if modes == 1 { 0.0 } else { 0.25 },
            epsilon_decrement_per_epoch: if modes == 1 { 0.0 } else { 0.05 },
            epsilon_schedule: EpsilonSchedule::Subtractive,
            distance_kind: DistanceKind::Displacement,
            modes,
        }
    }

    /// Gentler schedule used when fine-tuning on a single player's data.
    pub fn finetune(modes: usize) -> Self {
        LossConfig {
            alpha: 1.0,
            epsilon0: if modes == 1 { 0.0 } else { 0.75 },
            epsilon_decrement_per_epoch: if modes == 1 { 0.0 } else { 0.01 },
            epsilon_schedule: EpsilonSchedule::Subtractive,
            distance_kind: DistanceKind::Displacement,
            modes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::contract("alpha must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.epsilon0) {
            return Err(Error::contract("epsilon0 must lie in [0, 1)"));
        }
        if self.modes < 1 {
            return Err(Error::contract("modes must be at least 1"));
        }
        if self.modes == 1 && self.epsilon0 != 0.0 {
            return Err(Error::contract("single-mode loss requires epsilon0 = 0"));
        }
        Ok(())
    }
}

/// Per-sample loss decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Delta-weighted sum of `-log p_m`.
    pub classification: f64,
    /// Delta-weighted sum of per-mode MSE (before the alpha factor).
    pub trajectory: f64,
    pub winning_mode: usize,
    pub delta_weights: Vec<f64>,
    /// True when some mode probability hit the [`PROB_FLOOR`] clamp.
    pub prob_clamped: bool,
}

/// Mean squared error over all 2H velocity components:
/// `(1 / 2H) * sum((truth - pred)^2)`.
pub fn mse_loss(truth: &VelocityProfile, pred: &VelocityProfile) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            context: "mse_loss",
            left: truth.len(),
            right: pred.len(),
        });
    }
    Ok(mse_loss_flat(&truth.to_flat(), &pred.to_flat()))
}

/// [`mse_loss`] on flat `[vx1, vy1, ...]` component buffers of equal length.
pub fn mse_loss_flat(truth: &[f64], pred: &[f64]) -> f64 {
    debug_assert_eq!(truth.len(), pred.len());
    let n = truth.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (t, p) in truth.iter().zip(pred.iter()) {
        let e = t - p;
        acc += e * e;
    }
    acc / n as f64
}

/// Distance between a truth profile and one predicted mode.
pub fn distance(truth: &VelocityProfile, pred: &VelocityProfile, kind: DistanceKind) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            context: "distance",
            left: truth.len(),
            right: pred.len(),
        });
    }
    Ok(distance_flat(&truth.to_flat(), &pred.to_flat(), kind))
}

/// [`distance`] on flat component buffers.
pub fn distance_flat(truth: &[f64], pred: &[f64], kind: DistanceKind) -> f64 {
    debug_assert_eq!(truth.len(), pred.len());
    match kind {
        DistanceKind::Mse => mse_loss_flat(truth, pred),
        DistanceKind::Displacement => {
            let mut sx = 0.0;
            let mut sy = 0.0;
            for (t, p) in truth.chunks_exact(2).zip(pred.chunks_exact(2)) {
                sx += t[0] - p[0];
                sy += t[1] - p[1];
            }
            (sx * sx + sy * sy).sqrt()
        }
        DistanceKind::FinalVelocity => {
            let n = truth.len();
            if n < 2 {
                return 0.0;
            }
            let ex = truth[n - 2] - pred[n - 2];
            let ey = truth[n - 1] - pred[n - 1];
            (ex * ex + ey * ey).sqrt()
        }
    }
}

/// Index of the mode closest to the truth; ties break to the lowest index.
pub fn winning_mode(truth: &VelocityProfile, modes: &[VelocityProfile], kind: DistanceKind) -> Result<usize> {
    if modes.is_empty() {
        return Err(Error::contract("winning_mode requires at least one mode"));
    }
    let flats: Vec<Vec<f64>> = modes.iter().map(|m| m.to_flat()).collect();
    let refs: Vec<&[f64]> = flats.iter().map(|f| f.as_slice()).collect();
    Ok(winning_mode_flat(&truth.to_flat(), &refs, kind))
}

/// [`winning_mode`] on flat component buffers.
pub fn winning_mode_flat(truth: &[f64], modes: &[&[f64]], kind: DistanceKind) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (m, mode) in modes.iter().enumerate() {
        let d = distance_flat(truth, mode, kind);
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

/// Relaxed Kronecker delta: `1 - eps` for the winner, `eps / (M - 1)` for
/// every other mode. The weights over all modes sum to 1.
pub fn relaxed_delta(m: usize, m_star: usize, epsilon: f64, modes: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::contract("epsilon must lie in [0, 1)"));
    }
    if modes == 0 {
        return Err(Error::contract("modes must be at least 1"));
    }
    if modes == 1 && epsilon > 0.0 {
        return Err(Error::contract(
            "single-mode relaxed delta requires epsilon = 0 (off-winner weight undefined)",
        ));
    }
    if m == m_star {
        Ok(1.0 - epsilon)
    } else {
        Ok(epsilon / (modes - 1) as f64)
    }
}

/// All M delta weights for a given winner.
pub fn delta_weights(m_star: usize, epsilon: f64, modes: usize) -> Result<Vec<f64>> {
    (0..modes).map(|m| relaxed_delta(m, m_star, epsilon, modes)).collect()
}

/// Relaxation weight at a given epoch.
///
/// The subtractive schedule evaluates `eps0 - epoch * decrement` in
/// 1e-9-scaled integer arithmetic so that decimal schedules come out exact
/// (0.25, 0.20, ..., 0.05, 0 rather than 0.09999999999999998), then clamps
/// at 0.
pub fn epsilon_at_epoch(cfg: &LossConfig, epoch: usize) -> f64 {
    match cfg.epsilon_schedule {
        EpsilonSchedule::Subtractive => {
            const SCALE: f64 = 1e9;
            let e0 = (cfg.epsilon0 * SCALE).round();
            let dec = (cfg.epsilon_decrement_per_epoch * SCALE).round();
            ((e0 - epoch as f64 * dec).max(0.0)) / SCALE
        }
        EpsilonSchedule::Multiplicative => {
            cfg.epsilon0 * cfg.epsilon_decrement_per_epoch.powi(epoch as i32)
        }
    }
}

/// Full multi-mode loss for one sample.
///
/// `truth` and the predicted modes must share length and unit space (the
/// trainer evaluates it in normalized units, the same space the network
/// outputs live in).
pub fn mtp_loss(
    truth: &VelocityProfile,
    prediction: &ModePrediction,
    cfg: &LossConfig,
    epsilon: f64,
) -> Result<LossBreakdown> {
    let modes: Vec<Vec<f64>> = prediction.modes.iter().map(|m| m.to_flat()).collect();
    for m in &modes {
        if m.len() != truth.len() * 2 {
            return Err(Error::LengthMismatch {
                context: "mtp_loss",
                left: truth.len() * 2,
                right: m.len(),
            });
        }
    }
    let refs: Vec<&[f64]> = modes.iter().map(|m| m.as_slice()).collect();
    mtp_loss_flat(&truth.to_flat(), &refs, &prediction.probs, cfg, epsilon)
}

/// [`mtp_loss`] on flat buffers.
pub fn mtp_loss_flat(
    truth: &[f64],
    modes: &[&[f64]],
    probs: &[f64],
    cfg: &LossConfig,
    epsilon: f64,
) -> Result<LossBreakdown> {
    if modes.len() != cfg.modes || probs.len() != cfg.modes {
        return Err(Error::contract(format!(
            "expected {} modes, got {} trajectories / {} probabilities",
            cfg.modes,
            modes.len(),
            probs.len()
        )));
    }
    let m_star = winning_mode_flat(truth, modes, cfg.distance_kind);
    let weights = delta_weights(m_star, epsilon, cfg.modes)?;

    let mut classification = 0.0;
    let mut trajectory = 0.0;
    let mut clamped = false;
    for (m, mode) in modes.iter().enumerate() {
        let w = weights[m];
        if w == 0.0 {
            continue;
        }
        let p = if probs[m] < PROB_FLOOR {
            clamped = true;
            PROB_FLOOR
        } else {
            probs[m]
        };
        classification += w * (-p.ln());
        trajectory += w * mse_loss_flat(truth, mode);
    }
    Ok(LossBreakdown {
        total: classification + cfg.alpha * trajectory,
        classification,
        trajectory,
        winning_mode: m_star,
        delta_weights: weights,
        prob_clamped: clamped,
    })
}

/// Gradient of [`mtp_loss_flat`] with respect to the raw network outputs:
/// the per-mode velocity components and the pre-softmax logits.
///
/// The winner index is treated as a constant of the input (the argmin is
/// piecewise constant in the outputs), so no gradient flows through the
/// mode selection. For the logits the softmax/cross-entropy chain gives
/// `d total / d z_k = p_k - delta_k`.
pub fn mtp_loss_grad_flat(
    truth: &[f64],
    modes: &[&[f64]],
    probs: &[f64],
    cfg: &LossConfig,
    epsilon: f64,
) -> Result<(LossBreakdown, Vec<Vec<f64>>, Vec<f64>)> {
    let breakdown = mtp_loss_flat(truth, modes, probs, cfg, epsilon)?;
    let n = truth.len() as f64;
    let mut grad_modes = Vec::with_capacity(modes.len());
    for (m, mode) in modes.iter().enumerate() {
        let w = breakdown.delta_weights[m];
        let scale = 2.0 * w * cfg.alpha / n;
        grad_modes.push(
            mode.iter()
                .zip(truth.iter())
                .map(|(p, t)| scale * (p - t))
                .collect(),
        );
    }
    let grad_logits = probs
        .iter()
        .zip(breakdown.delta_weights.iter())
        .map(|(p, d)| p - d)
        .collect();
    Ok((breakdown, grad_modes, grad_logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::court::Velocity2D;
    use approx::assert_abs_diff_eq;

    fn profile(vals: &[(f64, f64)]) -> VelocityProfile {
        VelocityProfile::new(
            vals.iter().map(|&(x, y)| Velocity2D::new(x, y)).collect(),
            0.12,
        )
    }

    #[test]
    fn mse_hand_values() {
        let truth = profile(&[(3.0, 4.0)]);
        let zero = profile(&[(0.0, 0.0)]);
        assert_abs_diff_eq!(mse_loss(&truth, &zero).unwrap(), 12.5, epsilon = 1e-12);

        let truth2 = profile(&[(1.0, 0.0), (0.0, 1.0)]);
        let zero2 = profile(&[(0.0, 0.0), (0.0, 0.0)]);
        assert_abs_diff_eq!(mse_loss(&truth2, &zero2).unwrap(), 0.5, epsilon = 1e-12);

        assert_eq!(mse_loss(&truth, &truth).unwrap(), 0.0);
        assert!(mse_loss(&truth, &truth2).is_err());
    }

    #[test]
    fn distance_kinds_genuinely_disagree() {
        // Velocity errors (1,0) then (-1,0): they cancel in the summed
        // displacement but not in the other two distances.
        let truth = profile(&[(1.0, 0.0), (-1.0, 0.0)]);
        let pred = profile(&[(0.0, 0.0), (0.0, 0.0)]);
        assert_abs_diff_eq!(
            distance(&truth, &pred, DistanceKind::Displacement).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            distance(&truth, &pred, DistanceKind::Mse).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            distance(&truth, &pred, DistanceKind::FinalVelocity).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        for kind in [DistanceKind::Mse, DistanceKind::Displacement, DistanceKind::FinalVelocity] {
            assert_eq!(distance(&truth, &truth, kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn winner_selection_and_tie_break() {
        let truth = profile(&[(1.0, 1.0), (2.0, 0.0)]);
        let exact = truth.clone();
        let off = profile(&[(0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(
            winning_mode(&truth, &[off.clone(), exact.clone()], DistanceKind::Mse).unwrap(),
            1
        );
        // All identical -> lowest index.
        assert_eq!(
            winning_mode(&truth, &[off.clone(), off.clone(), off], DistanceKind::Mse).unwrap(),
            0
        );
    }

    #[test]
    fn relaxed_delta_values() {
        assert_eq!(relaxed_delta(0, 0, 0.0, 1).unwrap(), 1.0);
        assert_eq!(relaxed_delta(2, 2, 0.0, 4).unwrap(), 1.0);
        assert_eq!(relaxed_delta(1, 2, 0.0, 4).unwrap(), 0.0);
        assert_abs_diff_eq!(relaxed_delta(0, 0, 0.25, 4).unwrap(), 0.75);
        assert_abs_diff_eq!(relaxed_delta(3, 0, 0.25, 4).unwrap(), 0.25 / 3.0, epsilon = 1e-15);
        assert!(relaxed_delta(0, 0, 0.5, 1).is_err());

        // Weights sum to 1 for a sweep of (epsilon, M).
        for modes in 1..6 {
            for &eps in &[0.0, 0.1, 0.25, 0.75, 0.9999] {
                if modes == 1 && eps > 0.0 {
                    continue;
                }
                let w = delta_weights(0, eps, modes).unwrap();
                assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mtp_loss_hand_values() {
        let cfg1 = LossConfig {
            modes: 1,
            epsilon0: 0.0,
            ..LossConfig::base(1)
        };
        let truth = profile(&[(1.0, 2.0)]);
        let pred = ModePrediction::new(vec![truth.clone()], vec![1.0]);
        let b = mtp_loss(&truth, &pred, &cfg1, 0.0).unwrap();
        assert_abs_diff_eq!(b.total, 0.0, epsilon = 1e-12);

        let cfg2 = LossConfig::base(2);
        let other = profile(&[(1.0, 2.0 + (20.0f64).sqrt())]); // mse = 10
        let pred = ModePrediction::new(vec![truth.clone(), other], vec![0.5, 0.5]);
        let b = mtp_loss(&truth, &pred, &cfg2, 0.0).unwrap();
        assert_eq!(b.winning_mode, 0);
        assert_abs_diff_eq!(b.total, -(0.5f64.ln()), epsilon = 1e-9);

        let b = mtp_loss(&truth, &pred, &cfg2, 0.2).unwrap();
        let expected = 0.8 * (-(0.5f64.ln())) + 0.2 * (-(0.5f64.ln()) + 10.0);
        assert_abs_diff_eq!(b.total, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(b.total, 2.6931, epsilon = 1e-4);
    }

    #[test]
    fn mtp_loss_non_negative_and_m1_reduction() {
        // For epsilon = 0 and M = 1 the loss reduces to alpha * mse.
        let cfg = LossConfig {
            alpha: 2.5,
            ..LossConfig::base(1)
        };
        let cfg = LossConfig { epsilon0: 0.0, ..cfg };
        let truth = profile(&[(1.0, 0.0), (0.0, 1.0)]);
        let pred_traj = profile(&[(0.0, 0.0), (0.0, 0.0)]);
        let pred = ModePrediction::new(vec![pred_traj.clone()], vec![1.0]);
        let b = mtp_loss(&truth, &pred, &cfg, 0.0).unwrap();
        let expected = 2.5 * mse_loss(&truth, &pred_traj).unwrap();
        assert_abs_diff_eq!(b.total, expected, epsilon = 1e-12);
        assert!(b.total >= 0.0);
    }

    #[test]
    fn probability_floor_clamps_and_flags() {
        let cfg = LossConfig::base(2);
        let truth = profile(&[(1.0, 0.0)]);
        let other = profile(&[(0.0, 0.0)]);
        let pred = ModePrediction::new(vec![truth.clone(), other], vec![1.0, 0.0]);
        let b = mtp_loss(&truth, &pred, &cfg, 0.25).unwrap();
        assert!(b.prob_clamped);
        assert!(b.total.is_finite());
    }

    #[test]
    fn epsilon_schedule_exact_decimals() {
        let base = LossConfig::base(4);
        assert_eq!(epsilon_at_epoch(&base, 0), 0.25);
        assert_eq!(epsilon_at_epoch(&base, 1), 0.20);
        assert_eq!(epsilon_at_epoch(&base, 2), 0.15);
        assert_eq!(epsilon_at_epoch(&base, 3), 0.10);
        assert_eq!(epsilon_at_epoch(&base, 4), 0.05);
        assert_eq!(epsilon_at_epoch(&base, 5), 0.0);
        assert_eq!(epsilon_at_epoch(&base, 17), 0.0);

        let ft = LossConfig::finetune(4);
        assert_eq!(epsilon_at_epoch(&ft, 0), 0.75);
        assert_eq!(epsilon_at_epoch(&ft, 1), 0.74);
        assert_eq!(epsilon_at_epoch(&ft, 10), 0.65);
        assert_eq!(epsilon_at_epoch(&ft, 75), 0.0);

        let constant = LossConfig {
            epsilon_decrement_per_epoch: 0.0,
            ..LossConfig::base(4)
        };
        assert_eq!(epsilon_at_epoch(&constant, 100), 0.25);

        // Monotone non-increasing.
        let mut prev = f64::INFINITY;
        for epoch in 0..10 {
            let e = epsilon_at_epoch(&base, epoch);
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn multiplicative_schedule_available() {
        let cfg = LossConfig {
            epsilon_schedule: EpsilonSchedule::Multiplicative,
            epsilon_decrement_per_epoch: 0.5,
            ..LossConfig::base(4)
        };
        assert_abs_diff_eq!(epsilon_at_epoch(&cfg, 0), 0.25);
        assert_abs_diff_eq!(epsilon_at_epoch(&cfg, 1), 0.125);
        assert_abs_diff_eq!(epsilon_at_epoch(&cfg, 2), 0.0625);
    }
}
