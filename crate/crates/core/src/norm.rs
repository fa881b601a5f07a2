//! Feature normalization into the `[-1, 1]` range and its inverse.
//!
//! Locations map linearly over the court extent, the shot clock over
//! `[0, shot_clock_max_s]`, and velocities over `[-v_max_fps, v_max_fps]`
//! with clamping (sprinting speeds sit well below the default 40 ft/s, so
//! clamping only ever fires on corrupt data; when it does the caller can
//! inspect [`NormalizationSpec::normalize_velocity_counted`]).

use serde::{Deserialize, Serialize};

use crate::court::CourtSpec;
use crate::error::{Error, Result};

/// Which raw feature a value represents, selecting its affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    LocationX,
    LocationY,
    Velocity,
    ShotClock,
}

/// Scales raw features into `[-1, 1]`; persisted with every model so that
/// checkpoints stay self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub court: CourtSpec,
    /// Velocity scale in ft/s; raw velocities beyond it are clamped.
    pub v_max_fps: f64,
    pub shot_clock_max_s: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        NormalizationSpec {
            court: CourtSpec::default(),
            v_max_fps: 40.0,
            shot_clock_max_s: 24.0,
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        self.court.validate()?;
        if self.v_max_fps <= 0.0 || self.shot_clock_max_s <= 0.0 {
            return Err(Error::contract("normalization scales must be positive"));
        }
        Ok(())
    }

    /// Maps a raw value into `[-1, 1]`. Locations and the shot clock map
    /// affinely over their declared range; velocities divide by the scale
    /// and clamp.
    pub fn normalize(&self, value: f64, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::LocationX => value / self.court.halfcourt_x_ft - 1.0,
            FeatureKind::LocationY => value / (self.court.width_ft / 2.0) - 1.0,
            FeatureKind::ShotClock => value / (self.shot_clock_max_s / 2.0) - 1.0,
            FeatureKind::Velocity => (value / self.v_max_fps).clamp(-1.0, 1.0),
        }
    }

    /// Inverse of [`normalize`](Self::normalize) on the unclamped range.
    pub fn denormalize(&self, value: f64, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::LocationX => (value + 1.0) * self.court.halfcourt_x_ft,
            FeatureKind::LocationY => (value + 1.0) * (self.court.width_ft / 2.0),
            FeatureKind::ShotClock => (value + 1.0) * (self.shot_clock_max_s / 2.0),
            FeatureKind::Velocity => value * self.v_max_fps,
        }
    }

    /// Like `normalize(.., Velocity)` but reports whether clamping fired,
    /// so ingest/dataset code can count out-of-range velocities.
    pub fn normalize_velocity_counted(&self, value: f64) -> (f64, bool) {
        let scaled = value / self.v_max_fps;
        if scaled.abs() > 1.0 {
            (scaled.clamp(-1.0, 1.0), true)
        } else {
            (scaled, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn location_x_endpoints() {
        let spec = NormalizationSpec::default();
        assert_abs_diff_eq!(spec.normalize(47.0, FeatureKind::LocationX), 0.0);
        assert_abs_diff_eq!(spec.normalize(0.0, FeatureKind::LocationX), -1.0);
        assert_abs_diff_eq!(spec.normalize(94.0, FeatureKind::LocationX), 1.0);
    }

    #[test]
    fn shot_clock_endpoints() {
        let spec = NormalizationSpec::default();
        assert_abs_diff_eq!(spec.normalize(24.0, FeatureKind::ShotClock), 1.0);
        assert_abs_diff_eq!(spec.normalize(12.0, FeatureKind::ShotClock), 0.0);
        assert_abs_diff_eq!(spec.normalize(0.0, FeatureKind::ShotClock), -1.0);
    }

    #[test]
    fn round_trip_location_y() {
        let spec = NormalizationSpec::default();
        let y = 13.7;
        let back = spec.denormalize(spec.normalize(y, FeatureKind::LocationY), FeatureKind::LocationY);
        assert_abs_diff_eq!(back, y, epsilon = 1e-12);
    }

    #[test]
    fn velocity_clamps_and_counts() {
        let spec = NormalizationSpec::default();
        let (v, clamped) = spec.normalize_velocity_counted(55.0);
        assert_eq!(v, 1.0);
        assert!(clamped);
        let (v, clamped) = spec.normalize_velocity_counted(-20.0);
        assert_abs_diff_eq!(v, -0.5);
        assert!(!clamped);
    }

    proptest! {
        /// Normalization is monotone and invertible for in-range values of
        /// every feature kind.
        #[test]
        fn monotone_invertible(a in 0.0f64..94.0, b in 0.0f64..94.0) {
            let spec = NormalizationSpec::default();
            for kind in [FeatureKind::LocationX, FeatureKind::LocationY, FeatureKind::ShotClock, FeatureKind::Velocity] {
                // Scale inputs into each kind's raw range.
                let scale = match kind {
                    FeatureKind::LocationX => 1.0,
                    FeatureKind::LocationY => 50.0 / 94.0,
                    FeatureKind::ShotClock => 24.0 / 94.0,
                    FeatureKind::Velocity => 80.0 / 94.0, // [-40, 40] after shift
                };
                let (mut ra, mut rb) = (a * scale, b * scale);
                if kind == FeatureKind::Velocity {
                    ra -= 40.0;
                    rb -= 40.0;
                }
                let na = spec.normalize(ra, kind);
                let nb = spec.normalize(rb, kind);
                prop_assert!((-1.0..=1.0).contains(&na));
                if ra < rb {
                    prop_assert!(na <= nb);
                }
                let back = spec.denormalize(na, kind);
                prop_assert!((back - ra).abs() < 1e-9);
            }
        }
    }
}
