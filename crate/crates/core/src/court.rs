//! Court geometry, trajectory/velocity types, and the kinematic conversions
//! between them.
//!
//! Coordinates are in feet with the origin at the upper-left corner of the
//! court: `x` runs along the court length (0..94), `y` along the width
//! (0..50). Velocities are in ft/s, accelerations in ft/s^2. Conversions
//! between location sequences and velocity profiles use first differences
//! at the sampling interval `dt`, so the two representations are exactly
//! interchangeable given the anchor location.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feet-to-meters factor used when reports also quote metric units.
pub const FT_TO_M: f64 = 0.3048;

/// Static dimensions of an NBA court, in feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtSpec {
    pub length_ft: f64,
    pub width_ft: f64,
    pub halfcourt_x_ft: f64,
}

impl Default for CourtSpec {
    fn default() -> Self {
        CourtSpec {
            length_ft: 94.0,
            width_ft: 50.0,
            halfcourt_x_ft: 47.0,
        }
    }
}

impl CourtSpec {
    /// Validates positivity and the halfcourt relation.
    pub fn validate(&self) -> Result<()> {
        if !(self.length_ft > 0.0 && self.width_ft > 0.0 && self.halfcourt_x_ft > 0.0) {
            return Err(Error::contract("court dimensions must be strictly positive"));
        }
        if (self.halfcourt_x_ft - self.length_ft / 2.0).abs() > 1e-9 {
            return Err(Error::contract("halfcourt_x_ft must equal length_ft / 2"));
        }
        Ok(())
    }
}

/// A 2-D location on the court, feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location2D {
    pub x: f64,
    pub y: f64,
}

impl Location2D {
    pub fn new(x: f64, y: f64) -> Self {
        Location2D { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Location2D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Clamps into the court rectangle. Used only when drawing; raw data may
    /// slightly overshoot the lines and training keeps it as-is.
    pub fn clamped_to(&self, court: &CourtSpec) -> Location2D {
        Location2D {
            x: self.x.clamp(0.0, court.length_ft),
            y: self.y.clamp(0.0, court.width_ft),
        }
    }
}

/// A 2-D velocity, ft/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Velocity2D {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity2D {
    pub fn new(vx: f64, vy: f64) -> Self {
        Velocity2D { vx, vy }
    }

    pub fn zero() -> Self {
        Velocity2D { vx: 0.0, vy: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }
}

/// An ordered sequence of future locations at fixed spacing `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub locations: Vec<Location2D>,
    /// Time index of the anchor step the trajectory starts after.
    pub t0: i64,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(locations: Vec<Location2D>, t0: i64, dt: f64) -> Self {
        Trajectory { locations, t0, dt }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// An ordered sequence of velocities at fixed spacing `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub velocities: Vec<Velocity2D>,
    pub dt: f64,
}

impl VelocityProfile {
    pub fn new(velocities: Vec<Velocity2D>, dt: f64) -> Self {
        VelocityProfile { velocities, dt }
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    /// Flattens to `[vx1, vy1, vx2, vy2, ...]`, the component order used by
    /// the model output layer and the loss.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.velocities.len());
        for v in &self.velocities {
            out.push(v.vx);
            out.push(v.vy);
        }
        out
    }

    pub fn from_flat(flat: &[f64], dt: f64) -> Result<VelocityProfile> {
        if flat.len() % 2 != 0 {
            return Err(Error::contract("flat velocity buffer must have even length"));
        }
        let velocities = flat
            .chunks_exact(2)
            .map(|c| Velocity2D::new(c[0], c[1]))
            .collect();
        Ok(VelocityProfile { velocities, dt })
    }
}

/// Converts a future trajectory into a velocity profile by first differences
/// from the current (anchor) location: `v[h] = (loc[h] - loc[h-1]) / dt`,
/// with `loc[-1]` being the anchor.
pub fn velocities_from_locations(current: Location2D, traj: &Trajectory) -> Result<VelocityProfile> {
    if traj.dt <= 0.0 {
        return Err(Error::contract("trajectory dt must be positive"));
    }
    if !current.is_finite() {
        return Err(Error::data("non-finite anchor location"));
    }
    let mut velocities = Vec::with_capacity(traj.locations.len());
    let mut prev = current;
    for loc in &traj.locations {
        if !loc.is_finite() {
            return Err(Error::data("non-finite location in trajectory"));
        }
        velocities.push(Velocity2D::new(
            (loc.x - prev.x) / traj.dt,
            (loc.y - prev.y) / traj.dt,
        ));
        prev = *loc;
    }
    Ok(VelocityProfile::new(velocities, traj.dt))
}

/// Integrates a velocity profile from the current location:
/// `loc[h] = current + dt * sum(v[0..=h])`. Inverse of
/// [`velocities_from_locations`].
pub fn locations_from_velocities(current: Location2D, vel: &VelocityProfile) -> Result<Trajectory> {
    if vel.dt <= 0.0 {
        return Err(Error::contract("velocity profile dt must be positive"));
    }
    if !current.is_finite() {
        return Err(Error::data("non-finite anchor location"));
    }
    let mut locations = Vec::with_capacity(vel.velocities.len());
    let mut pos = current;
    for v in &vel.velocities {
        if !v.is_finite() {
            return Err(Error::data("non-finite velocity in profile"));
        }
        pos = Location2D::new(pos.x + vel.dt * v.vx, pos.y + vel.dt * v.vy);
        locations.push(pos);
    }
    Ok(Trajectory::new(locations, 0, vel.dt))
}

/// Magnitude of the per-step acceleration along a velocity profile,
/// `a[h] = |v[h] - v[h-1]| / dt` with `v[-1] = v0`. Units ft/s^2.
pub fn acceleration_profile(vel: &VelocityProfile, v0: Velocity2D) -> Result<Vec<f64>> {
    if vel.dt <= 0.0 {
        return Err(Error::contract("velocity profile dt must be positive"));
    }
    if !v0.is_finite() {
        return Err(Error::data("non-finite seed velocity"));
    }
    let mut out = Vec::with_capacity(vel.velocities.len());
    let mut prev = v0;
    for v in &vel.velocities {
        if !v.is_finite() {
            return Err(Error::data("non-finite velocity in profile"));
        }
        let dvx = v.vx - prev.vx;
        let dvy = v.vy - prev.vy;
        out.push((dvx * dvx + dvy * dvy).sqrt() / vel.dt);
        prev = *v;
    }
    Ok(out)
}
