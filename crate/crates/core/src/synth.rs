//! Seeded synthetic possession generator, the desk-scale stand-in for the
//! full tracking corpus.
//!
//! Each possession plays out in the canonical (high-x) attack half. The
//! tracked player (the first offense id) runs a straight common stem, then
//! forks onto one of K branch headings sampled from `fork_probabilities`.
//! The other nine players and the ball follow fixed scripted
//! constant-velocity paths, so with a single branch and zero noise every
//! offensive player is an exact constant-velocity mover (which is what the
//! baseline closed-form checks rely on). Positional noise, when enabled,
//! applies i.i.d. to every observed coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::court::Location2D;
use crate::error::{Error, Result};
use crate::ingest::{Frame, Possession, POSSESSION_DT};

/// Player id of the tracked (forking) player in generated possessions.
pub const TRACKED_PLAYER_ID: u64 = 1;
/// Scripted players move at this fraction of the tracked player's speed.
pub const SCRIPTED_SPEED_FACTOR: f64 = 0.5;
/// Largest branch heading away from the stem direction, radians (45 deg).
pub const MAX_BRANCH_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_possessions: usize,
    /// K branch probabilities; must sum to 1. K = 1 yields pure
    /// constant-velocity movers.
    pub fork_probabilities: Vec<f64>,
    /// Tracked-player speed, ft/s.
    pub speed_fps: f64,
    /// Std-dev of i.i.d. positional noise on every observed coordinate, ft.
    pub noise_std_ft: f64,
    pub seed: u64,
    /// Frames before the fork (includes the starting frame).
    pub stem_frames: usize,
    /// Frames after the fork.
    pub branch_frames: usize,
}

impl SyntheticSpec {
    pub fn new(n_possessions: usize, fork_probabilities: Vec<f64>, seed: u64) -> Self {
        SyntheticSpec {
            n_possessions,
            fork_probabilities,
            speed_fps: 12.0,
            noise_std_ft: 0.0,
            seed,
            stem_frames: 16,
            branch_frames: 14,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fork_probabilities.is_empty() {
            return Err(Error::contract("at least one branch required"));
        }
        let sum: f64 = self.fork_probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.fork_probabilities.iter().any(|p| *p < 0.0) {
            return Err(Error::contract("fork probabilities must be a distribution"));
        }
        if self.speed_fps <= 0.0 || self.noise_std_ft < 0.0 {
            return Err(Error::contract("speed must be positive, noise non-negative"));
        }
        let frames = self.stem_frames + self.branch_frames;
        if (frames as f64 - 1.0) * POSSESSION_DT + 1e-9 < crate::ingest::MIN_POSSESSION_S {
            return Err(Error::contract(
                "stem + branch frames too short for the 3 s possession minimum",
            ));
        }
        Ok(())
    }

    /// Heading (radians, relative to +x) of branch `k`: K branches spread
    /// evenly over [-45 deg, +45 deg]; a single branch keeps heading 0.
    pub fn branch_angle(&self, k: usize) -> f64 {
        let count = self.fork_probabilities.len();
        if count == 1 {
            0.0
        } else {
            -MAX_BRANCH_ANGLE + 2.0 * MAX_BRANCH_ANGLE * (k as f64) / (count as f64 - 1.0)
        }
    }

    /// Largest scripted per-step speed change divided by dt: the
    /// generator's noise-free acceleration ceiling, ft/s^2.
    pub fn acceleration_cap_fps2(&self) -> f64 {
        let max_turn = (0..self.fork_probabilities.len())
            .map(|k| self.branch_angle(k).abs())
            .fold(0.0, f64::max);
        2.0 * self.speed_fps * (max_turn / 2.0).sin() / POSSESSION_DT
    }
}

/// Outcome counters for one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub n_possessions: usize,
    pub branch_counts: Vec<usize>,
    pub frames_per_possession: usize,
    pub acceleration_cap_fps2: f64,
}

/// Straight-line script: constant velocity toward a target, stopping there
/// if reached. Targets sit far enough away that at the default speeds no
/// script ever stops, so scripted players stay exact constant-velocity
/// movers for a whole possession.
struct Script {
    start: Location2D,
    velocity: (f64, f64),
    time_to_target: f64,
}

impl Script {
    fn toward(start: Location2D, target: Location2D, speed: f64) -> Script {
        let dx = target.x - start.x;
        let dy = target.y - start.y;
        let norm = (dx * dx + dy * dy).sqrt().max(1e-9);
        Script {
            start,
            velocity: (speed * dx / norm, speed * dy / norm),
            time_to_target: norm / speed.max(1e-9),
        }
    }

    fn at(&self, step: usize) -> Location2D {
        let t = (step as f64 * POSSESSION_DT).min(self.time_to_target);
        Location2D::new(self.start.x + self.velocity.0 * t, self.start.y + self.velocity.1 * t)
    }
}

fn scripted_offense(speed: f64) -> Vec<Script> {
    vec![
        Script::toward(Location2D::new(55.0, 8.0), Location2D::new(88.0, 20.0), speed),
        Script::toward(Location2D::new(55.0, 42.0), Location2D::new(88.0, 30.0), speed),
        Script::toward(Location2D::new(60.0, 12.0), Location2D::new(90.0, 32.0), speed),
        Script::toward(Location2D::new(60.0, 38.0), Location2D::new(90.0, 18.0), speed),
    ]
}

fn scripted_defense(speed: f64) -> Vec<Script> {
    vec![
        Script::toward(Location2D::new(62.0, 10.0), Location2D::new(90.0, 24.0), speed),
        Script::toward(Location2D::new(62.0, 40.0), Location2D::new(90.0, 26.0), speed),
        Script::toward(Location2D::new(70.0, 15.0), Location2D::new(91.0, 30.0), speed),
        Script::toward(Location2D::new(70.0, 35.0), Location2D::new(91.0, 20.0), speed),
        Script::toward(Location2D::new(78.0, 25.0), Location2D::new(92.0, 35.0), speed),
    ]
}

/// Generates possessions plus branch statistics. Deterministic in the spec
/// (seed included).
pub fn generate(spec: &SyntheticSpec) -> Result<(Vec<Possession>, SynthReport)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = if spec.noise_std_ft > 0.0 {
        Some(Normal::new(0.0, spec.noise_std_ft).map_err(|e| Error::contract(e.to_string()))?)
    } else {
        None
    };
    let n_frames = spec.stem_frames + spec.branch_frames;
    let scripted_speed = spec.speed_fps * SCRIPTED_SPEED_FACTOR;
    let offense_scripts = scripted_offense(scripted_speed);
    let defense_scripts = scripted_defense(scripted_speed);

    let mut branch_counts = vec![0usize; spec.fork_probabilities.len()];
    let mut possessions = Vec::with_capacity(spec.n_possessions);

    for index in 0..spec.n_possessions {
        let branch = sample_branch(&spec.fork_probabilities, rng.gen::<f64>());
        branch_counts[branch] += 1;
        let angle = spec.branch_angle(branch);

        let tracked_start = Location2D::new(52.0, 25.0);
        let mut frames = Vec::with_capacity(n_frames);
        let mut tracked = tracked_start;
        for step in 0..n_frames {
            // Tracked player: advance from the previous position; the fork
            // turns the heading at the stem boundary.
            if step > 0 {
                let heading = if step < spec.stem_frames { 0.0 } else { angle };
                tracked = Location2D::new(
                    tracked.x + spec.speed_fps * heading.cos() * POSSESSION_DT,
                    tracked.y + spec.speed_fps * heading.sin() * POSSESSION_DT,
                );
            }

            let jitter = |loc: Location2D, rng: &mut ChaCha8Rng| -> Location2D {
                match &noise {
                    Some(n) => Location2D::new(loc.x + n.sample(rng), loc.y + n.sample(rng)),
                    None => loc,
                }
            };

            let mut players = Vec::with_capacity(10);
            players.push(jitter(tracked, &mut rng));
            for script in &offense_scripts {
                players.push(jitter(script.at(step), &mut rng));
            }
            for script in &defense_scripts {
                players.push(jitter(script.at(step), &mut rng));
            }
            let ball = jitter(Location2D::new(tracked.x + 1.5, tracked.y + 0.5), &mut rng);
            frames.push(Frame {
                t_s: step as f64 * POSSESSION_DT,
                ball,
                shot_clock_s: 20.0 - step as f64 * POSSESSION_DT,
                players,
            });
        }

        possessions.push(Possession {
            frames,
            dt: POSSESSION_DT,
            offense_player_ids: vec![TRACKED_PLAYER_ID, 2, 3, 4, 5],
            defense_player_ids: vec![6, 7, 8, 9, 10],
            attacked_basket_high_x: true,
            source_game_id: "synthetic".to_string(),
            index_in_game: index as u32,
        });
    }

    let report = SynthReport {
        n_possessions: spec.n_possessions,
        branch_counts,
        frames_per_possession: n_frames,
        acceleration_cap_fps2: spec.acceleration_cap_fps2(),
    };
    Ok((possessions, report))
}

fn sample_branch(probabilities: &[f64], draw: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probabilities.iter().enumerate() {
        acc += p;
        if draw < acc {
            return k;
        }
    }
    probabilities.len() - 1
}
