//! UAV angle trajectories and synthetic array snapshots.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, ArrayGeometry, DoaSet};
use crate::error::{Error, Result};

/// Default snapshots per collection event.
pub const DEFAULT_NUM_SNAPSHOTS: usize = 200;

/// Nudge applied when clamping makes two users coincide.
const COLLISION_NUDGE_DEG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    /// Independent Gaussian increments per user and step.
    RandomWalk { sigma_deg_per_step: f64 },
    /// Angles for every step, listed verbatim.
    Scripted { waypoints: Vec<DoaSet> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub num_steps: usize,
    pub initial_angles: DoaSet,
    pub drift: Drift,
    pub angle_bounds: (f64, f64),
    pub seed: u64,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(Error::Validation("trajectory.num_steps must be at least 1".into()));
        }
        let (lo, hi) = self.angle_bounds;
        if !(lo > 0.0 && hi < 180.0 && lo < hi) {
            return Err(Error::Validation(format!(
                "trajectory.angle_bounds ({lo}, {hi}) must be an increasing pair inside (0, 180)"
            )));
        }
        match &self.drift {
            Drift::RandomWalk { sigma_deg_per_step } => {
                if !(sigma_deg_per_step.is_finite() && *sigma_deg_per_step >= 0.0) {
                    return Err(Error::Validation(
                        "trajectory.drift.sigma_deg_per_step must be non-negative".into(),
                    ));
                }
            }
            Drift::Scripted { waypoints } => {
                if waypoints.len() != self.num_steps {
                    return Err(Error::Validation(format!(
                        "trajectory.drift.waypoints has {} entries but num_steps is {}",
                        waypoints.len(),
                        self.num_steps
                    )));
                }
                let k = self.initial_angles.len();
                if let Some(step) = waypoints.iter().position(|w| w.len() != k) {
                    return Err(Error::Validation(format!(
                        "trajectory.drift.waypoints[{step}] does not list {k} angles"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Angles for every step of an episode.
pub fn generate_trajectory(config: &TrajectoryConfig) -> Result<Vec<DoaSet>> {
    config.validate()?;
    match &config.drift {
        Drift::Scripted { waypoints } => Ok(waypoints.clone()),
        Drift::RandomWalk { sigma_deg_per_step } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let (lo, hi) = config.angle_bounds;
            let mut steps = Vec::with_capacity(config.num_steps);
            steps.push(config.initial_angles.clone());
            for _ in 1..config.num_steps {
                let previous = steps.last().expect("non-empty").angles();
                let mut next = Vec::with_capacity(previous.len());
                for &angle in previous {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    next.push((angle + sigma_deg_per_step * z).clamp(lo, hi));
                }
                separate_collisions(&mut next, lo, hi);
                steps.push(DoaSet::new(next)?);
            }
            Ok(steps)
        }
    }
}

/// Clamping can stack several users on a bound; spread them apart by a tiny
/// amount toward the interior so the set stays distinct.
fn separate_collisions(angles: &mut [f64], lo: f64, hi: f64) {
    for i in 1..angles.len() {
        while angles[..i].contains(&angles[i]) {
            let toward_interior = if angles[i] >= (lo + hi) / 2.0 { -1.0 } else { 1.0 };
            angles[i] += toward_interior * COLLISION_NUDGE_DEG;
        }
    }
}

/// Array outputs for one collection event.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSnapshotBatch {
    snapshots: Vec<Vec<Complex64>>,
    snr_db: f64,
    true_angles: DoaSet,
    seed: u64,
}

impl CsiSnapshotBatch {
    /// Rows are snapshots, columns are elements.
    pub fn snapshots(&self) -> &[Vec<Complex64>] {
        &self.snapshots
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_elements(&self) -> usize {
        self.snapshots.first().map_or(0, Vec::len)
    }

    /// Ground truth, for scoring estimates only.
    pub fn true_angles(&self) -> &DoaSet {
        &self.true_angles
    }
}

/// `y_r = sum_k s_kr a(theta_k) + n_r` with unit-variance circular Gaussian
/// symbols and white circular Gaussian noise of per-element variance
/// `10^(-snr_db/10)`.
pub fn synthesize_csi(
    geometry: &ArrayGeometry,
    doas: &DoaSet,
    snr_db: f64,
    num_snapshots: usize,
    seed: u64,
) -> Result<CsiSnapshotBatch> {
    if num_snapshots == 0 {
        return Err(Error::Validation("num_snapshots must be at least 1".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Validation("snr_db must be finite".into()));
    }
    let steering = doas
        .angles()
        .iter()
        .map(|&a| steering_vector(geometry, a))
        .collect::<Result<Vec<_>>>()?;
    let noise_sigma = (10f64.powf(-snr_db / 10.0) / 2.0).sqrt();
    let symbol_sigma = 0.5f64.sqrt();
    let n = geometry.num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |sigma: f64| -> Complex64 {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(sigma * re, sigma * im)
    };

    let mut snapshots = Vec::with_capacity(num_snapshots);
    for _ in 0..num_snapshots {
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for a in &steering {
            let s = gaussian(symbol_sigma);
            for (yi, ai) in y.iter_mut().zip(a.entries()) {
                *yi += s * ai;
            }
        }
        for yi in y.iter_mut() {
            *yi += gaussian(noise_sigma);
        }
        snapshots.push(y);
    }
    Ok(CsiSnapshotBatch {
        snapshots,
        snr_db,
        true_angles: doas.clone(),
        seed,
    })
}
