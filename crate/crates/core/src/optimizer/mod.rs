//! Joint optimization of element positions and beamforming weights.
//!
//! For fixed positions the weight subproblem is solved exactly (dominant
//! eigenvector of the gain matrix). Positions are improved by alternating a
//! position update with an exact weight refresh, from several seeded starts.

mod projection;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{
    gain_matrix, principal_eigenpair, steering_vector, sum_beam_gain, ArrayConstraints,
    ArrayGeometry, BeamGain, DoaSet, Weights, EIGEN_MAX_ITERATIONS, EIGEN_TOLERANCE,
};
use crate::error::{Error, Result};

pub use projection::project_positions;

/// Maximum number of step halvings per gradient iteration.
const MAX_STEP_HALVINGS: usize = 20;
/// Coordinate-search grid pitch in wavelengths.
const COORDINATE_GRID_WAVELENGTHS: f64 = 0.01;

/// Position-update rule used between weight refreshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    GradientAlternating,
    CoordinateSearch,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::GradientAlternating => f.write_str("gradient_alternating"),
            Strategy::CoordinateSearch => f.write_str("coordinate_search"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gradient" | "gradient_alternating" => Ok(Strategy::GradientAlternating),
            "coordinate" | "coordinate_search" => Ok(Strategy::CoordinateSearch),
            other => Err(Error::Validation(format!("unknown strategy '{other}'"))),
        }
    }
}

/// How a [`BeamformingSolution`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    Movable(Strategy),
    FixedBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Largest per-iteration element move, in wavelengths.
    pub step_size: f64,
    pub max_outer_iterations: usize,
    /// Stop once an outer iteration improves the gain by less than this many dB.
    pub gain_tolerance_db: f64,
    #[serde(skip)]
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            step_size: 0.05,
            max_outer_iterations: 500,
            gain_tolerance_db: 1e-6,
            seed: 0,
            strategy: Strategy::GradientAlternating,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Validation("optimizer.restarts must be at least 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Validation("optimizer.step_size must be positive".into()));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::Validation(
                "optimizer.max_outer_iterations must be at least 1".into(),
            ));
        }
        if !(self.gain_tolerance_db.is_finite() && self.gain_tolerance_db >= 0.0) {
            return Err(Error::Validation(
                "optimizer.gain_tolerance_db must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Positions, weights and the gain they achieve for the angles they were solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSolution {
    pub geometry: ArrayGeometry,
    pub weights: Weights,
    pub gain_linear: f64,
    pub gain_db: f64,
    pub converged: bool,
    pub iterations: usize,
    pub strategy_used: SolutionSource,
    /// Index of the winning restart (0 for the baseline).
    pub restart: usize,
    /// Linear gain after every outer iteration of the winning restart.
    pub gain_history: Vec<f64>,
}

impl BeamformingSolution {
    /// Gain of this solution's geometry and weights for another set of angles.
    pub fn gain_at(&self, doas: &DoaSet) -> Result<BeamGain> {
        sum_beam_gain(&self.geometry, &self.weights, doas)
    }
}

/// Unit-norm weights maximizing `w^H A w` for the given placement.
pub fn optimal_weights(geometry: &ArrayGeometry, doas: &DoaSet) -> Result<Weights> {
    let matrix = gain_matrix(geometry, doas)?;
    let pair = principal_eigenpair(&matrix, EIGEN_TOLERANCE, EIGEN_MAX_ITERATIONS)?;
    Weights::normalized(pair.eigenvector)
}

/// Partial derivatives of the sum gain with respect to each element coordinate,
/// holding the weights fixed.
pub fn position_gradient(
    geometry: &ArrayGeometry,
    weights: &Weights,
    doas: &DoaSet,
) -> Result<Vec<f64>> {
    if weights.len() != geometry.num_elements() {
        return Err(Error::Validation(format!(
            "weight vector has {} entries but the array has {} elements",
            weights.len(),
            geometry.num_elements()
        )));
    }
    let k0 = geometry.constraints().wavenumber();
    let mut grad = vec![0.0; geometry.num_elements()];
    for &angle in doas.angles() {
        let a = steering_vector(geometry, angle)?;
        let response = weights.response(&a);
        let alpha = k0 * angle.to_radians().cos();
        for (n, (w, an)) in weights.entries().iter().zip(a.entries()).enumerate() {
            let d_response = w.conj() * Complex64::new(0.0, alpha) * an;
            grad[n] += 2.0 * (response.conj() * d_response).re;
        }
    }
    Ok(grad)
}

/// Fixed uniform array with weights re-optimized for `doas`.
pub fn fixed_baseline(doas: &DoaSet, constraints: &ArrayConstraints) -> Result<BeamformingSolution> {
    let geometry = ArrayGeometry::uniform(*constraints)?;
    let weights = optimal_weights(&geometry, doas)?;
    let gain = sum_beam_gain(&geometry, &weights, doas)?;
    Ok(BeamformingSolution {
        geometry,
        weights,
        gain_linear: gain.linear,
        gain_db: gain.db,
        converged: true,
        iterations: 0,
        strategy_used: SolutionSource::FixedBaseline,
        restart: 0,
        gain_history: vec![gain.linear],
    })
}

/// Multi-start alternating optimization of positions and weights.
///
/// Restart 0 starts from the uniform reference array, so the result never
/// falls below [`fixed_baseline`] for the same angles. Remaining restarts draw
/// placements uniformly from the feasible set with generator seed
/// `config.seed + restart`.
pub fn optimize_movable(
    doas: &DoaSet,
    config: &OptimizerConfig,
    constraints: &ArrayConstraints,
) -> Result<BeamformingSolution> {
    config.validate()?;
    constraints.validate()?;

    let outcomes: Vec<Result<BeamformingSolution>> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            run_restart(doas, config, constraints, restart).map_err(|e| Error::Restart {
                restart,
                source: Box::new(e),
            })
        })
        .collect();

    let mut best: Option<BeamformingSolution> = None;
    for outcome in outcomes {
        let candidate = outcome?;
        if best
            .as_ref()
            .is_none_or(|b| candidate.gain_linear > b.gain_linear)
        {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

struct Evaluated {
    geometry: ArrayGeometry,
    weights: Weights,
    gain: BeamGain,
}

fn evaluate(constraints: &ArrayConstraints, positions: Vec<f64>, doas: &DoaSet) -> Result<Evaluated> {
    let geometry = ArrayGeometry::new(*constraints, positions)?;
    let weights = optimal_weights(&geometry, doas)?;
    let gain = sum_beam_gain(&geometry, &weights, doas)?;
    Ok(Evaluated {
        geometry,
        weights,
        gain,
    })
}

fn initial_positions(constraints: &ArrayConstraints, seed: u64, restart: usize) -> Vec<f64> {
    if restart == 0 {
        return constraints.uniform_positions();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
    let n = constraints.num_elements;
    let d = constraints.min_spacing;
    let lower = -constraints.position_bound;
    let upper = constraints.position_bound - (n - 1) as f64 * d;
    // sorted uniform draws in the shifted coordinates are uniform over the feasible set
    let mut shifted: Vec<f64> = (0..n)
        .map(|_| lower + (upper - lower) * rng.random::<f64>())
        .collect();
    shifted.sort_by(f64::total_cmp);
    shifted
        .into_iter()
        .enumerate()
        .map(|(i, y)| (y + i as f64 * d).clamp(-constraints.position_bound, constraints.position_bound))
        .collect()
}

fn run_restart(
    doas: &DoaSet,
    config: &OptimizerConfig,
    constraints: &ArrayConstraints,
    restart: usize,
) -> Result<BeamformingSolution> {
    let start = initial_positions(constraints, config.seed, restart);
    let mut current = evaluate(constraints, start, doas)?;
    let mut history = vec![current.gain.linear];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_outer_iterations {
        iterations += 1;
        let next = match config.strategy {
            Strategy::GradientAlternating => gradient_step(&current, doas, config, constraints)?,
            Strategy::CoordinateSearch => coordinate_round(&current, doas, constraints)?,
        };
        let Some(next) = next else {
            converged = true;
            break;
        };
        let improvement_db = next.gain.db - current.gain.db;
        history.push(next.gain.linear);
        current = next;
        if improvement_db < config.gain_tolerance_db {
            converged = true;
            break;
        }
    }

    Ok(BeamformingSolution {
        geometry: current.geometry,
        weights: current.weights,
        gain_linear: current.gain.linear,
        gain_db: current.gain.db,
        converged,
        iterations,
        strategy_used: SolutionSource::Movable(config.strategy),
        restart,
        gain_history: history,
    })
}

/// One projected ascent step with backtracking. `None` when no step improves the gain.
fn gradient_step(
    current: &Evaluated,
    doas: &DoaSet,
    config: &OptimizerConfig,
    constraints: &ArrayConstraints,
) -> Result<Option<Evaluated>> {
    let grad = position_gradient(&current.geometry, &current.weights, doas)?;
    let largest = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    if largest.is_nan() || largest <= 0.0 {
        return Ok(None);
    }
    let mut step = config.step_size * constraints.wavelength;
    for _ in 0..=MAX_STEP_HALVINGS {
        let raw: Vec<f64> = current
            .geometry
            .positions()
            .iter()
            .zip(&grad)
            .map(|(x, g)| x + step * g / largest)
            .collect();
        let trial = evaluate(constraints, project_positions(&raw, constraints)?, doas)?;
        if trial.gain.linear > current.gain.linear {
            return Ok(Some(trial));
        }
        step /= 2.0;
    }
    Ok(None)
}

/// One sweep of per-coordinate grid line search. `None` when no coordinate moved.
fn coordinate_round(
    current: &Evaluated,
    doas: &DoaSet,
    constraints: &ArrayConstraints,
) -> Result<Option<Evaluated>> {
    let pitch = COORDINATE_GRID_WAVELENGTHS * constraints.wavelength;
    let n = constraints.num_elements;
    let d = constraints.min_spacing;
    let bound = constraints.position_bound;
    let mut best: Option<Evaluated> = None;

    for i in 0..n {
        let base = best.as_ref().unwrap_or(current);
        let positions = base.geometry.positions();
        let lo = if i == 0 { -bound } else { (positions[i - 1] + d).max(-bound) };
        let hi = if i + 1 == n { bound } else { (positions[i + 1] - d).min(bound) };
        let x = positions[i];
        let first = ((lo - x) / pitch).ceil() as i64;
        let last = ((hi - x) / pitch).floor() as i64;

        let mut winner: Option<Evaluated> = None;
        for m in first..=last {
            if m == 0 {
                continue;
            }
            let mut trial = positions.to_vec();
            trial[i] = (x + m as f64 * pitch).clamp(lo, hi);
            let Ok(geometry) = ArrayGeometry::new(*constraints, trial) else {
                continue;
            };
            let weights = optimal_weights(&geometry, doas)?;
            let gain = sum_beam_gain(&geometry, &weights, doas)?;
            let bar = winner.as_ref().map_or(base.gain.linear, |w| w.gain.linear);
            if gain.linear > bar {
                winner = Some(Evaluated {
                    geometry,
                    weights,
                    gain,
                });
            }
        }
        if winner.is_some() {
            best = winner;
        }
    }
    Ok(best)
}
