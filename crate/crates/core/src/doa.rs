//! Arrival-angle estimation from array snapshots by grid scanning.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{
    leading_eigenpairs, steering_at, ArrayGeometry, DoaSet, HermitianMatrix, EIGEN_MAX_ITERATIONS,
    EIGEN_TOLERANCE,
};
use crate::channel::CsiSnapshotBatch;
use crate::error::{Error, Result};

/// Spectra flatter than this max/min ratio carry no usable peaks.
const FLAT_SPECTRUM_RATIO: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    /// Conventional beamscan `a^H R a / N`.
    Bartlett,
    /// Noise-subspace pseudo-spectrum `1 / (a^H E_n E_n^H a / N)`.
    Music,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub grid_resolution_deg: f64,
    pub angle_bounds: (f64, f64),
    pub min_separation_deg: f64,
    pub method: SpectrumMethod,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            grid_resolution_deg: 0.5,
            angle_bounds: (5.0, 175.0),
            min_separation_deg: 2.0,
            method: SpectrumMethod::Music,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_resolution_deg.is_finite() && self.grid_resolution_deg > 0.0) {
            return Err(Error::Validation(
                "estimation.grid_resolution_deg must be positive".into(),
            ));
        }
        let (lo, hi) = self.angle_bounds;
        if !(lo > 0.0 && hi < 180.0 && lo < hi) {
            return Err(Error::Validation(format!(
                "estimation.angle_bounds ({lo}, {hi}) must be an increasing pair inside (0, 180)"
            )));
        }
        if self.min_separation_deg.is_nan() || self.min_separation_deg < 0.0 {
            return Err(Error::Validation(
                "estimation.min_separation_deg must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Scan angles from the lower bound in steps of the grid resolution.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.angle_bounds;
        let count = ((hi - lo) / self.grid_resolution_deg + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| lo + i as f64 * self.grid_resolution_deg)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    /// Ascending.
    pub angles: DoaSet,
    /// `(angle, value)` over the scan grid.
    pub spectrum: Vec<(f64, f64)>,
    pub grid_resolution_deg: f64,
    /// Spectrum value at each returned angle, same order as `angles`.
    pub peak_values: Vec<f64>,
    pub confidence: Confidence,
}

/// `(1/R) sum_r y_r y_r^H`.
pub fn sample_covariance(batch: &CsiSnapshotBatch) -> HermitianMatrix {
    let n = batch.num_elements();
    let rows = batch.snapshots();
    let scale = 1.0 / rows.len() as f64;
    HermitianMatrix::from_upper(n, |i, j| {
        rows.iter().map(|y| y[i] * y[j].conj()).sum::<Complex64>() * scale
    })
}

/// Picks the `num_sources` strongest separated peaks of the scan spectrum.
pub fn estimate_doas(
    covariance: &HermitianMatrix,
    geometry: &ArrayGeometry,
    num_sources: usize,
    config: &EstimatorConfig,
) -> Result<DoaEstimate> {
    config.validate()?;
    let n = geometry.num_elements();
    if covariance.size() != n {
        return Err(Error::Validation(format!(
            "covariance is {0}x{0} but the array has {n} elements",
            covariance.size()
        )));
    }
    if num_sources == 0 || num_sources >= n {
        return Err(Error::Validation(format!(
            "number of sources must satisfy 1 <= K < N = {n}, got {num_sources}"
        )));
    }

    let grid = config.grid();
    let values = scan(covariance, geometry, num_sources, config.method, &grid)?;
    let (mut picks, padded) = pick_peaks(&grid, &values, num_sources, config.min_separation_deg);
    picks.sort_unstable();

    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let flat = max.is_nan() || max <= FLAT_SPECTRUM_RATIO * min.max(0.0) || max <= 0.0;
    let confidence = if padded || flat {
        Confidence::Low
    } else {
        Confidence::High
    };

    Ok(DoaEstimate {
        angles: DoaSet::new(picks.iter().map(|&i| grid[i]).collect())?,
        peak_values: picks.iter().map(|&i| values[i]).collect(),
        spectrum: grid.iter().copied().zip(values.iter().copied()).collect(),
        grid_resolution_deg: config.grid_resolution_deg,
        confidence,
    })
}

/// Convenience: covariance from `batch`, then [`estimate_doas`].
pub fn estimate_from_batch(
    batch: &CsiSnapshotBatch,
    geometry: &ArrayGeometry,
    num_sources: usize,
    config: &EstimatorConfig,
) -> Result<DoaEstimate> {
    estimate_doas(&sample_covariance(batch), geometry, num_sources, config)
}

fn scan(
    covariance: &HermitianMatrix,
    geometry: &ArrayGeometry,
    num_sources: usize,
    method: SpectrumMethod,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let n = geometry.num_elements() as f64;
    let k0 = geometry.constraints().wavenumber();
    let positions = geometry.positions();
    match method {
        SpectrumMethod::Bartlett => Ok(grid
            .iter()
            .map(|&angle| {
                let a = steering_at(positions, k0, angle);
                covariance.quadratic_form(a.entries()) / n
            })
            .collect()),
        SpectrumMethod::Music => {
            let signal = leading_eigenpairs(
                covariance,
                num_sources,
                EIGEN_TOLERANCE,
                EIGEN_MAX_ITERATIONS,
            )?;
            Ok(grid
                .iter()
                .map(|&angle| {
                    let a = steering_at(positions, k0, angle);
                    let captured: f64 = signal
                        .iter()
                        .map(|p| {
                            p.eigenvector
                                .iter()
                                .zip(a.entries())
                                .map(|(v, x)| v.conj() * x)
                                .sum::<Complex64>()
                                .norm_sqr()
                        })
                        .sum();
                    let residual = ((n - captured) / n).max(1e-12);
                    1.0 / residual
                })
                .collect())
        }
    }
}

/// Greedy selection of separated local maxima by descending value, lower angle
/// first on ties. Returns grid indices and whether padding was needed.
fn pick_peaks(grid: &[f64], values: &[f64], count: usize, min_separation: f64) -> (Vec<usize>, bool) {
    let last = values.len() - 1;
    let is_peak = |i: usize| {
        (i == 0 || values[i] > values[i - 1]) && (i == last || values[i] >= values[i + 1])
    };
    let by_value = |candidates: &mut Vec<usize>| {
        candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    };
    let separated = |chosen: &[usize], i: usize| {
        chosen
            .iter()
            .all(|&j| (grid[j] - grid[i]).abs() >= min_separation - 1e-9)
    };

    let mut peaks: Vec<usize> = (0..values.len()).filter(|&i| is_peak(i)).collect();
    by_value(&mut peaks);
    let mut chosen = Vec::with_capacity(count);
    for i in peaks {
        if chosen.len() == count {
            break;
        }
        if separated(&chosen, i) {
            chosen.push(i);
        }
    }
    if chosen.len() == count {
        return (chosen, false);
    }

    let mut rest: Vec<usize> = (0..values.len()).filter(|i| !chosen.contains(i)).collect();
    by_value(&mut rest);
    for &i in &rest {
        if chosen.len() == count {
            break;
        }
        if separated(&chosen, i) {
            chosen.push(i);
        }
    }
    for &i in &rest {
        if chosen.len() == count {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    (chosen, true)
}
