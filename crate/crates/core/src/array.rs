//! Linear-array response math.
//!
//! Elements sit on a line at coordinates `x_n` (meters). A plane wave arriving
//! at angle `theta` from the array axis produces the steering entry
//! `exp(j * 2*pi/lambda * x_n * cos(theta))`. For unit-norm weights `w` the
//! sum beam gain over a set of users is `sum_k |w^H a(theta_k)|^2 = w^H A w`
//! with `A = sum_k a_k a_k^H`, so the best weights are the dominant
//! eigenvector of `A`.

use std::f64::consts::PI;
use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default carrier wavelength in meters (2.4 GHz).
pub const DEFAULT_WAVELENGTH: f64 = 0.125;
/// Default number of movable elements.
pub const DEFAULT_NUM_ELEMENTS: usize = 8;

/// Slack allowed on spacing and bound checks.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

/// Power iteration stopping tolerance (relative residual).
pub const EIGEN_TOLERANCE: f64 = 1e-10;
/// Power iteration budget.
pub const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Linear gains below this report a `-inf` dB value.
const DB_FLOOR_LINEAR: f64 = 1e-300;

const WEIGHT_NORM_TOLERANCE: f64 = 1e-9;

/// Physical limits for element placement, shared by every geometry built on them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConstraints {
    pub wavelength: f64,
    pub num_elements: usize,
    pub min_spacing: f64,
    /// Symmetric bound: every element satisfies `|x| <= position_bound`.
    pub position_bound: f64,
}

impl Default for ArrayConstraints {
    fn default() -> Self {
        Self::for_wavelength(DEFAULT_WAVELENGTH, DEFAULT_NUM_ELEMENTS)
    }
}

impl ArrayConstraints {
    /// Half-wavelength minimum spacing within a +/- 5 wavelength window.
    pub fn for_wavelength(wavelength: f64, num_elements: usize) -> Self {
        Self {
            wavelength,
            num_elements,
            min_spacing: wavelength / 2.0,
            position_bound: 5.0 * wavelength,
        }
    }

    /// Checks scalar sanity and that at least one placement satisfies the constraints.
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::Validation(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if self.num_elements == 0 {
            return Err(Error::Validation("num_elements must be at least 1".into()));
        }
        if !(self.min_spacing.is_finite() && self.min_spacing >= 0.0) {
            return Err(Error::Validation(format!(
                "min_spacing must be non-negative, got {}",
                self.min_spacing
            )));
        }
        if !(self.position_bound.is_finite() && self.position_bound >= 0.0) {
            return Err(Error::Validation(format!(
                "position_bound must be non-negative, got {}",
                self.position_bound
            )));
        }
        let span = (self.num_elements - 1) as f64 * self.min_spacing;
        if span > 2.0 * self.position_bound {
            return Err(Error::Configuration(format!(
                "min_spacing {} m for {} elements needs a span of {} m but the window is only {} m wide",
                self.min_spacing,
                self.num_elements,
                span,
                2.0 * self.position_bound
            )));
        }
        Ok(())
    }

    /// Uniformly spaced positions centered at zero.
    ///
    /// The pitch is half a wavelength, widened to `min_spacing` when that is
    /// larger and shrunk to fit the window when necessary.
    pub fn uniform_positions(&self) -> Vec<f64> {
        let n = self.num_elements;
        let mut pitch = (self.wavelength / 2.0).max(self.min_spacing);
        if n > 1 {
            pitch = pitch.min(2.0 * self.position_bound / (n - 1) as f64);
        }
        let center = (n as f64 - 1.0) / 2.0;
        (0..n).map(|i| (i as f64 - center) * pitch).collect()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Element placement for a linear array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    constraints: ArrayConstraints,
    positions: Vec<f64>,
}

impl ArrayGeometry {
    pub fn new(constraints: ArrayConstraints, positions: Vec<f64>) -> Result<Self> {
        constraints.validate()?;
        if positions.len() != constraints.num_elements {
            return Err(Error::Validation(format!(
                "expected {} positions, got {}",
                constraints.num_elements,
                positions.len()
            )));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Validation(format!("position {i} is not finite")));
            }
            if p.abs() > constraints.position_bound + FEASIBILITY_TOLERANCE {
                return Err(Error::Validation(format!(
                    "position {i} = {p} m exceeds the bound {} m",
                    constraints.position_bound
                )));
            }
        }
        for (i, pair) in positions.windows(2).enumerate() {
            let gap = pair[1] - pair[0];
            if gap < constraints.min_spacing - FEASIBILITY_TOLERANCE {
                return Err(Error::Validation(format!(
                    "elements {i} and {} are {gap} m apart, below the minimum spacing {} m",
                    i + 1,
                    constraints.min_spacing
                )));
            }
        }
        Ok(Self {
            constraints,
            positions,
        })
    }

    /// The uniform reference array for `constraints`.
    pub fn uniform(constraints: ArrayConstraints) -> Result<Self> {
        constraints.validate()?;
        Self::new(constraints, constraints.uniform_positions())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn constraints(&self) -> &ArrayConstraints {
        &self.constraints
    }

    pub fn wavelength(&self) -> f64 {
        self.constraints.wavelength
    }

    pub fn num_elements(&self) -> usize {
        self.positions.len()
    }

    /// Positions expressed in wavelengths.
    pub fn positions_in_wavelengths(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|p| p / self.constraints.wavelength)
            .collect()
    }
}

/// Arrival angles in degrees from the array axis, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DoaSet(Vec<f64>);

impl DoaSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::Validation("at least one arrival angle is required".into()));
        }
        for &a in &angles {
            check_angle(a)?;
        }
        for i in 0..angles.len() {
            for j in (i + 1)..angles.len() {
                if angles[i] == angles[j] {
                    return Err(Error::Validation(format!(
                        "arrival angles must be distinct, {} appears twice",
                        angles[i]
                    )));
                }
            }
        }
        Ok(Self(angles))
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for DoaSet {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DoaSet> for Vec<f64> {
    fn from(value: DoaSet) -> Self {
        value.0
    }
}

fn check_angle(angle_deg: f64) -> Result<()> {
    if angle_deg.is_finite() && angle_deg > 0.0 && angle_deg < 180.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "angle {angle_deg} deg is outside the open interval (0, 180)"
        )))
    }
}

/// Array response to a unit plane wave. Every entry has unit magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for SteeringVector {
    type Output = Complex64;

    fn index(&self, index: usize) -> &Complex64 {
        &self.0[index]
    }
}

/// Unit-norm beamforming weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct Weights(Vec<Complex64>);

impl Weights {
    /// Accepts a vector whose Euclidean norm is already 1 (within 1e-9).
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&entries);
        if (norm - 1.0).abs() > WEIGHT_NORM_TOLERANCE {
            return Err(Error::Validation(format!(
                "weights must have unit norm, got {norm}"
            )));
        }
        Ok(Self(entries))
    }

    /// Scales `entries` to unit norm.
    pub fn normalized(entries: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&entries);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Validation(
                "cannot normalize a zero or non-finite weight vector".into(),
            ));
        }
        Ok(Self(entries.into_iter().map(|z| z / norm).collect()))
    }

    /// Matched-filter weights `a / ||a||`.
    pub fn matched(steering: &SteeringVector) -> Self {
        Self::normalized(steering.0.clone()).expect("steering vectors have unit-magnitude entries")
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `w^H a`.
    pub fn response(&self, steering: &SteeringVector) -> Complex64 {
        self.0
            .iter()
            .zip(&steering.0)
            .map(|(w, a)| w.conj() * a)
            .sum()
    }

    /// Multiplies every entry by a unit-modulus phase.
    pub fn rotated(&self, phase: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        Self(self.0.iter().map(|z| z * rot).collect())
    }
}

impl TryFrom<Vec<Complex64>> for Weights {
    type Error = Error;

    fn try_from(value: Vec<Complex64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Weights> for Vec<Complex64> {
    fn from(value: Weights) -> Self {
        value.0
    }
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    size: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Validates that `data` (row-major, `size * size`) equals its conjugate transpose.
    pub fn new(size: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::Validation(format!(
                "expected {} entries for a {size}x{size} matrix, got {}",
                size * size,
                data.len()
            )));
        }
        let scale = data.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for i in 0..size {
            for j in i..size {
                let diff = (data[i * size + j] - data[j * size + i].conj()).norm();
                if diff > 1e-12 * scale {
                    return Err(Error::Validation(format!(
                        "matrix is not Hermitian at ({i}, {j}): mismatch {diff:.3e}"
                    )));
                }
            }
        }
        Ok(Self { size, data })
    }

    /// Builds the matrix from its upper triangle; the lower triangle is mirrored
    /// so the result is Hermitian by construction.
    pub(crate) fn from_upper(size: usize, mut upper: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); size * size];
        for i in 0..size {
            let d = upper(i, i);
            data[i * size + i] = Complex64::new(d.re, 0.0);
            for j in (i + 1)..size {
                let z = upper(i, j);
                data[i * size + j] = z;
                data[j * size + i] = z.conj();
            }
        }
        Self { size, data }
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![Complex64::new(0.0, 0.0); size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        Self::from_upper(size, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.size + col]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.size).map(|i| self.get(i, i).re).sum()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(v.len(), self.size);
        self.data
            .chunks_exact(self.size)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `v^H M v`, real for Hermitian `M`.
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        let mv = self.mul_vec(v);
        v.iter().zip(&mv).map(|(a, b)| (a.conj() * b).re).sum()
    }

    fn squared_normalized(&self) -> Self {
        let n = self.size;
        let mut out = Self::from_upper(n, |i, j| {
            (0..n).map(|k| self.get(i, k) * self.get(k, j)).sum()
        });
        let scale = out.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale > 0.0 {
            out.data.iter_mut().for_each(|z| *z /= scale);
        }
        out
    }

    /// `M - lambda v v^H`.
    fn deflated(&self, eigenvalue: f64, v: &[Complex64]) -> Self {
        Self::from_upper(self.size, |i, j| {
            self.get(i, j) - eigenvalue * v[i] * v[j].conj()
        })
    }
}

/// Result of [`principal_eigenpair`].
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub eigenvalue: f64,
    pub eigenvector: Vec<Complex64>,
    pub iterations: usize,
}

/// Steering vector for `geometry` at `angle_deg` degrees from the array axis.
pub fn steering_vector(geometry: &ArrayGeometry, angle_deg: f64) -> Result<SteeringVector> {
    check_angle(angle_deg)?;
    Ok(steering_at(
        geometry.positions(),
        geometry.constraints.wavenumber(),
        angle_deg,
    ))
}

pub(crate) fn steering_at(positions: &[f64], wavenumber: f64, angle_deg: f64) -> SteeringVector {
    let spatial = wavenumber * angle_deg.to_radians().cos();
    SteeringVector(
        positions
            .iter()
            .map(|x| Complex64::from_polar(1.0, spatial * x))
            .collect(),
    )
}

/// `A = sum_k a(theta_k) a(theta_k)^H`.
pub fn gain_matrix(geometry: &ArrayGeometry, doas: &DoaSet) -> Result<HermitianMatrix> {
    let steering = doas
        .angles()
        .iter()
        .map(|&a| steering_vector(geometry, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(HermitianMatrix::from_upper(geometry.num_elements(), |i, j| {
        steering.iter().map(|a| a[i] * a[j].conj()).sum()
    }))
}

/// Sum beam gain in linear units and dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGain {
    pub linear: f64,
    pub db: f64,
}

impl BeamGain {
    pub fn from_linear(linear: f64) -> Self {
        Self {
            linear,
            db: linear_to_db(linear),
        }
    }
}

/// `10 log10(linear)`, or `-inf` for gains below 1e-300.
pub fn linear_to_db(linear: f64) -> f64 {
    if linear < DB_FLOOR_LINEAR {
        f64::NEG_INFINITY
    } else {
        10.0 * linear.log10()
    }
}

/// `sum_k |w^H a(theta_k)|^2`.
pub fn sum_beam_gain(geometry: &ArrayGeometry, weights: &Weights, doas: &DoaSet) -> Result<BeamGain> {
    if weights.len() != geometry.num_elements() {
        return Err(Error::Validation(format!(
            "weight vector has {} entries but the array has {} elements",
            weights.len(),
            geometry.num_elements()
        )));
    }
    let mut linear = 0.0;
    for &angle in doas.angles() {
        let a = steering_vector(geometry, angle)?;
        linear += weights.response(&a).norm_sqr();
    }
    Ok(BeamGain::from_linear(linear))
}

/// Dominant eigenpair of a Hermitian positive semidefinite matrix by power iteration.
///
/// Starts from `[1, 0, ..., 0]` plus `1e-3` on every entry and stops once
/// `||A v - lambda v|| <= tolerance * lambda`. If the plain iteration has not
/// settled after 64 steps the iteration matrix is squared (and renormalized),
/// which raises the eigenvalue ratio to the next power of two while leaving
/// the eigenvectors alone; the residual is always measured against `matrix`.
///
/// The returned vector is unit norm with its first non-negligible entry real
/// and non-negative.
pub fn principal_eigenpair(
    matrix: &HermitianMatrix,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Eigenpair> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let n = matrix.size();
    if n == 0 {
        return Err(Error::Validation("empty matrix".into()));
    }
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(if i == 0 { 1.001 } else { 1e-3 }, 0.0))
        .collect();
    normalize_in_place(&mut v);

    let mut iteration_matrix: Option<HermitianMatrix> = None;
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iterations {
        let av = matrix.mul_vec(&v);
        let eigenvalue: f64 = v.iter().zip(&av).map(|(a, b)| (a.conj() * b).re).sum();
        residual = av
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - eigenvalue * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if residual <= tolerance * eigenvalue.max(0.0) {
            fix_phase(&mut v);
            return Ok(Eigenpair {
                eigenvalue,
                eigenvector: v,
                iterations: iteration,
            });
        }
        if iteration % 64 == 0 {
            let base = iteration_matrix.as_ref().unwrap_or(matrix);
            iteration_matrix = Some(base.squared_normalized());
        }
        let mut next = match &iteration_matrix {
            Some(m) => m.mul_vec(&v),
            None => av,
        };
        if l2_norm(&next) == 0.0 {
            break;
        }
        normalize_in_place(&mut next);
        v = next;
    }
    Err(Error::Convergence {
        iterations: max_iterations,
        residual,
    })
}

/// The `count` largest eigenpairs by repeated deflation.
pub fn leading_eigenpairs(
    matrix: &HermitianMatrix,
    count: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<Eigenpair>> {
    let mut current = matrix.clone();
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count.min(matrix.size()) {
        let pair = principal_eigenpair(&current, tolerance, max_iterations)?;
        current = current.deflated(pair.eigenvalue, &pair.eigenvector);
        pairs.push(pair);
    }
    Ok(pairs)
}

fn normalize_in_place(v: &mut [Complex64]) {
    let norm = l2_norm(v);
    v.iter_mut().for_each(|z| *z /= norm);
}

fn fix_phase(v: &mut [Complex64]) {
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-9).copied() {
        let rot = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
}
