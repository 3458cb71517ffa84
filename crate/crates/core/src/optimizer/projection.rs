//! Euclidean projection onto the movable-element feasible set
//! `{x : x[n+1] - x[n] >= d, |x[n]| <= B}`.
//!
//! With `y[n] = x[n] - n*d` the spacing constraints become `y` nondecreasing and
//! the bounds collapse to `-B <= y <= B - (N-1)*d` (interior bounds are implied
//! by monotonicity). Projection onto a monotone cone intersected with a common
//! box is the clamped isotonic regression, computed here with
//! pool-adjacent-violators.

use crate::array::ArrayConstraints;
use crate::error::{Error, Result};

/// Projects `raw` onto the feasible placements described by `constraints`.
pub fn project_positions(raw: &[f64], constraints: &ArrayConstraints) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Validation("cannot project an empty position list".into()));
    }
    if raw.len() != constraints.num_elements {
        return Err(Error::Validation(format!(
            "expected {} positions, got {}",
            constraints.num_elements,
            raw.len()
        )));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("positions must be finite".into()));
    }
    constraints.validate()?;

    let d = constraints.min_spacing;
    let n = raw.len();
    let lower = -constraints.position_bound;
    let upper = constraints.position_bound - (n - 1) as f64 * d;

    let shifted: Vec<f64> = raw.iter().enumerate().map(|(i, x)| x - i as f64 * d).collect();
    let monotone = isotonic_nondecreasing(&shifted);
    Ok(monotone
        .into_iter()
        .enumerate()
        .map(|(i, y)| y.clamp(lower, upper) + i as f64 * d)
        .collect())
}

/// Least-squares nondecreasing fit with unit weights.
fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    // (sum, count) per pooled block
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(sum, count)| std::iter::repeat_n(sum / count as f64, count))
        .collect()
}
