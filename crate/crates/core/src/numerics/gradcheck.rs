//! Central finite-difference oracle for analytic gradients.

use super::Matrix;
use crate::error::{Error, Result};

fn check_step(step: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::invalid(format!("finite-difference step {step} outside [1e-7, 1e-3]")));
    }
    Ok(())
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("grad_check"))
    }
}

/// Compares the analytic gradient returned by `f` against central differences
/// at every coordinate of `point`.
///
/// Returns `max |analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, point: &Matrix, step: f64) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<(f64, Matrix)>,
{
    check_step(step)?;
    let (value, analytic) = f(point)?;
    finite(value)?;
    if analytic.shape() != point.shape() {
        return Err(Error::shape("analytic gradient shape differs from point"));
    }
    let mut probe = point.clone();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = finite(f(&probe)?.0)?;
        probe.data_mut()[i] = orig - step;
        let minus = finite(f(&probe)?.0)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = finite(analytic.data()[i])?;
        worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}

/// Coordinate of a scalar inside a list of matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coordinate {
    pub matrix: usize,
    pub offset: usize,
}

/// Same measure as [`grad_check`] for a function of several matrices,
/// restricted to the listed coordinates.
pub fn grad_check_coordinates<F>(
    value_fn: F,
    point: &[Matrix],
    analytic: &[Matrix],
    coords: &[Coordinate],
    step: f64,
) -> Result<f64>
where
    F: Fn(&[Matrix]) -> Result<f64>,
{
    check_step(step)?;
    if point.len() != analytic.len()
        || point.iter().zip(analytic).any(|(p, a)| p.shape() != a.shape())
    {
        return Err(Error::shape("analytic gradients do not match the point"));
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for c in coords {
        let orig = probe[c.matrix].data()[c.offset];
        probe[c.matrix].data_mut()[c.offset] = orig + step;
        let plus = finite(value_fn(&probe)?)?;
        probe[c.matrix].data_mut()[c.offset] = orig - step;
        let minus = finite(value_fn(&probe)?)?;
        probe[c.matrix].data_mut()[c.offset] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = finite(analytic[c.matrix].data()[c.offset])?;
        worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}

/// Every coordinate of every matrix.
pub fn all_coordinates(point: &[Matrix]) -> Vec<Coordinate> {
    point
        .iter()
        .enumerate()
        .flat_map(|(m, mat)| (0..mat.len()).map(move |offset| Coordinate { matrix: m, offset }))
        .collect()
}
