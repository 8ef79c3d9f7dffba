//! Pure forward kernels. Their derivatives live in [`super::tape`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erf;

use super::Matrix;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if m.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Per-row statistics kept by layer norm for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct NormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_cached(
    x: &Matrix,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> Result<(Matrix, NormCache)> {
    let cols = x.cols();
    if gain.len() != cols || bias.len() != cols {
        return Err(Error::shape(format!(
            "layer_norm: gain/bias lengths {}/{} for {cols} columns",
            gain.len(),
            bias.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("layer_norm eps must be positive"));
    }
    let mut normalized = Matrix::zeros(x.rows(), cols);
    let mut out = Matrix::zeros(x.rows(), cols);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        let nrow = normalized.row_mut(r);
        for (n, v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * is;
        }
        let orow = out.row_mut(r);
        for c in 0..cols {
            orow[c] = normalized.get(r, c) * gain[c] + bias[c];
        }
    }
    Ok((
        out,
        NormCache {
            normalized,
            inv_std,
        },
    ))
}

/// Layer normalisation over each row followed by an affine gain/bias.
pub fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<Matrix> {
    layer_norm_cached(x, gain, bias, eps).map(|(out, _)| out)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x * FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
pub fn gelu_derivative(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn gelu(x: &Matrix) -> Matrix {
    x.map(gelu_scalar)
}
