//! Order-deterministic arithmetic on flat parameter vectors.
//!
//! Aggregation rules and metrics all reduce to a handful of operations on
//! dense f64 vectors. Accumulation order is fixed by the input order, so
//! callers that need permutation invariance canonicalize by client index
//! before calling in here.

use crate::error::{Error, Result};

/// Flat dense vector of model parameters. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    values: Vec<f64>,
}

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParamVec { values })
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVec {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Deref for ParamVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

fn check_same_dims(vecs: &[ParamVec]) -> Result<usize> {
    let dim = vecs[0].dim();
    for v in &vecs[1..] {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    Ok(dim)
}

/// `out[k] = sum_j weights[j] * vecs[j][k]`, accumulated in input order.
pub fn weighted_sum(vecs: &[ParamVec], weights: &[f64]) -> Result<ParamVec> {
    if vecs.is_empty() {
        return Err(Error::EmptyInput("weighted_sum"));
    }
    if vecs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: vecs.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidParameter(
            "weighted_sum requires at least one nonzero weight".into(),
        ));
    }
    let dim = check_same_dims(vecs)?;
    let mut out = vec![0.0; dim];
    for (v, &w) in vecs.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(v.as_slice()) {
            *o += w * x;
        }
    }
    ParamVec::new(out)
}

/// Coordinate-wise median; even counts take the midpoint of the middle two.
pub fn coord_median(vecs: &[ParamVec]) -> Result<ParamVec> {
    if vecs.is_empty() {
        return Err(Error::EmptyInput("coord_median"));
    }
    let dim = check_same_dims(vecs)?;
    let m = vecs.len();
    let mut out = vec![0.0; dim];
    let mut column = vec![0.0; m];
    for k in 0..dim {
        for (j, v) in vecs.iter().enumerate() {
            column[j] = v[k];
        }
        column.sort_unstable_by(f64::total_cmp);
        out[k] = if m % 2 == 1 {
            column[m / 2]
        } else {
            0.5 * (column[m / 2 - 1] + column[m / 2])
        };
    }
    ParamVec::new(out)
}

/// Coordinate-wise mean after dropping the `k = floor(trim_frac * m)`
/// smallest and largest order statistics.
pub fn coord_trimmed_mean(vecs: &[ParamVec], trim_frac: f64) -> Result<ParamVec> {
    if vecs.is_empty() {
        return Err(Error::EmptyInput("coord_trimmed_mean"));
    }
    if !(0.0..0.5).contains(&trim_frac) {
        return Err(Error::InvalidParameter(format!(
            "trim_frac must be in [0, 0.5), got {trim_frac}"
        )));
    }
    let dim = check_same_dims(vecs)?;
    let m = vecs.len();
    let k = (trim_frac * m as f64).floor() as usize;
    if 2 * k >= m {
        return Err(Error::InvalidParameter(format!(
            "trim removes all inputs: 2*{k} >= {m}"
        )));
    }
    let kept = (m - 2 * k) as f64;
    let mut out = vec![0.0; dim];
    let mut column = vec![0.0; m];
    for c in 0..dim {
        for (j, v) in vecs.iter().enumerate() {
            column[j] = v[c];
        }
        column.sort_unstable_by(f64::total_cmp);
        out[c] = column[k..m - k].iter().sum::<f64>() / kept;
    }
    ParamVec::new(out)
}

/// Euclidean distance.
pub fn l2_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Maximum coordinate-wise absolute difference.
pub fn linf_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}
