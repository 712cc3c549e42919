use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural penalties on the recurrent matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularizer {
    /// Weight of the nuclear norm (sum of singular values).
    #[serde(default)]
    pub lambda_rank: f64,
    /// Weight of the elementwise absolute sum.
    #[serde(default)]
    pub lambda_l1: f64,
}

impl Regularizer {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_active(&self) -> bool {
        self.lambda_rank != 0.0 || self.lambda_l1 != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_rank", self.lambda_rank), ("lambda_l1", self.lambda_l1)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Total penalty on `w` and its (sub)gradient.
    pub fn apply(&self, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let (rank_value, mut grad) = nuclear_penalty(w, self.lambda_rank)?;
        let (l1_value, l1_grad) = l1_penalty(w, self.lambda_l1);
        grad += l1_grad;
        Ok((rank_value + l1_value, grad))
    }
}

pub(crate) fn svd(w: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(w.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("svd", "singular value decomposition did not converge"))
}

pub fn nuclear_norm(w: &DMatrix<f64>) -> Result<f64> {
    Ok(svd(w)?.singular_values.sum())
}

/// `lambda * sum_i sigma_i(w)` and the subgradient `lambda * U V^T`.
pub fn nuclear_penalty(w: &DMatrix<f64>, lambda: f64) -> Result<(f64, DMatrix<f64>)> {
    if lambda == 0.0 {
        return Ok((0.0, DMatrix::zeros(w.nrows(), w.ncols())));
    }
    let dec = svd(w)?;
    let u = dec.u.as_ref().expect("requested U");
    let v_t = dec.v_t.as_ref().expect("requested V^T");
    let value = lambda * dec.singular_values.sum();
    let mut grad = u * v_t;
    grad *= lambda;
    Ok((value, grad))
}

/// `lambda * sum |w_ij|` and the subgradient `lambda * sign(w)` with `sign(0) = 0`.
pub fn l1_penalty(w: &DMatrix<f64>, lambda: f64) -> (f64, DMatrix<f64>) {
    if lambda == 0.0 {
        return (0.0, DMatrix::zeros(w.nrows(), w.ncols()));
    }
    let value = lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    let grad = w.map(|v| {
        if v > 0.0 {
            lambda
        } else if v < 0.0 {
            -lambda
        } else {
            0.0
        }
    });
    (value, grad)
}
