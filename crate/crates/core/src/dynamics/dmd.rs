use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

use super::DsaConfig;

/// Least-squares linear map between successive delay embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOperator {
    pub a: DMatrix<f64>,
    pub lag: usize,
    /// `||Y - X A^T||_F / ||Y||_F` on the fitting data.
    pub residual: f64,
}

impl ForwardOperator {
    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    /// Delay-embed `z` at `lag` and fit.
    pub fn fit(z: &Tensor3, lag: usize) -> Result<Self> {
        let (x, y) = delay_embed(z, lag)?;
        let (a, residual) = fit_dmd(&x, &y)?;
        Ok(Self { a, lag, residual })
    }
}

/// Stack `lag` frames per row: `[z_t, z_{t-1}, .., z_{t-lag+1}]`.
///
/// `X` holds the embedding at `t`, `Y` at `t + 1`; each trial contributes
/// `time - lag` rows and rows never straddle two trials.
pub fn delay_embed(z: &Tensor3, lag: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let [trials, time, k] = z.dims();
    if lag == 0 || lag >= time {
        return Err(Error::invalid(format!("lag {lag} must lie in [1, {time})")));
    }
    let per_trial = time - lag;
    let rows = trials * per_trial;
    let width = k * lag;
    let mut x = DMatrix::zeros(rows, width);
    let mut y = DMatrix::zeros(rows, width);
    for b in 0..trials {
        for s in 0..per_trial {
            let t = s + lag - 1;
            let r = b * per_trial + s;
            for d in 0..lag {
                let now = z.frame(b, t - d);
                let next = z.frame(b, t + 1 - d);
                for c in 0..k {
                    x[(r, d * k + c)] = now[c];
                    y[(r, d * k + c)] = next[c];
                }
            }
        }
    }
    Ok((x, y))
}

/// `A = (pinv(X) Y)^T`, with singular values below `1e-10 * sigma_max` dropped.
///
/// Returns the operator and the normalized residual.
pub fn fit_dmd(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (m, p) = x.shape();
    if y.shape() != (m, p) {
        return Err(Error::invalid("X and Y must have the same shape"));
    }
    if m < p {
        return Err(Error::invalid(format!(
            "{m} samples cannot determine a {p}-dimensional operator"
        )));
    }
    // Reduce to p x p through QR before the SVD.
    let qr = x.clone().qr();
    let r = qr.r();
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, p).into_owned();

    let svd = crate::training::svd(&r)?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let s_max = svd.singular_values.max();
    let cutoff = 1e-10 * s_max;
    let mut ut_qty = u.tr_mul(&qty);
    for (i, s) in svd.singular_values.iter().enumerate() {
        let inv = if *s > cutoff && *s > 0.0 { 1.0 / s } else { 0.0 };
        ut_qty.row_mut(i).scale_mut(inv);
    }
    let a_t = v_t.tr_mul(&ut_qty);

    let fitted = x * &a_t;
    let y_norm = y.norm();
    let residual = if y_norm > 0.0 {
        (y - fitted).norm() / y_norm
    } else {
        0.0
    };
    let a = a_t.transpose();
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("fit_dmd", "non-finite operator"));
    }
    Ok((a, residual))
}

/// Residual of the DMD fit at each lag in the configured range.
pub fn lag_curve(z: &Tensor3, cfg: &DsaConfig) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    if cfg.lag_max >= z.time() {
        return Err(Error::invalid(format!(
            "lag_max {} needs trajectories longer than {} steps",
            cfg.lag_max,
            z.time()
        )));
    }
    (cfg.lag_min..=cfg.lag_max)
        .map(|lag| Ok((lag, ForwardOperator::fit(z, lag)?.residual)))
        .collect()
}

/// Lag with the smallest normalized residual; near-ties go to the smaller lag.
pub fn choose_lag(z: &Tensor3, cfg: &DsaConfig) -> Result<usize> {
    let curve = lag_curve(z, cfg)?;
    let best = curve.iter().map(|&(_, r)| r).fold(f64::INFINITY, f64::min);
    let slack = best * 1e-9 + 1e-12;
    Ok(curve
        .iter()
        .find(|&&(_, r)| r <= best + slack)
        .map(|&(lag, _)| lag)
        .expect("curve is non-empty"))
}
