use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

fn centered(traj: &Tensor3) -> DMatrix<f64> {
    let mut x = traj.flatten_rows();
    let rows = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / rows;
        col.add_scalar_mut(-mean);
    }
    x
}

/// Orthonormal basis (samples x k) of the top singular directions
/// carrying `threshold` of the variance.
fn top_subspace(x: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    let svd = crate::training::svd(x)?;
    let u = svd.u.as_ref().expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let var: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let total: f64 = var.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("representation has zero variance"));
    }
    let top = var[0];
    let mut acc = 0.0;
    let mut k = 0;
    for v in &var {
        if acc >= threshold * total * (1.0 - 1e-12) || *v <= top * 1e-20 {
            break;
        }
        acc += v;
        k += 1;
    }
    Ok(DMatrix::from_fn(x.nrows(), k, |r, c| u[(r, order[c])]))
}

/// Canonical correlations between the 99%-variance subspaces of two
/// representations sampled on the same inputs.
pub fn svcca_correlations(h1: &Tensor3, h2: &Tensor3, threshold: f64) -> Result<Vec<f64>> {
    let samples = h1.batch() * h1.time();
    if h2.batch() * h2.time() != samples {
        return Err(Error::invalid("representations must share the sample axis"));
    }
    let (x1, x2) = (centered(h1), centered(h2));
    let max_k = x1.ncols().max(x2.ncols());
    if samples < max_k {
        return Err(Error::invalid(format!(
            "{samples} samples cannot support {max_k} retained dimensions"
        )));
    }
    let u1 = top_subspace(&x1, threshold)?;
    let u2 = top_subspace(&x2, threshold)?;
    let cross = u1.tr_mul(&u2);
    let s = crate::training::svd(&cross)?.singular_values;
    let mut rho: Vec<f64> = s.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    rho.truncate(u1.ncols().min(u2.ncols()));
    Ok(rho)
}

/// `1 - mean canonical correlation` at the 99% variance cut.
pub fn svcca_distance(h1: &Tensor3, h2: &Tensor3) -> Result<f64> {
    let rho = svcca_correlations(h1, h2, 0.99)?;
    Ok(1.0 - rho.iter().sum::<f64>() / rho.len() as f64)
}
