use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// `sum(mask * (y - target)^2) / sum(mask)`.
pub fn masked_mse(outputs: &Tensor3, targets: &Tensor3, mask: &Tensor3) -> Result<f64> {
    if outputs.dims() != targets.dims() || outputs.dims() != mask.dims() {
        return Err(Error::invalid(format!(
            "shape mismatch: outputs {:?}, targets {:?}, mask {:?}",
            outputs.dims(),
            targets.dims(),
            mask.dims()
        )));
    }
    let weight: f64 = mask.data().iter().sum();
    if weight == 0.0 {
        return Err(Error::invalid("loss mask is all zero"));
    }
    let sse: f64 = outputs
        .data()
        .iter()
        .zip(targets.data())
        .zip(mask.data())
        .map(|((y, t), m)| m * (y - t) * (y - t))
        .sum();
    Ok(sse / weight)
}

/// Loss and its gradient with respect to per-step outputs (`p x B` each).
pub(crate) fn masked_mse_with_grad(
    outputs: &[DMatrix<f64>],
    targets: &Tensor3,
    mask: &Tensor3,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let [batch, t_len, p] = targets.dims();
    if outputs.len() != t_len || mask.dims() != targets.dims() {
        return Err(Error::invalid("outputs, targets and mask disagree in shape"));
    }
    let weight: f64 = mask.data().iter().sum();
    if weight == 0.0 {
        return Err(Error::invalid("loss mask is all zero"));
    }
    let mut sse = 0.0;
    let grads = outputs
        .iter()
        .enumerate()
        .map(|(t, y)| {
            let mut g = DMatrix::zeros(p, batch);
            for b in 0..batch {
                let tgt = targets.frame(b, t);
                let m = mask.frame(b, t);
                for c in 0..p {
                    let r = y[(c, b)] - tgt[c];
                    sse += m[c] * r * r;
                    g[(c, b)] = 2.0 * m[c] * r / weight;
                }
            }
            g
        })
        .collect();
    Ok((sse / weight, grads))
}
