//! Feature-learning measures: weight change, empirical NTK alignment and
//! representation alignment.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rnn::{Gradients, RnnParams};
use crate::tensor::Tensor3;

/// `||W_T - W_0||_F`, divided by the number of entries when `normalize`.
pub fn weight_change_norm(w_t: &DMatrix<f64>, w_0: &DMatrix<f64>, normalize: bool) -> Result<f64> {
    if w_t.shape() != w_0.shape() {
        return Err(Error::invalid("weight matrices differ in shape"));
    }
    let d = (w_t - w_0).norm();
    Ok(if normalize { d / w_t.len() as f64 } else { d })
}

/// Which parameter blocks contribute to the NTK gradient vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamMask {
    pub w_h: bool,
    pub w_x: bool,
    pub b: bool,
    pub w_out: bool,
    pub b_out: bool,
}

impl ParamMask {
    pub fn all() -> Self {
        Self {
            w_h: true,
            w_x: true,
            b: true,
            w_out: true,
            b_out: true,
        }
    }

    /// Weight matrices only, no biases.
    pub fn weights() -> Self {
        Self {
            w_h: true,
            w_x: true,
            b: false,
            w_out: true,
            b_out: false,
        }
    }

    pub fn readout_weights() -> Self {
        Self {
            w_h: false,
            w_x: false,
            b: false,
            w_out: true,
            b_out: false,
        }
    }

    fn flags(&self) -> [bool; 5] {
        [self.w_h, self.w_x, self.b, self.w_out, self.b_out]
    }
}

impl Default for ParamMask {
    fn default() -> Self {
        Self::all()
    }
}

/// Time step(s) at which the outputs are differentiated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NtkStep {
    #[default]
    Final,
    At(usize),
    /// Mean of the per-step kernels.
    Average,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    /// Rows and columns indexed `sample * outputs + channel`.
    pub k: DMatrix<f64>,
    pub probe_id: u64,
}

fn masked_flat(g: &Gradients, mask: ParamMask) -> Vec<f64> {
    g.blocks()
        .into_iter()
        .zip(mask.flags())
        .filter(|(_, keep)| *keep)
        .flat_map(|(b, _)| b.iter().copied())
        .collect()
}

fn single_trial(inputs: &Tensor3, b: usize) -> Tensor3 {
    let [_, t, m] = inputs.dims();
    let start = b * t * m;
    Tensor3::from_vec([1, t, m], inputs.data()[start..start + t * m].to_vec()).expect("slice has the trial's size")
}

/// Per-sample, per-channel output gradients at step `t`, as rows.
pub fn output_jacobian(params: &RnnParams, inputs: &Tensor3, t: usize, mask: ParamMask) -> Result<DMatrix<f64>> {
    let [batch, t_len, _] = inputs.dims();
    if t >= t_len {
        return Err(Error::invalid(format!("step {t} outside trials of length {t_len}")));
    }
    let p = params.output_dim();
    let mut rows = Vec::with_capacity(batch * p);
    for b in 0..batch {
        let cache = params.unroll(&single_trial(inputs, b))?;
        for c in 0..p {
            let mut seeds: Vec<DMatrix<f64>> = (0..t_len).map(|_| DMatrix::zeros(p, 1)).collect();
            seeds[t][(c, 0)] = 1.0;
            let g = params.backprop(&cache, &seeds);
            rows.push(masked_flat(&g, mask));
        }
    }
    let width = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(batch * p, width, &flat))
}

/// Empirical NTK `K = J J^T` on a fixed probe batch.
pub fn empirical_ntk(params: &RnnParams, probe: &Tensor3, probe_id: u64, step: NtkStep, mask: ParamMask) -> Result<KernelMatrix> {
    let t_len = probe.time();
    let k = match step {
        NtkStep::Final => gram(&output_jacobian(params, probe, t_len - 1, mask)?),
        NtkStep::At(t) => gram(&output_jacobian(params, probe, t, mask)?),
        NtkStep::Average => {
            let mut acc = gram(&output_jacobian(params, probe, 0, mask)?);
            for t in 1..t_len {
                acc += gram(&output_jacobian(params, probe, t, mask)?);
            }
            acc / t_len as f64
        }
    };
    if !k.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("empirical_ntk", "non-finite kernel"));
    }
    Ok(KernelMatrix { k, probe_id })
}

fn gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    j * j.transpose()
}

fn normalized_trace(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("{what} matrices differ in shape")));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid(format!("{what} matrix has zero norm")));
    }
    // Tr(A B) without forming the product.
    let tr: f64 = a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum();
    Ok(tr / (na * nb))
}

/// `Tr(Kf K0) / (||Kf||_F ||K0||_F)`.
pub fn kernel_alignment(kf: &KernelMatrix, k0: &KernelMatrix) -> Result<f64> {
    if kf.probe_id != k0.probe_id {
        return Err(Error::invalid("kernels were computed on different probe batches"));
    }
    normalized_trace(&kf.k, &k0.k, "kernel")
}

/// Alignment of `R = H^T H` before and after training (no centering).
pub fn representation_alignment(h_t: &Tensor3, h_0: &Tensor3) -> Result<f64> {
    if h_t.dims() != h_0.dims() {
        return Err(Error::invalid("trajectories differ in shape"));
    }
    let (a, b) = (h_t.flatten_rows(), h_0.flatten_rows());
    normalized_trace(&a.tr_mul(&a), &b.tr_mul(&b), "representation")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn km(k: DMatrix<f64>) -> KernelMatrix {
        KernelMatrix { k, probe_id: 0 }
    }

    #[test]
    fn weight_change_examples() {
        let w = DMatrix::from_element(3, 3, 2.0);
        assert_eq!(weight_change_norm(&w, &w, false).unwrap(), 0.0);
        let w0 = DMatrix::from_element(3, 3, 1.0);
        assert!((weight_change_norm(&w, &w0, true).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn alignment_examples() {
        let k0 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!((kernel_alignment(&km(k0.clone()), &km(k0.clone())).unwrap() - 1.0).abs() < 1e-15);
        assert!((kernel_alignment(&km(&k0 * 2.0), &km(k0)).unwrap() - 1.0).abs() < 1e-15);
        let a = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        let b = DMatrix::from_diagonal(&nalgebra::dvector![0.0, 1.0]);
        assert_eq!(kernel_alignment(&km(b), &km(a)).unwrap(), 0.0);
    }

    #[test]
    fn zero_kernel_rejected() {
        let z = DMatrix::zeros(2, 2);
        assert!(kernel_alignment(&km(z.clone()), &km(DMatrix::identity(2, 2))).is_err());
    }

    #[test]
    fn probe_ids_must_match() {
        let a = KernelMatrix {
            k: DMatrix::identity(2, 2),
            probe_id: 1,
        };
        assert!(kernel_alignment(&a, &km(DMatrix::identity(2, 2))).is_err());
    }

    #[test]
    fn representation_alignment_by_hand() {
        let h1 = Tensor3::from_vec([1, 4, 2], vec![1.0, 0.0, 2.0, 1.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let h2 = Tensor3::from_vec([1, 4, 2], vec![1.0, 2.0, 0.0, 1.0, 3.0, 0.0, 1.0, -1.0]).unwrap();
        // R1 = [[6,3],[3,3]], R2 = [[11,1],[1,6]]
        let tr = 6.0 * 11.0 + 3.0 * 1.0 + 3.0 * 1.0 + 3.0 * 6.0;
        let n1 = (36.0f64 + 9.0 + 9.0 + 9.0).sqrt();
        let n2 = (121.0f64 + 1.0 + 1.0 + 36.0).sqrt();
        let got = representation_alignment(&h1, &h2).unwrap();
        assert!((got - tr / (n1 * n2)).abs() < 1e-12);
        let h3 = Tensor3::from_vec([1, 4, 2], h1.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!((representation_alignment(&h3, &h1).unwrap() - 1.0).abs() < 1e-12);
    }
}
