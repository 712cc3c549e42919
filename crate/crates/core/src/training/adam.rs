use crate::rnn::{Gradients, RnnParams};

/// Bias-corrected Adam without weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &RnnParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut RnnParams, grads: &Gradients, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut());
        for (((p, g), m), v) in blocks {
            adam_update(p, g, m, v, [b1, b2, eps], [c1, c2], lr);
        }
    }
}

/// One Adam update of a flat block; `corr` holds the bias corrections
/// `1 - beta^t`.
pub(crate) fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    [b1, b2, eps]: [f64; 3],
    [c1, c2]: [f64; 2],
    lr: f64,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::Parameterization;
    use nalgebra::{DMatrix, DVector};

    fn scalar_params(w: f64) -> RnnParams {
        RnnParams::from_blocks(
            DMatrix::from_element(1, 1, w),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            Parameterization::Standard,
        )
        .unwrap()
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = scalar_params(0.0);
        let mut g = Gradients::zeros_like(&p);
        g.w_h[(0, 0)] = 1.0;
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &g, 0.001);
        let want = -0.001 / (1.0 + 1e-8);
        assert!((p.w_h[(0, 0)] - want).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_params(0.7);
        let before = p.flatten();
        let g = Gradients::zeros_like(&p);
        let mut opt = Adam::new(&p);
        for _ in 0..50 {
            opt.step(&mut p, &g, 0.1);
        }
        assert_eq!(p.flatten(), before);
    }

    #[test]
    fn minimises_a_quadratic() {
        // f(w) = w^2 from w = 1; reference scalar simulation.
        let mut p = scalar_params(1.0);
        let mut opt = Adam::new(&p);
        let (mut w_ref, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for k in 1..=200 {
            let mut g = Gradients::zeros_like(&p);
            g.w_h[(0, 0)] = 2.0 * p.w_h[(0, 0)];
            opt.step(&mut p, &g, 0.01);

            let gr = 2.0 * w_ref;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(k));
            let vh = v / (1.0 - 0.999f64.powi(k));
            w_ref -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!(p.w_h[(0, 0)].abs() < 0.5);
        assert!((p.w_h[(0, 0)] - w_ref).abs() < 1e-12);
    }
}
