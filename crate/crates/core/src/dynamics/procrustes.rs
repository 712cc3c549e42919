//! Minimize `||A - C B C^T||_F` over orthogonal `C`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng, Stream};

/// Solver settings for the orthogonal-conjugation search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacySolver {
    /// Random starts in addition to the identity.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once an iteration improves the objective by less than this
    /// fraction of its current value.
    pub tol: f64,
}

impl Default for ConjugacySolver {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 2000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conjugacy {
    pub distance: f64,
    pub rotation: DMatrix<f64>,
    /// False if the best start hit the iteration cap.
    pub converged: bool,
}

/// Haar-distributed orthogonal matrix with the requested determinant sign.
pub fn random_orthogonal(rng: &mut Rng, k: usize, reflect: bool) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let negative = q.clone().determinant() < 0.0;
    if negative != reflect {
        q.column_mut(0).neg_mut();
    }
    q
}

fn sorted_eigenvectors(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, order[c])])
}

/// Start that maps the eigenbasis of `sym(B)` onto that of `sym(A)`.
///
/// In those bases only the eigenvector signs `d` remain free; they are
/// chosen by greedy single flips maximizing `sum_ij d_i d_j At_ij Bt_ij`.
fn spectral_start(a: &DMatrix<f64>, b: &DMatrix<f64>, rng: &mut Rng) -> DMatrix<f64> {
    use rand::Rng as _;
    let k = a.nrows();
    let va = sorted_eigenvectors(a);
    let vb = sorted_eigenvectors(b);
    let at = va.tr_mul(a) * &va;
    let bt = vb.tr_mul(b) * &vb;
    let w = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            at[(i, j)] * bt[(i, j)] + at[(j, i)] * bt[(j, i)]
        }
    });
    let score = |d: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                s += w[(i, j)] * d[i] * d[j];
            }
        }
        s
    };
    let mut best = vec![1.0; k];
    let mut best_score = f64::NEG_INFINITY;
    for attempt in 0..4 {
        let mut d: Vec<f64> = if attempt == 0 {
            vec![1.0; k]
        } else {
            (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
        };
        loop {
            let mut improved = false;
            for i in 0..k {
                let field: f64 = (0..k).map(|j| w[(i, j)] * d[j]).sum();
                if d[i] * field < 0.0 {
                    d[i] = -d[i];
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        let s = score(&d);
        if s > best_score {
            best_score = s;
            best = d;
        }
    }
    let mut vad = va;
    for (j, sign) in best.iter().enumerate() {
        if *sign < 0.0 {
            vad.column_mut(j).neg_mut();
        }
    }
    vad * vb.transpose()
}

fn objective(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let r = a - c * b * c.transpose();
    (r.norm_squared(), r)
}

/// Riemannian gradient descent with a Cayley retraction and Armijo steps.
fn descend(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mut c: DMatrix<f64>,
    solver: &ConjugacySolver,
) -> (f64, DMatrix<f64>, bool) {
    let k = a.nrows();
    let eye = DMatrix::<f64>::identity(k, k);
    let scale = a.norm_squared() + b.norm_squared();
    let floor = scale * 1e-28;
    let (mut f, mut r) = objective(a, b, &c);
    let mut tau = f64::NAN;
    for _ in 0..solver.max_iters {
        if f <= floor {
            return (f, c, true);
        }
        // Euclidean gradient, then its skew projection.
        let g = -2.0 * (&r * &c * b.transpose() + r.transpose() * &c * b);
        let w = &g * c.transpose() - &c * g.transpose();
        let w_norm2 = w.norm_squared();
        if w_norm2 <= 1e-30 * scale * scale {
            return (f, c, true);
        }
        if tau.is_nan() {
            tau = 0.5 / w_norm2.sqrt();
        }
        let slope = 0.5 * w_norm2;
        let mut accepted = None;
        for _ in 0..60 {
            let half = 0.5 * tau * &w;
            let lhs = &eye + &half;
            let rhs = (&eye - &half) * &c;
            if let Some(next) = lhs.lu().solve(&rhs) {
                let (f_next, r_next) = objective(a, b, &next);
                if f_next <= f - 1e-4 * tau * slope {
                    accepted = Some((f_next, r_next, next));
                    break;
                }
            }
            tau *= 0.5;
        }
        let Some((f_next, r_next, next)) = accepted else {
            return (f, c, true);
        };
        let gain = f - f_next;
        c = next;
        f = f_next;
        r = r_next;
        if gain <= solver.tol * f {
            return (f, c, true);
        }
        tau *= 2.0;
    }
    (f, c, false)
}

/// Best conjugating orthogonal matrix over several starts: the identity, a
/// spectral alignment of the symmetric parts, and `restarts` random
/// orthogonal matrices alternating between rotations and reflections.
pub fn orthogonal_conjugacy(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    solver: &ConjugacySolver,
    seed: u64,
) -> Result<Conjugacy> {
    let k = a.nrows();
    if a.ncols() != k || b.shape() != (k, k) {
        return Err(Error::invalid(format!(
            "operators must be square and equal-sized, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut best: Option<(f64, DMatrix<f64>, bool)> = None;
    for start in 0..=solver.restarts + 1 {
        let c0 = if start == 0 {
            DMatrix::identity(k, k)
        } else if start == solver.restarts + 1 {
            let mut rng = stream_rng(seed, Stream::Solver, 0, 1);
            spectral_start(a, b, &mut rng)
        } else {
            let mut rng = stream_rng(seed, Stream::Solver, start as u64, 0);
            random_orthogonal(&mut rng, k, start % 2 == 1)
        };
        let run = descend(a, b, c0, solver);
        if best.as_ref().is_none_or(|(f, _, _)| run.0 < *f) {
            best = Some(run);
        }
    }
    let (f, rotation, converged) = best.expect("at least one start");
    if !f.is_finite() {
        return Err(Error::numeric("orthogonal_conjugacy", "non-finite objective"));
    }
    Ok(Conjugacy {
        distance: f.max(0.0).sqrt(),
        rotation,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn identical_operators() {
        let mut r = rng_from_seed(1);
        let a = DMatrix::from_fn(4, 4, |_, _| StandardNormal.sample(&mut r));
        let c = orthogonal_conjugacy(&a, &a, &ConjugacySolver::default(), 0).unwrap();
        assert!(c.distance < 1e-12);
    }

    #[test]
    fn diagonal_example() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![0.9, 0.5]);
        let b = DMatrix::from_diagonal(&nalgebra::dvector![0.8, 0.5]);
        let c = orthogonal_conjugacy(&a, &b, &ConjugacySolver::default(), 0).unwrap();
        assert!((c.distance - 0.1).abs() < 1e-8);
    }

    #[test]
    fn random_orthogonal_has_requested_determinant() {
        let mut r = rng_from_seed(5);
        for reflect in [false, true] {
            let q = random_orthogonal(&mut r, 5, reflect);
            assert!((q.tr_mul(&q) - DMatrix::identity(5, 5)).abs().max() < 1e-12);
            assert_eq!(q.determinant() < 0.0, reflect);
        }
    }

    #[test]
    fn rotation_stays_orthogonal() {
        let mut r = rng_from_seed(2);
        let a = DMatrix::from_fn(6, 6, |_, _| StandardNormal.sample(&mut r));
        let b = DMatrix::from_fn(6, 6, |_, _| StandardNormal.sample(&mut r));
        let c = orthogonal_conjugacy(&a, &b, &ConjugacySolver::default(), 9).unwrap();
        assert!((c.rotation.tr_mul(&c.rotation) - DMatrix::identity(6, 6)).abs().max() < 1e-9);
        let (f, _) = objective(&a, &b, &c.rotation);
        assert!((f.sqrt() - c.distance).abs() < 1e-12);
    }
}
