//! Permutation-invariant Frobenius distance between recurrent matrices.
//!
//! Minimizes `||W1 - P^T W2 P||_F` over permutations, where
//! `(P^T W2 P)_ij = W2[s(i), s(j)]`. Equivalently maximizes the overlap
//! `sum_ij W1_ij W2_{s(i) s(j)}`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::hungarian::linear_assignment;

#[derive(Clone, Debug)]
pub struct PifAlignment {
    /// `||W1 - P^T W2 P||_F` before any normalization.
    pub distance: f64,
    pub perm: Vec<usize>,
}

/// Apply `s` to both axes: `out[i][j] = w[s(i)][s(j)]`.
pub fn permute(w: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(perm[i], perm[j])])
}

fn overlap(w1: &DMatrix<f64>, w2: &DMatrix<f64>, s: &[usize]) -> f64 {
    let n = s.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += w1[(i, j)] * w2[(s[i], s[j])];
        }
    }
    total
}

/// Overlap gained by exchanging `s[i]` and `s[j]`.
fn swap_gain(w1: &DMatrix<f64>, w2: &DMatrix<f64>, s: &[usize], i: usize, j: usize) -> f64 {
    let (a, b) = (s[i], s[j]);
    let mut g = 0.0;
    for (q, &sq) in s.iter().enumerate() {
        if q == i || q == j {
            continue;
        }
        let row = w2[(b, sq)] - w2[(a, sq)];
        let col = w2[(sq, b)] - w2[(sq, a)];
        g += (w1[(i, q)] - w1[(j, q)]) * row + (w1[(q, i)] - w1[(q, j)]) * col;
    }
    g += (w1[(i, i)] - w1[(j, j)]) * (w2[(b, b)] - w2[(a, a)]);
    g += (w1[(i, j)] - w1[(j, i)]) * (w2[(b, a)] - w2[(a, b)]);
    g
}

/// One linearized step: the assignment maximizing the first-order overlap.
fn linearized(w1: &DMatrix<f64>, w2: &DMatrix<f64>, s: &[usize]) -> Vec<usize> {
    let n = s.len();
    // G[i][a] = sum_j W1_ij W2[a, s(j)] + W1_ji W2[s(j), a]
    let w2s_cols = DMatrix::from_fn(n, n, |a, j| w2[(a, s[j])]);
    let w2s_rows = DMatrix::from_fn(n, n, |j, a| w2[(s[j], a)]);
    let g = w1 * w2s_cols.transpose() + w1.transpose() * w2s_rows;
    linear_assignment(&(-g))
}

fn local_search(w1: &DMatrix<f64>, w2: &DMatrix<f64>, mut s: Vec<usize>) -> (f64, Vec<usize>) {
    let n = s.len();
    let scale = 1e-12 * (w1.norm() * w2.norm()).max(1e-300);
    let mut value = overlap(w1, w2, &s);
    loop {
        let mut moved = false;
        let cand = linearized(w1, w2, &s);
        let v = overlap(w1, w2, &cand);
        if v > value + scale {
            s = cand;
            value = v;
            moved = true;
        }
        for i in 0..n {
            for j in i + 1..n {
                let g = swap_gain(w1, w2, &s, i, j);
                if g > scale {
                    s.swap(i, j);
                    value += g;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
        value = overlap(w1, w2, &s);
    }
    (value, s)
}

/// Frank-Wolfe ascent of the overlap over doubly stochastic matrices from the
/// flat barycenter, rounded to the nearest permutation.
fn relaxed_start(w1: &DMatrix<f64>, w2: &DMatrix<f64>, iters: usize) -> Vec<usize> {
    let n = w1.nrows();
    let inner = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>();
    let mut p = DMatrix::from_element(n, n, 1.0 / n as f64);
    for _ in 0..iters {
        let grad = w1 * &p * w2.transpose() + w1.transpose() * &p * w2;
        let target = linear_assignment(&(-&grad));
        let mut q = DMatrix::zeros(n, n);
        for (i, &a) in target.iter().enumerate() {
            q[(i, a)] = 1.0;
        }
        let d = q - &p;
        // f(p + t d) = f(p) + t * lin + t^2 * quad
        let lin = inner(w1, &(&p * w2 * d.transpose())) + inner(w1, &(&d * w2 * p.transpose()));
        let quad = inner(w1, &(&d * w2 * d.transpose()));
        let t = if quad < 0.0 {
            (-lin / (2.0 * quad)).clamp(0.0, 1.0)
        } else if lin + quad > 0.0 {
            1.0
        } else {
            0.0
        };
        if t * d.norm() < 1e-9 {
            break;
        }
        p += t * d;
    }
    linear_assignment(&(-p))
}

/// Gain of the 3-cycle built from `swap(i, j)` then `swap(j, k)`.
fn cycle_gain(w1: &DMatrix<f64>, w2: &DMatrix<f64>, s: &mut [usize], i: usize, j: usize, k: usize) -> f64 {
    let g1 = swap_gain(w1, w2, s, i, j);
    s.swap(i, j);
    let g2 = swap_gain(w1, w2, s, j, k);
    s.swap(i, j);
    g1 + g2
}

/// Contribution of position `q` to `swap_gain(s, k, l)`.
fn swap_term(w1: &DMatrix<f64>, w2: &DMatrix<f64>, s: &[usize], q: usize, k: usize, l: usize, sq: usize) -> f64 {
    let (a, b) = (s[k], s[l]);
    (w1[(k, q)] - w1[(l, q)]) * (w2[(b, sq)] - w2[(a, sq)])
        + (w1[(q, k)] - w1[(q, l)]) * (w2[(sq, b)] - w2[(sq, a)])
}

/// Best pair of disjoint swaps, if it improves by more than `eps`.
fn best_double_swap(w1: &DMatrix<f64>, w2: &DMatrix<f64>, s: &[usize], eps: f64) -> Option<[usize; 4]> {
    let n = s.len();
    let mut gain = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            gain[(i, j)] = swap_gain(w1, w2, s, i, j);
        }
    }
    let mut best = eps;
    let mut arg = None;
    for i in 0..n {
        for j in i + 1..n {
            let gij = gain[(i, j)];
            let (si, sj) = (s[i], s[j]);
            for k in i + 1..n {
                if k == j {
                    continue;
                }
                for l in k + 1..n {
                    if l == j {
                        continue;
                    }
                    // After swap(i, j), positions i and j hold s[j] and s[i].
                    let corr = swap_term(w1, w2, s, i, k, l, sj) - swap_term(w1, w2, s, i, k, l, si)
                        + swap_term(w1, w2, s, j, k, l, si)
                        - swap_term(w1, w2, s, j, k, l, sj);
                    let total = gij + gain[(k, l)] + corr;
                    if total > best {
                        best = total;
                        arg = Some([i, j, k, l]);
                    }
                }
            }
        }
    }
    arg
}

/// Alternate 3-cycle and double-swap moves with `local_search` until none
/// improves.
fn deep_polish(w1: &DMatrix<f64>, w2: &DMatrix<f64>, mut s: Vec<usize>) -> (f64, Vec<usize>) {
    let n = s.len();
    let scale = 1e-12 * (w1.norm() * w2.norm()).max(1e-300);
    loop {
        let mut moved = false;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    if cycle_gain(w1, w2, &mut s, i, j, k) > scale {
                        s.swap(i, j);
                        s.swap(j, k);
                        moved = true;
                    }
                }
            }
        }
        if let Some([i, j, k, l]) = best_double_swap(w1, w2, &s, scale) {
            s.swap(i, j);
            s.swap(k, l);
            moved = true;
        }
        let (value, next) = local_search(w1, w2, s);
        s = next;
        if !moved {
            return (value, s);
        }
    }
}

/// Best permutation from the identity, `restarts` random starts and one
/// start from the doubly stochastic relaxation.
///
/// Each start alternates linear-assignment steps on the linearized overlap
/// with pairwise-swap refinement until neither improves; the winner is then
/// refined further with 3-cycle and double-swap moves.
/// Local optima that get the expensive 3-cycle and double-swap polish.
const POLISHED: usize = 4;

pub fn pif_align(w1: &DMatrix<f64>, w2: &DMatrix<f64>, restarts: usize, seed: u64) -> Result<PifAlignment> {
    let n = w1.nrows();
    if w1.ncols() != n || w2.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "recurrent matrices must be square and equal-sized, got {:?} and {:?}",
            w1.shape(),
            w2.shape()
        )));
    }
    // Squared entries and their products must not overflow.
    let scale = w1.norm_squared() + w2.norm_squared();
    if !(scale * scale).is_finite() {
        return Err(Error::numeric("pif_align", "weights too large or non-finite"));
    }
    let mut runs = vec![local_search(w1, w2, relaxed_start(w1, w2, 50))];
    for start in 0..=restarts {
        let mut s: Vec<usize> = (0..n).collect();
        if start > 0 {
            let mut rng = stream_rng(seed, Stream::Solver, start as u64, 1);
            s.shuffle(&mut rng);
        }
        runs.push(local_search(w1, w2, s));
    }
    // Polish the few best distinct local optima; a stable sort keeps ties
    // in start order.
    runs.sort_by(|a, b| b.0.total_cmp(&a.0));
    runs.dedup_by(|a, b| a.1 == b.1);
    let perm = runs
        .into_iter()
        .take(POLISHED)
        .map(|(_, s)| deep_polish(w1, w2, s))
        .fold(None::<(f64, Vec<usize>)>, |best, run| match best {
            Some(b) if b.0 >= run.0 => Some(b),
            _ => Some(run),
        })
        .expect("at least one start")
        .1;
    let distance = (w1 - permute(w2, &perm)).norm();
    Ok(PifAlignment { distance, perm })
}

/// PIF distance with 32 random restarts; divided by `n^2` when `normalize`.
pub fn pif_distance(w1: &DMatrix<f64>, w2: &DMatrix<f64>, normalize: bool, restarts: usize, seed: u64) -> Result<f64> {
    let d = pif_align(w1, w2, restarts, seed)?.distance;
    let n = w1.nrows();
    Ok(if normalize { d / (n * n) as f64 } else { d })
}
