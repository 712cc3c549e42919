//! Oracles for the permutation-invariant weight distance.

use degenkit::rng::rng_from_seed;
use degenkit::weights::*;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force(w1: &DMatrix<f64>, w2: &DMatrix<f64>) -> f64 {
    permutations(w1.nrows())
        .iter()
        .map(|p| (w1 - permute(w2, p)).norm())
        .fold(f64::INFINITY, f64::min)
}

fn random(r: &mut degenkit::rng::Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0))
}

#[test]
fn matches_exhaustive_search() {
    let mut r = rng_from_seed(21);
    let mut exact = 0;
    let mut worst_gap: f64 = 0.0;
    for pair in 0..100u64 {
        let n = 2 + (pair as usize % 5);
        let w1 = random(&mut r, n);
        let w2 = random(&mut r, n);
        let got = pif_align(&w1, &w2, PIF_RESTARTS, pair).unwrap().distance;
        let best = brute_force(&w1, &w2);
        assert!(got >= best - 1e-12);
        let gap = got - best;
        if gap <= 1e-9 {
            exact += 1;
        } else {
            worst_gap = worst_gap.max(gap / (&w1 - &w2).norm());
        }
    }
    assert!(worst_gap <= 0.01, "worst relative gap {worst_gap}");
    println!("exact on {exact}/100 pairs, worst relative gap {worst_gap:.2e}");
}

#[test]
fn conjugate_has_zero_distance() {
    let mut r = rng_from_seed(22);
    for n in [5, 16, 64] {
        let w1 = random(&mut r, n);
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut r);
        let w2 = permute(&w1, &p);
        assert!(pif_distance(&w1, &w2, false, PIF_RESTARTS, 1).unwrap() < 1e-12, "n = {n}");
    }
}

#[test]
fn bounded_by_plain_frobenius() {
    let mut r = rng_from_seed(23);
    for _ in 0..10 {
        let w1 = random(&mut r, 12);
        let w2 = random(&mut r, 12);
        assert!(pif_distance(&w1, &w2, false, 4, 0).unwrap() <= (&w1 - &w2).norm() + 1e-12);
    }
}

#[test]
fn self_distance_symmetry_and_invariance() {
    let mut r = rng_from_seed(24);
    let w1 = random(&mut r, 6);
    let w2 = random(&mut r, 6);
    assert_eq!(pif_distance(&w1, &w1, true, 8, 0).unwrap(), 0.0);
    let ab = pif_distance(&w1, &w2, false, PIF_RESTARTS, 0).unwrap();
    let ba = pif_distance(&w2, &w1, false, PIF_RESTARTS, 0).unwrap();
    assert!((ab - ba).abs() < 1e-6);
    let mut p: Vec<usize> = (0..6).collect();
    p.shuffle(&mut r);
    let moved = pif_distance(&permute(&w1, &p), &permute(&w2, &p), false, PIF_RESTARTS, 0).unwrap();
    assert!((moved - ab).abs() < 1e-6);
}

#[test]
fn pairwise_matrix() {
    let mut r = rng_from_seed(25);
    let ws: Vec<DMatrix<f64>> = (0..4).map(|_| random(&mut r, 8)).collect();
    let refs: Vec<&DMatrix<f64>> = ws.iter().collect();
    let serial = pairwise_pif(&refs, 8, 3, 1).unwrap();
    let parallel = pairwise_pif(&refs, 8, 3, 3).unwrap();
    assert_eq!(serial, parallel);
    for i in 0..4 {
        assert_eq!(serial.get(i, i), 0.0);
    }
}
