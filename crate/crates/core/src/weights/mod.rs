//! Weight-space distances.

mod hungarian;
mod pif;

pub use hungarian::linear_assignment;
pub use pif::{permute, pif_align, pif_distance, PifAlignment};

use nalgebra::DMatrix;

use crate::dynamics::{DistanceMatrix, MetricTag};
use crate::error::{Error, Result};
use crate::par::{pairs, par_map};
use crate::rng::{derive_seed, Stream};

/// Default number of random starts for the permutation search.
pub const PIF_RESTARTS: usize = 32;

/// Normalized PIF distance between every pair of recurrent matrices.
pub fn pairwise_pif(weights: &[&DMatrix<f64>], restarts: usize, seed: u64, jobs: usize) -> Result<DistanceMatrix> {
    if weights.len() < 2 {
        return Err(Error::InsufficientData("PIF needs at least two networks".into()));
    }
    let pair_list = pairs(weights.len());
    let upper = par_map(pair_list.len(), jobs, |p| {
        let (i, j) = pair_list[p];
        pif_distance(weights[i], weights[j], true, restarts, derive_seed(seed, Stream::Solver, p as u64, 1))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::from_upper(MetricTag::Pif, weights.len(), &upper)
}
