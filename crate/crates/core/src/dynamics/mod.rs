//! Dynamical similarity (DSA), SVCCA and MDS.
//!
//! DSA reduces each network's hidden trajectory with PCA, delay-embeds it,
//! fits a linear forward operator by DMD and compares operators up to an
//! orthogonal change of basis.

mod distance;
mod dmd;
mod mds;
mod pca;
mod procrustes;
mod svcca;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{pairs, par_map};
use crate::rng::{derive_seed, Stream};
use crate::tensor::Tensor3;

pub use distance::{DistanceMatrix, MetricTag};
pub use dmd::{choose_lag, delay_embed, fit_dmd, lag_curve, ForwardOperator};
pub use mds::mds_embed;
pub use pca::{pca_reduce, Pca, Reduced};
pub use procrustes::{orthogonal_conjugacy, random_orthogonal, Conjugacy, ConjugacySolver};
pub use svcca::{svcca_correlations, svcca_distance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsaConfig {
    pub pca_var_threshold: f64,
    pub lag_min: usize,
    pub lag_max: usize,
    pub procrustes_restarts: usize,
    pub procrustes_tol: f64,
    pub procrustes_max_iters: usize,
}

impl Default for DsaConfig {
    fn default() -> Self {
        Self {
            pca_var_threshold: 0.99,
            lag_min: 1,
            lag_max: 30,
            procrustes_restarts: 8,
            procrustes_tol: 1e-9,
            procrustes_max_iters: 2000,
        }
    }
}

impl DsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pca_var_threshold > 0.0 && self.pca_var_threshold <= 1.0) {
            return Err(Error::invalid("pca_var_threshold must lie in (0, 1]"));
        }
        if self.lag_min == 0 || self.lag_min > self.lag_max {
            return Err(Error::invalid("need 1 <= lag_min <= lag_max"));
        }
        if self.procrustes_max_iters == 0 || !(self.procrustes_tol >= 0.0) {
            return Err(Error::invalid("procrustes_max_iters must be >= 1 and procrustes_tol >= 0"));
        }
        Ok(())
    }

    pub fn solver(&self) -> ConjugacySolver {
        ConjugacySolver {
            restarts: self.procrustes_restarts,
            max_iters: self.procrustes_max_iters,
            tol: self.procrustes_tol,
        }
    }
}

/// `min_C ||A_x - C A_y C^T||_F` over orthogonal `C`.
pub fn dsa_distance(x: &ForwardOperator, y: &ForwardOperator, cfg: &DsaConfig, seed: u64) -> Result<Conjugacy> {
    if x.k() != y.k() {
        return Err(Error::invalid(format!(
            "operators have dimensions {} and {}",
            x.k(),
            y.k()
        )));
    }
    orthogonal_conjugacy(&x.a, &y.a, &cfg.solver(), seed)
}

/// Ensemble DSA: shared retained dimension, shared lag, all pairs.
#[derive(Clone, Debug)]
pub struct DsaEnsemble {
    pub distances: DistanceMatrix,
    pub operators: Vec<ForwardOperator>,
    /// Retained principal components per network (before equalization).
    pub own_k: Vec<usize>,
    /// Common dimension every network is projected to.
    pub k: usize,
    pub own_lags: Vec<usize>,
    pub lag: usize,
    /// Pairs whose best start hit the iteration cap.
    pub unconverged_pairs: usize,
}

impl DsaEnsemble {
    pub fn degeneracy(&self) -> f64 {
        self.distances.mean_off_diagonal()
    }
}

/// Lower median.
fn median(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Project each trajectory onto the ensemble-wide number of components.
pub fn equalized_reduction(trajs: &[&Tensor3], threshold: f64) -> Result<(Vec<Reduced>, Vec<usize>)> {
    let fits = trajs.iter().map(|t| Pca::fit(t)).collect::<Result<Vec<_>>>()?;
    let own_k: Vec<usize> = fits.iter().map(|p| p.components_for(threshold)).collect();
    let cap = fits.iter().map(|p| p.components.ncols()).min().unwrap_or(0);
    let k = own_k.iter().copied().max().unwrap_or(0).min(cap);
    let reduced = fits
        .iter()
        .zip(trajs)
        .map(|(p, t)| p.project(t, k))
        .collect::<Result<Vec<_>>>()?;
    Ok((reduced, own_k))
}

/// DSA between every pair of trajectories recorded on the same inputs.
pub fn pairwise_dsa(trajs: &[&Tensor3], cfg: &DsaConfig, seed: u64, jobs: usize) -> Result<DsaEnsemble> {
    cfg.validate()?;
    if trajs.len() < 2 {
        return Err(Error::InsufficientData("DSA needs at least two networks".into()));
    }
    if trajs.iter().any(|t| t.dims()[..2] != trajs[0].dims()[..2]) {
        return Err(Error::invalid("trajectories must share trials and time steps"));
    }
    let (reduced, own_k) = equalized_reduction(trajs, cfg.pca_var_threshold)?;
    let k = reduced[0].k();
    let own_lags = par_map(reduced.len(), jobs, |i| choose_lag(&reduced[i].data, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let lag = median(&own_lags);
    let operators = par_map(reduced.len(), jobs, |i| ForwardOperator::fit(&reduced[i].data, lag))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let pair_list = pairs(trajs.len());
    let results = par_map(pair_list.len(), jobs, |p| {
        let (i, j) = pair_list[p];
        dsa_distance(&operators[i], &operators[j], cfg, derive_seed(seed, Stream::Solver, p as u64, 0))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let unconverged_pairs = results.iter().filter(|c| !c.converged).count();
    if unconverged_pairs > 0 {
        log::warn!("{unconverged_pairs} DSA pairs stopped at the iteration cap");
    }
    let upper: Vec<f64> = results.iter().map(|c| c.distance).collect();
    Ok(DsaEnsemble {
        distances: DistanceMatrix::from_upper(MetricTag::Dsa, trajs.len(), &upper)?,
        operators,
        own_k,
        k,
        own_lags,
        lag,
        unconverged_pairs,
    })
}

/// SVCCA distance between every pair.
pub fn pairwise_svcca(trajs: &[&Tensor3], jobs: usize) -> Result<DistanceMatrix> {
    if trajs.len() < 2 {
        return Err(Error::InsufficientData("SVCCA needs at least two networks".into()));
    }
    let pair_list = pairs(trajs.len());
    let upper = par_map(pair_list.len(), jobs, |p| {
        let (i, j) = pair_list[p];
        svcca_distance(trajs[i], trajs[j]).map(|d| d.max(0.0))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::from_upper(MetricTag::Svcca, trajs.len(), &upper)
}
