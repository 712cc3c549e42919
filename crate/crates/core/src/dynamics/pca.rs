use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Principal axes of a `(trials, time, units)` trajectory.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// Unit-norm axes as columns, by decreasing variance.
    pub components: DMatrix<f64>,
    pub variances: Vec<f64>,
}

/// Projected trajectory together with the basis that produced it.
#[derive(Clone, Debug)]
pub struct Reduced {
    pub data: Tensor3,
    pub basis: DMatrix<f64>,
    /// Fraction of total variance captured.
    pub explained: f64,
}

impl Reduced {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }
}

impl Pca {
    pub fn fit(traj: &Tensor3) -> Result<Self> {
        let mut x = traj.flatten_rows();
        let rows = x.nrows();
        if rows == 0 {
            return Err(Error::invalid("empty trajectory"));
        }
        let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / rows as f64);
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let cov = x.tr_mul(&x) / rows as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let variances: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        if variances.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("trajectory has zero variance"));
        }
        let mut components = DMatrix::from_fn(x.ncols(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        // Deterministic sign: largest-magnitude loading positive.
        for mut col in components.column_iter_mut() {
            let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }

    /// Numerical rank of the centered data.
    pub fn rank(&self) -> usize {
        let top = self.variances[0];
        self.variances.iter().filter(|&&v| v > top * 1e-12).count()
    }

    pub fn explained_ratio(&self, k: usize) -> f64 {
        self.variances[..k.min(self.variances.len())].iter().sum::<f64>() / self.total_variance()
    }

    /// Smallest `k` whose leading components explain at least `threshold`.
    pub fn components_for(&self, threshold: f64) -> usize {
        let total = self.total_variance();
        let target = threshold * total * (1.0 - 1e-12);
        let mut acc = 0.0;
        for (i, v) in self.variances.iter().enumerate() {
            acc += v;
            if acc >= target {
                return (i + 1).min(self.rank()).max(1);
            }
        }
        self.rank()
    }

    /// Project onto the leading `k` axes.
    pub fn project(&self, traj: &Tensor3, k: usize) -> Result<Reduced> {
        if k == 0 || k > self.components.ncols() {
            return Err(Error::invalid(format!(
                "cannot keep {k} of {} components",
                self.components.ncols()
            )));
        }
        if traj.channels() != self.mean.len() {
            return Err(Error::invalid("trajectory width differs from the fitted PCA"));
        }
        let mut x = traj.flatten_rows();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        let basis = self.components.columns(0, k).into_owned();
        let z = x * &basis;
        Ok(Reduced {
            data: Tensor3::from_rows(traj.batch(), traj.time(), &z)?,
            basis,
            explained: self.explained_ratio(k),
        })
    }
}

/// Center, then keep the fewest principal components reaching `threshold`.
pub fn pca_reduce(traj: &Tensor3, threshold: f64) -> Result<Reduced> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let pca = Pca::fit(traj)?;
    let k = pca.components_for(threshold);
    pca.project(traj, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
    }

    fn as_traj(m: &DMatrix<f64>) -> Tensor3 {
        Tensor3::from_rows(1, m.nrows(), m).unwrap()
    }

    #[test]
    fn planar_data_keeps_two_components() {
        let latent = gaussian(200, 2, 1);
        let embed = gaussian(2, 5, 2);
        let data = as_traj(&(latent * embed));
        let red = pca_reduce(&data, 0.99).unwrap();
        assert_eq!(red.k(), 2);
        let pca = Pca::fit(&data).unwrap();
        let back = red.data.flatten_rows() * red.basis.transpose();
        let mut centered = data.flatten_rows();
        for (j, mut c) in centered.column_iter_mut().enumerate() {
            c.add_scalar_mut(-pca.mean[j]);
        }
        assert!((back - centered).abs().max() < 1e-10);
    }

    #[test]
    fn full_threshold_gives_rank() {
        let data = as_traj(&(gaussian(100, 3, 3) * gaussian(3, 6, 4)));
        assert_eq!(pca_reduce(&data, 1.0).unwrap().k(), 3);
    }

    #[test]
    fn ellipsoid_variances() {
        let mut m = gaussian(20000, 3, 5);
        for (j, s) in [10.0, 1.0, 0.1].into_iter().enumerate() {
            m.column_mut(j).scale_mut(s);
        }
        let red = pca_reduce(&as_traj(&m), 0.99).unwrap();
        assert_eq!(red.k(), 2);
        assert!(red.explained >= 0.99);
    }

    #[test]
    fn zero_variance_rejected() {
        let data = Tensor3::from_vec([2, 3, 2], vec![1.0; 12]).unwrap();
        assert!(pca_reduce(&data, 0.99).is_err());
    }
}
