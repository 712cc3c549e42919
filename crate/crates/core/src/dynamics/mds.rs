use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Classical (Torgerson) MDS of a distance matrix into `dim` coordinates.
///
/// Rows of the result are members; negative Gram eigenvalues are clamped to
/// zero and each axis is signed so its largest-magnitude entry is positive.
pub fn mds_embed(d: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::invalid("distance matrix must be square"));
    }
    if dim == 0 || dim + 1 > n {
        return Err(Error::invalid(format!("cannot embed {n} points in {dim} dimensions")));
    }
    let scale = d.amax().max(1.0);
    for i in 0..n {
        if d[(i, i)].abs() > 1e-12 * scale {
            return Err(Error::invalid("distance matrix diagonal must be zero"));
        }
        for j in 0..i {
            if (d[(i, j)] - d[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid("distance matrix must be symmetric"));
            }
        }
    }
    let sq = d.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let mut out = DMatrix::zeros(n, dim);
    for (axis, &idx) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0).sqrt();
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[(i, axis)] = sign * lambda * v[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distances() {
        let out = mds_embed(&DMatrix::zeros(4, 4), 2).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dim_too_large() {
        assert!(mds_embed(&DMatrix::zeros(3, 3), 3).is_err());
    }

    #[test]
    fn centered_output() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 3.0, 4.0, 3.0, 0.0, 5.0, 4.0, 5.0, 0.0]);
        let out = mds_embed(&d, 2).unwrap();
        for c in 0..2 {
            assert!(out.column(c).sum().abs() < 1e-10);
        }
    }
}
