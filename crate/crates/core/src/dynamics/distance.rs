use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    Dsa,
    Pif,
    Svcca,
}

impl MetricTag {
    pub fn name(self) -> &'static str {
        match self {
            MetricTag::Dsa => "dsa",
            MetricTag::Pif => "pif",
            MetricTag::Svcca => "svcca",
        }
    }
}

/// Symmetric, zero-diagonal, non-negative matrix of pairwise distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub metric: MetricTag,
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Build from the upper triangle; `upper[k]` belongs to `pairs(n)[k]`.
    pub fn from_upper(metric: MetricTag, n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::invalid(format!(
                "{} pair values for {n} members",
                upper.len()
            )));
        }
        let mut values = DMatrix::zeros(n, n);
        for (&(i, j), &v) in crate::par::pairs(n).iter().zip(upper) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::numeric(
                    format!("{} pair ({i}, {j})", metric.name()),
                    format!("distance {v} is not a finite non-negative number"),
                ));
            }
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
        Ok(Self { metric, values })
    }

    /// Validate an existing dense matrix.
    pub fn from_matrix(metric: MetricTag, values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::invalid("distance matrix must be square"));
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(Error::invalid("distance matrix diagonal must be zero"));
            }
            for j in 0..i {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if a != b || !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::invalid(format!(
                        "entries ({i},{j}) and ({j},{i}) must be equal, finite and non-negative"
                    )));
                }
            }
        }
        Ok(Self { metric, values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Mean over unordered pairs; NaN with fewer than two members.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return f64::NAN;
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.values[(i, j)];
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }

    /// Restrict to the listed members, in that order.
    pub fn select(&self, members: &[usize]) -> Self {
        let values = DMatrix::from_fn(members.len(), members.len(), |a, b| {
            self.values[(members[a], members[b])]
        });
        Self {
            metric: self.metric,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_triangle_round_trip() {
        let d = DistanceMatrix::from_upper(MetricTag::Pif, 3, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.get(2, 1), 3.0);
        assert_eq!(d.get(1, 1), 0.0);
        assert_eq!(d.mean_off_diagonal(), 2.0);
        let sub = d.select(&[2, 0]);
        assert_eq!(sub.get(0, 1), 2.0);
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let d = DistanceMatrix::from_upper(MetricTag::Dsa, 4, &[1.0, 5.0, 2.0, 0.5, 7.0, 3.0]).unwrap();
        let p = d.select(&[3, 1, 0, 2]);
        assert!((d.mean_off_diagonal() - p.mean_off_diagonal()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(DistanceMatrix::from_upper(MetricTag::Dsa, 2, &[-1.0]).is_err());
        assert!(DistanceMatrix::from_upper(MetricTag::Dsa, 3, &[1.0]).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(DistanceMatrix::from_matrix(MetricTag::Dsa, asym).is_err());
    }
}
