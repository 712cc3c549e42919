use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major rank-3 tensor, indexed `(batch, time, channel)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, time: usize, channels: usize) -> Self {
        Self {
            dims: [batch, time, channels],
            data: vec![0.0; batch * time * channels],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {dims:?} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn time(&self) -> usize {
        self.dims[1]
    }

    pub fn channels(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    fn offset(&self, b: usize, t: usize, c: usize) -> usize {
        debug_assert!(b < self.dims[0] && t < self.dims[1] && c < self.dims[2]);
        (b * self.dims[1] + t) * self.dims[2] + c
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize, c: usize) -> f64 {
        self.data[self.offset(b, t, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, t: usize, c: usize, value: f64) {
        let i = self.offset(b, t, c);
        self.data[i] = value;
    }

    /// All channels at one `(batch, time)` position.
    #[inline]
    pub fn frame(&self, b: usize, t: usize) -> &[f64] {
        let start = self.offset(b, t, 0);
        &self.data[start..start + self.dims[2]]
    }

    #[inline]
    pub fn frame_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let start = (b * self.dims[1] + t) * self.dims[2];
        let c = self.dims[2];
        &mut self.data[start..start + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// View as a `(batch * time) x channels` matrix.
    pub fn flatten_rows(&self) -> nalgebra::DMatrix<f64> {
        let rows = self.dims[0] * self.dims[1];
        nalgebra::DMatrix::from_row_slice(rows, self.dims[2], &self.data)
    }

    /// Inverse of [`flatten_rows`](Self::flatten_rows).
    pub fn from_rows(batch: usize, time: usize, m: &nalgebra::DMatrix<f64>) -> Result<Self> {
        if m.nrows() != batch * time {
            return Err(Error::invalid(format!(
                "{} rows cannot be reshaped to {batch} x {time}",
                m.nrows()
            )));
        }
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter().copied());
        }
        Ok(Self {
            dims: [batch, time, m.ncols()],
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
