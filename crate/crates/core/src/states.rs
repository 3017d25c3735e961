use faer::Mat;

use crate::error::{Error, Result};

/// `n × N` collection of states, stored column-major so each state is a
/// contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl StateMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCount("state dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::mismatch("state buffer length", dim, data.len() % dim));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            data: Vec::new(),
        }
    }

    pub fn from_states<S: AsRef<[f64]>>(dim: usize, states: &[S]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * states.len());
        for s in states {
            let s = s.as_ref();
            if s.len() != dim {
                return Err(Error::mismatch("state length", dim, s.len()));
            }
            data.extend_from_slice(s);
        }
        Self::new(dim, data)
    }

    /// Columns of `m` become states.
    pub fn from_mat(m: &Mat<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for j in 0..m.ncols() {
            data.extend_from_slice(m.col_as_slice(j));
        }
        Self::new(m.nrows(), data)
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.dim, self.len(), |i, j| self.data[j * self.dim + i])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// States at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.state(i));
        }
        Self { dim: self.dim, data }
    }

    pub fn map(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for s in self.iter() {
            let out = f(s);
            debug_assert_eq!(out.len(), self.dim);
            data.extend_from_slice(&out);
        }
        Self { dim: self.dim, data }
    }
}
