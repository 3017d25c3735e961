//! Data-parallel loops with a sequential fallback.
//!
//! Every parallel loop here computes each output element independently of
//! the others, so the parallel and sequential paths produce bit-identical
//! results. Without the `parallel` feature, [`Execution::Parallel`] silently
//! runs sequentially.

use faer::Mat;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Builds an `nrows × ncols` matrix one column at a time.
///
/// `fill(j, column)` must write column `j` completely.
pub fn fill_columns<F>(exec: Execution, nrows: usize, ncols: usize, fill: F) -> Mat<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut out = Mat::<f64>::zeros(nrows, ncols);
    if nrows == 0 || ncols == 0 {
        return out;
    }
    let mut buf = vec![0.0; nrows * ncols];
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        buf.par_chunks_mut(nrows).enumerate().for_each(|(j, col)| fill(j, col));
    } else {
        buf.chunks_mut(nrows).enumerate().for_each(|(j, col)| fill(j, col));
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = exec;
        buf.chunks_mut(nrows).enumerate().for_each(|(j, col)| fill(j, col));
    }
    for (j, col) in buf.chunks(nrows).enumerate() {
        out.col_as_slice_mut(j).copy_from_slice(col);
    }
    out
}

/// `(0..len).map(f).collect()`, in parallel when requested.
pub fn map_indices<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}
