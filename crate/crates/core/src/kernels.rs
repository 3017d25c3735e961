//! Kernel functions and kernel-matrix assembly.
//!
//! `gram(spec, X, Y)` has entry `(i, j) = k(xᵢ, yⱼ)`. In particular the
//! Koopman cross matrix used throughout the crate is `gram(spec, T(X), X)`,
//! whose `(i, j)` entry is `k(T(xᵢ), xⱼ)`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{fill_columns, Execution};
use crate::states::StateMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// Compactly supported Wendland function, support radius `shape`.
    Wendland,
    /// `exp(−‖x−y‖² / (2σ²))` with bandwidth `σ = shape`.
    Gaussian,
    /// `xᵀy`.
    Linear,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wendland" => Ok(Self::Wendland),
            "gaussian" | "rbf" => Ok(Self::Gaussian),
            "linear" => Ok(Self::Linear),
            other => Err(Error::InvalidParameter(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// A symmetric positive-definite kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Wendland support radius or Gaussian bandwidth; unused for linear.
    #[serde(default = "default_shape")]
    pub shape: f64,
    /// Wendland smoothness index β: 1 gives a C² kernel, 2 gives C⁴.
    #[serde(default = "default_smoothness")]
    pub smoothness: u32,
}

fn default_shape() -> f64 {
    2.0
}

fn default_smoothness() -> u32 {
    2
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::Wendland,
            shape: default_shape(),
            smoothness: default_smoothness(),
        }
    }
}

impl KernelSpec {
    pub fn wendland(radius: f64, smoothness: u32) -> Result<Self> {
        Self {
            family: KernelFamily::Wendland,
            shape: radius,
            smoothness,
        }
        .validated()
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self {
            family: KernelFamily::Gaussian,
            shape: bandwidth,
            smoothness: 0,
        }
        .validated()
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            shape: 1.0,
            smoothness: 0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        match self.family {
            KernelFamily::Wendland | KernelFamily::Gaussian if !(self.shape > 0.0 && self.shape.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "{:?} kernel needs a positive shape, got {}",
                    self.family, self.shape
                )))
            }
            KernelFamily::Wendland if !matches!(self.smoothness, 1 | 2) => Err(Error::InvalidParameter(format!(
                "Wendland smoothness must be 1 or 2, got {}",
                self.smoothness
            ))),
            _ => Ok(self),
        }
    }

    /// Kernel value without the dimension check. Exactly symmetric in its
    /// arguments.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelFamily::Gaussian => {
                let d2 = squared_distance(x, y);
                (-d2 / (2.0 * self.shape * self.shape)).exp()
            }
            KernelFamily::Wendland => {
                let r = squared_distance(x, y).sqrt() / self.shape;
                wendland_profile(r, self.smoothness)
            }
        }
    }
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Wendland radial profile normalized to `φ(0) = 1`, valid in dimension ≤ 3.
#[inline]
pub fn wendland_profile(r: f64, smoothness: u32) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    let t = 1.0 - r;
    match smoothness {
        1 => {
            let t2 = t * t;
            t2 * t2 * (4.0 * r + 1.0)
        }
        _ => {
            let t3 = t * t * t;
            t3 * t3 * (35.0 * r * r + 18.0 * r + 3.0) / 3.0
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::mismatch("kernel_eval", x.len(), y.len()));
    }
    Ok(spec.eval_unchecked(x, y))
}

/// Dense kernel matrix `[k(xᵢ, yⱼ)]`.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub values: Mat<f64>,
}

impl KernelMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn as_ref(&self) -> faer::MatRef<'_, f64> {
        self.values.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.values
    }
}

pub fn gram(spec: &KernelSpec, x: &StateMatrix, y: &StateMatrix) -> Result<KernelMatrix> {
    gram_with(spec, x, y, Execution::default())
}

pub fn gram_with(spec: &KernelSpec, x: &StateMatrix, y: &StateMatrix, exec: Execution) -> Result<KernelMatrix> {
    if x.dim() != y.dim() {
        return Err(Error::mismatch("gram state dimension", x.dim(), y.dim()));
    }
    let spec = spec.validated()?;
    let values = fill_columns(exec, x.len(), y.len(), |j, col| {
        let yj = y.state(j);
        for (i, out) in col.iter_mut().enumerate() {
            *out = spec.eval_unchecked(x.state(i), yj);
        }
    });
    Ok(KernelMatrix { values })
}

/// `[k(xᵢ, q)]ᵢ` for a single query state.
pub fn kernel_column(spec: &KernelSpec, x: &StateMatrix, q: &[f64]) -> Result<Vec<f64>> {
    if x.dim() != q.len() {
        return Err(Error::mismatch("kernel column state dimension", x.dim(), q.len()));
    }
    Ok(x.iter().map(|xi| spec.eval_unchecked(xi, q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_at_same_point_is_one() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(kernel_eval(&k, &[0.3, -1.2], &[0.3, -1.2]).unwrap(), 1.0);
    }

    #[test]
    fn wendland_compact_support() {
        let k = KernelSpec::wendland(1.0, 2).unwrap();
        assert_eq!(kernel_eval(&k, &[0.0, 0.0], &[2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(kernel_eval(&k, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(kernel_eval(&k, &[0.5, 0.5], &[0.5, 0.5]).unwrap(), 1.0);
        let k1 = KernelSpec::wendland(1.0, 1).unwrap();
        assert_eq!(kernel_eval(&k1, &[0.5], &[0.5]).unwrap(), 1.0);
        assert_eq!(kernel_eval(&k1, &[0.0], &[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn wendland_profile_values() {
        // (1 − r)⁶ (35r² + 18r + 3) / 3 at r = 1/2: (1/64)(35/4 + 9 + 3)/3.
        let expected = (1.0 / 64.0) * (35.0 / 4.0 + 9.0 + 3.0) / 3.0;
        assert!((wendland_profile(0.5, 2) - expected).abs() < 1e-16);
        // (1 − r)⁴ (4r + 1) at r = 1/2: (1/16)·3.
        assert!((wendland_profile(0.5, 1) - 3.0 / 16.0).abs() < 1e-16);
    }

    #[test]
    fn linear_is_dot_product() {
        assert_eq!(
            kernel_eval(&KernelSpec::linear(), &[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            11.0
        );
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            kernel_eval(&KernelSpec::linear(), &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::wendland(-1.0, 2).is_err());
        assert!(KernelSpec::wendland(1.0, 3).is_err());
        assert_eq!("RBF".parse::<KernelFamily>().unwrap(), KernelFamily::Gaussian);
        assert!("poly".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn single_point_gram() {
        let x = StateMatrix::from_states(2, &[[0.1, 0.2]]).unwrap();
        let k = KernelSpec::gaussian(0.7).unwrap();
        let g = gram(&k, &x, &x).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (1, 1));
        assert_eq!(g.values[(0, 0)], 1.0);
    }

    #[test]
    fn linear_gram_is_xt_y() {
        let x = StateMatrix::from_states(2, &[[1.0, 2.0], [3.0, -1.0], [0.5, 0.25]]).unwrap();
        let y = StateMatrix::from_states(2, &[[2.0, 0.0], [1.0, 1.0]]).unwrap();
        let g = gram(&KernelSpec::linear(), &x, &y).unwrap();
        let expected = x.to_mat().transpose() * y.to_mat();
        assert_eq!(g.values, expected);
    }
}
