//! Finite-dimensional Koopman models on kernel dictionaries and the
//! multi-step prediction error of their eigenfunctions.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::dynamics::{advance, DiscreteSystem, SnapshotData};
use crate::error::{Error, Result};
use crate::geometry::{DictionaryCoefficients, GramTriple, Regularization};
use crate::kernels::{gram, gram_with, KernelSpec};
use crate::linalg::{ensure_finite, ensure_square, symmetrize, truncated_eig_psd, RegularizedSolver};
use crate::parallel::{map_indices, Execution};
use crate::states::StateMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelBasis {
    /// All `N` kernel sections; acts on section coefficients.
    Sections,
    /// A dictionary; acts on dictionary coordinates.
    Dictionary,
}

/// Matrix advancing coefficient vectors one step: `f = Vα` maps to the
/// projection of `𝒦f`, with coordinates `Kα`.
#[derive(Clone, Debug)]
pub struct KoopmanMatrix {
    pub matrix: Mat<f64>,
    pub basis: ModelBasis,
    /// Shift or truncation threshold used to invert the Gram matrix.
    pub lambda_reg: f64,
}

impl KoopmanMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `(K_XX + λI)⁻¹ K_TXX`.
pub fn kedmd_matrix(data: &SnapshotData, kernel: &KernelSpec, regularization: Regularization) -> Result<KoopmanMatrix> {
    let k_xx = gram(kernel, &data.x, &data.x)?;
    let k_txx = gram(kernel, &data.tx, &data.x)?;
    let lambda = regularization.resolve(k_xx.as_ref())?;
    let solver = RegularizedSolver::new(k_xx.as_ref(), lambda)?;
    Ok(KoopmanMatrix {
        matrix: solver.solve(k_txx.as_ref())?,
        basis: ModelBasis::Sections,
        lambda_reg: lambda,
    })
}

/// `M_V† M_cross`, the projected Koopman operator in dictionary coordinates.
pub fn reduced_edmd_matrix(gram: &GramTriple, threshold: f64) -> Result<KoopmanMatrix> {
    reduced_edmd_from(&gram.m_v, &gram.m_cross, threshold)
}

/// As [`reduced_edmd_matrix`] from `M_V` and `M_cross` alone.
pub fn reduced_edmd_from(m_v: &Mat<f64>, m_cross: &Mat<f64>, threshold: f64) -> Result<KoopmanMatrix> {
    if m_v.nrows() != m_cross.nrows() || m_cross.nrows() != m_cross.ncols() {
        return Err(Error::mismatch("cross Gram matrix size", m_v.nrows(), m_cross.nrows()));
    }
    let pinv = truncated_eig_psd(m_v.as_ref(), threshold)?.pseudo_inverse();
    Ok(KoopmanMatrix {
        matrix: &pinv * m_cross,
        basis: ModelBasis::Dictionary,
        lambda_reg: threshold,
    })
}

const GRAM_BLOCK: usize = 256;

/// `M_V = Wᵀ K_XX W` and `M_cross = Wᵀ K_TXX W`, accumulated over row blocks
/// of the kernel matrices so that no `N × N` matrix is formed.
///
/// Block partial sums are added in block order, so the result does not
/// depend on `exec`.
pub fn dictionary_grams(
    data: &SnapshotData,
    kernel: &KernelSpec,
    w: &DictionaryCoefficients,
    exec: Execution,
) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = data.len();
    if w.n_samples() != n {
        return Err(Error::mismatch("dictionary rows", n, w.n_samples()));
    }
    let s = w.len();
    let blocks = n.div_ceil(GRAM_BLOCK);
    let parts = map_indices(exec, blocks, |b| -> Result<(Mat<f64>, Mat<f64>)> {
        let lo = b * GRAM_BLOCK;
        let hi = (lo + GRAM_BLOCK).min(n);
        let rows: Vec<usize> = (lo..hi).collect();
        let w_block = w.as_ref().subrows(lo, hi - lo);
        let k_x = gram_with(kernel, &data.x.select(&rows), &data.x, Execution::Sequential)?;
        let k_tx = gram_with(kernel, &data.tx.select(&rows), &data.x, Execution::Sequential)?;
        let kw = k_x.as_ref() * w.as_ref();
        let tw = k_tx.as_ref() * w.as_ref();
        Ok((w_block.transpose() * &kw, w_block.transpose() * &tw))
    });
    let mut m_v = Mat::zeros(s, s);
    let mut m_cross = Mat::zeros(s, s);
    for part in parts {
        let (pv, pc) = part?;
        m_v += &pv;
        m_cross += &pc;
    }
    Ok((symmetrize(m_v.as_ref()), m_cross))
}

/// Order in which eigenpairs are reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenOrder {
    /// `|λ − 1|` ascending.
    #[default]
    NearestOne,
    /// `|λ|` descending.
    Modulus,
}

/// Eigenvalue and unit-norm eigenvector of a Koopman matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub eigenvalue: c64,
    pub vector: Vec<c64>,
}

impl EigenPair {
    /// `‖K v − λ v‖₂`.
    pub fn residual(&self, k: &Mat<f64>) -> f64 {
        let n = self.vector.len();
        (0..n)
            .map(|i| {
                let kv: c64 = (0..n).map(|j| self.vector[j] * k[(i, j)]).sum();
                (kv - self.eigenvalue * self.vector[i]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// All eigenpairs of `K`, `|λ − 1|` ascending.
pub fn eigenpairs(k: &KoopmanMatrix) -> Result<Vec<EigenPair>> {
    eigenpairs_ordered(k, EigenOrder::NearestOne)
}

/// Conjugate partners are kept adjacent, positive imaginary part first.
pub fn eigenpairs_ordered(k: &KoopmanMatrix, order: EigenOrder) -> Result<Vec<EigenPair>> {
    ensure_square(k.matrix.as_ref(), "Koopman matrix")?;
    ensure_finite(k.matrix.as_ref(), "Koopman matrix")?;
    let n = k.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eig = k
        .matrix
        .as_ref()
        .eigen()
        .map_err(|e| Error::EigenFailed(format!("{e:?}")))?;
    let values = eig.S().column_vector();
    let vectors = eig.U();
    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|j| {
            let mut vector: Vec<c64> = (0..n).map(|i| vectors[(i, j)]).collect();
            let norm = vector.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                vector.iter_mut().for_each(|z| *z /= norm);
            }
            EigenPair {
                eigenvalue: values[j],
                vector,
            }
        })
        .collect();
    let key = |p: &EigenPair| match order {
        EigenOrder::NearestOne => (p.eigenvalue - c64::new(1.0, 0.0)).norm(),
        EigenOrder::Modulus => -p.eigenvalue.norm(),
    };
    pairs.sort_by(|a, b| {
        key(a)
            .total_cmp(&key(b))
            .then(b.eigenvalue.im.total_cmp(&a.eigenvalue.im))
            .then(b.eigenvalue.re.total_cmp(&a.eigenvalue.re))
    });
    Ok(pairs)
}

/// `φ(y) = Σᵢ cᵢ k(xᵢ, y)` with complex coefficients over kernel sections,
/// scaled to maximum modulus 1 on the snapshot states.
#[derive(Clone, Debug)]
pub struct Eigenfunction {
    pub eigenvalue: c64,
    pub coefficients: Vec<c64>,
    centers: StateMatrix,
    kernel: KernelSpec,
}

impl Eigenfunction {
    /// Lifts an eigenpair of a model on `w` to a function on state space.
    pub fn from_pair(
        pair: &EigenPair,
        w: &DictionaryCoefficients,
        data: &SnapshotData,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        if pair.vector.len() != w.len() {
            return Err(Error::mismatch("eigenvector length", w.len(), pair.vector.len()));
        }
        if w.n_samples() != data.len() {
            return Err(Error::mismatch("dictionary rows", data.len(), w.n_samples()));
        }
        let coefficients = (0..w.n_samples())
            .map(|i| (0..w.len()).map(|j| pair.vector[j] * w.matrix()[(i, j)]).sum::<c64>())
            .collect();
        let mut phi = Self {
            eigenvalue: pair.eigenvalue,
            coefficients,
            centers: data.x.clone(),
            kernel: *kernel,
        };
        phi.normalize(&data.x);
        Ok(phi)
    }

    fn normalize(&mut self, states: &StateMatrix) {
        let peak = self
            .evaluate_all(states, Execution::default())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if peak > 0.0 {
            self.coefficients.iter_mut().for_each(|c| *c /= peak);
        }
    }

    pub fn evaluate(&self, y: &[f64]) -> c64 {
        self.coefficients
            .iter()
            .zip(self.centers.iter())
            .filter(|(c, _)| c.re != 0.0 || c.im != 0.0)
            .map(|(c, x)| *c * self.kernel.eval_unchecked(x, y))
            .sum()
    }

    pub fn evaluate_all(&self, states: &StateMatrix, exec: Execution) -> Vec<c64> {
        map_indices(exec, states.len(), |j| self.evaluate(states.state(j)))
    }
}

/// `|φ(Tˢ x) − λˢ φ(x)|` at every snapshot state.
pub fn prediction_error_map(
    phi: &Eigenfunction,
    system: &DiscreteSystem,
    data: &SnapshotData,
    steps: usize,
) -> Result<Vec<f64>> {
    prediction_error_map_with(phi, system, &data.x, steps, Execution::default())
}

pub fn prediction_error_map_with(
    phi: &Eigenfunction,
    system: &DiscreteSystem,
    states: &StateMatrix,
    steps: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidCount("prediction needs at least one step".into()));
    }
    if states.dim() != system.state_dim() {
        return Err(Error::mismatch("state dimension", system.state_dim(), states.dim()));
    }
    let lambda_s = phi.eigenvalue.powi(steps as i32);
    Ok(map_indices(exec, states.len(), |j| {
        let x = states.state(j);
        let ahead = advance(system, x, steps);
        (phi.evaluate(&ahead) - lambda_s * phi.evaluate(x)).norm()
    }))
}

/// Maximum, mean and 95th percentile of an error map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub max: f64,
    pub mean: f64,
    pub p95: f64,
}

impl ErrorSummary {
    /// Percentiles use the nearest-rank rule.
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidCount("no errors to summarize".into()));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Ok(Self {
            max: sorted[sorted.len() - 1],
            mean: errors.iter().sum::<f64>() / errors.len() as f64,
            p95: sorted[rank - 1],
        })
    }
}
