//! Exact principal angles and vectors between `S = span(V)` and its Koopman
//! image `𝒦S` inside the RKHS.
//!
//! The dictionary `V = Φ_X W_V` is a set of `s` functions, each a linear
//! combination of the kernel sections at the snapshot states. The image
//! `𝒦V = Φ_X W_KV` is recovered from `K_XX W_KV = K_TXX W_V`, where
//! `[K_TXX]ᵢⱼ = k(T(xᵢ), xⱼ)`. From the three Gram matrices
//!
//! ```text
//! M_V     = W_Vᵀ K_XX W_V
//! M_KV    = W_KVᵀ K_XX W_KV
//! M_cross = W_Vᵀ K_TXX W_V
//! ```
//!
//! orthonormal bases of both subspaces are obtained implicitly through
//! truncated eigendecompositions (no function is ever materialized), and the
//! principal angles are the arc-cosines of the singular values of the cosine
//! matrix `(R_V†)ᵀ M_cross R_KV†`.
//!
//! Only the angles and the spans of the principal vectors are stable under
//! ties between singular values; the individual vectors are not.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotData;
use crate::error::{Error, Result};
use crate::io::{mat_from_rows, mat_to_rows};
use crate::kernels::{gram, KernelMatrix, KernelSpec};
use crate::linalg::{
    economy_qr, ensure_finite, scale_columns, scale_rows, symmetrize, trace, truncated_eig_psd, RegularizedSolver,
    TruncatedEig, DEFAULT_EIG_THRESHOLD,
};
use crate::rng::{sample_without_replacement, stream_rng, STREAM_DICTIONARY};
use crate::states::StateMatrix;

/// Cosines above `1 + EXACT_COSINE_TOLERANCE` are reported as an error
/// instead of being clamped.
pub const EXACT_COSINE_TOLERANCE: f64 = 1e-6;

/// Coefficients `W` (`N × s`) of `s` observables over the kernel sections
/// `Φ_X` of a snapshot set.
#[derive(Clone, Debug, PartialEq)]
pub struct DictionaryCoefficients {
    w: Mat<f64>,
}

impl DictionaryCoefficients {
    pub fn new(w: Mat<f64>) -> Result<Self> {
        if w.ncols() == 0 {
            return Err(Error::InvalidCount("a dictionary needs at least one column".into()));
        }
        ensure_finite(w.as_ref(), "dictionary coefficients")?;
        Ok(Self { w })
    }

    /// Column `j` is the indicator of sample `centers[j]`, i.e. the kernel
    /// section anchored at that state.
    pub fn selection(n_samples: usize, centers: &[usize]) -> Result<Self> {
        if let Some(&bad) = centers.iter().find(|&&c| c >= n_samples) {
            return Err(Error::InvalidCount(format!(
                "center index {bad} out of range for {n_samples} samples"
            )));
        }
        Self::new(Mat::from_fn(n_samples, centers.len(), |i, j| {
            if centers[j] == i {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn identity(n_samples: usize) -> Self {
        Self {
            w: Mat::identity(n_samples, n_samples),
        }
    }

    pub fn zeros(n_samples: usize, s: usize) -> Self {
        Self {
            w: Mat::zeros(n_samples, s.max(1)),
        }
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.w
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.w.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.w
    }

    /// `N`, the number of kernel sections.
    pub fn n_samples(&self) -> usize {
        self.w.nrows()
    }

    /// `s`, the number of observables.
    pub fn len(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.w.ncols() == 0
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.w.col_as_slice(j)
    }

    /// `W A`: the observables `V A`.
    pub fn transform(&self, a: MatRef<'_, f64>) -> Result<Self> {
        if a.nrows() != self.len() {
            return Err(Error::mismatch("dictionary transform", self.len(), a.nrows()));
        }
        Self::new(&self.w * a)
    }
}

/// `s` distinct sample indices drawn uniformly without replacement.
pub fn sample_centers(n_samples: usize, s: usize, seed: u64) -> Result<Vec<usize>> {
    if s == 0 || s > n_samples {
        return Err(Error::InvalidCount(format!(
            "dictionary size {s} must lie in 1..={n_samples}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_DICTIONARY);
    Ok(sample_without_replacement(&mut rng, n_samples, s))
}

/// Size of the Tikhonov shift added to a kernel matrix before solving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Regularization {
    /// `λ` as given.
    Absolute(f64),
    /// `λ = c · trace(M) / dim(M)`.
    Relative(f64),
}

impl Regularization {
    pub fn resolve(&self, m: MatRef<'_, f64>) -> Result<f64> {
        let lambda = match *self {
            Regularization::Absolute(l) => l,
            Regularization::Relative(c) => {
                let n = m.nrows().max(1) as f64;
                c * trace(m) / n
            }
        };
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization resolved to {lambda}, which is not positive"
            )));
        }
        Ok(lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSettings {
    pub regularization: Regularization,
    /// Absolute eigenvalue cutoff for `M_V` and `M_KV`.
    pub threshold: f64,
}

impl Default for ExactSettings {
    fn default() -> Self {
        Self {
            regularization: Regularization::Relative(1e-10),
            threshold: DEFAULT_EIG_THRESHOLD,
        }
    }
}

/// Gram matrices of `V`, `𝒦V`, and their cross inner products.
#[derive(Clone, Debug)]
pub struct GramTriple {
    pub m_v: Mat<f64>,
    pub m_kv: Mat<f64>,
    pub m_cross: Mat<f64>,
}

/// Upper-triangular factor of an implicit QR decomposition and its
/// pseudoinverse, built from a truncated eigendecomposition of the Gram
/// matrix.
#[derive(Clone, Debug)]
pub struct ImplicitQr {
    /// `r × s`, with `Rᵀ R` equal to the truncated Gram matrix.
    pub r: Mat<f64>,
    /// `s × r`; `V R†` is an orthonormal basis of the span.
    pub r_pinv: Mat<f64>,
    pub eig: TruncatedEig,
}

impl ImplicitQr {
    pub fn rank(&self) -> usize {
        self.r.nrows()
    }
}

/// Principal angles between `S` and `𝒦S` with the coefficient matrices of
/// the principal vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalDecomposition {
    /// Nondecreasing, in `[0, π/2]`.
    pub angles: Vec<f64>,
    /// `cos(angles)`, nonincreasing, in `[0, 1]`.
    pub cosines: Vec<f64>,
    /// `s × k_r`: principal vectors of `S` are `V A_V`.
    pub a_v: Mat<f64>,
    /// `s × k_r`: principal vectors of `𝒦S` are `𝒦V A_KV`.
    pub a_kv: Mat<f64>,
    pub rank_v: usize,
    pub rank_kv: usize,
}

impl PrincipalDecomposition {
    /// `k_r = min(r_V, r_KV)`.
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn max_angle(&self) -> Option<f64> {
        self.angles.iter().copied().reduce(f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct PrincipalRecord {
    angles: Vec<f64>,
    cosines: Vec<f64>,
    rank_v: usize,
    rank_kv: usize,
    a_v: Vec<Vec<f64>>,
    a_kv: Vec<Vec<f64>>,
}

impl Serialize for PrincipalDecomposition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PrincipalRecord {
            angles: self.angles.clone(),
            cosines: self.cosines.clone(),
            rank_v: self.rank_v,
            rank_kv: self.rank_kv,
            a_v: mat_to_rows(&self.a_v),
            a_kv: mat_to_rows(&self.a_kv),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PrincipalDecomposition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rec = PrincipalRecord::deserialize(deserializer)?;
        let a_v = mat_from_rows(&rec.a_v).map_err(serde::de::Error::custom)?;
        let a_kv = mat_from_rows(&rec.a_kv).map_err(serde::de::Error::custom)?;
        Ok(Self {
            angles: rec.angles,
            cosines: rec.cosines,
            a_v,
            a_kv,
            rank_v: rec.rank_v,
            rank_kv: rec.rank_kv,
        })
    }
}

fn check_kernel_pair(w_v: &DictionaryCoefficients, k_xx: &KernelMatrix, k_txx: &KernelMatrix) -> Result<()> {
    let n = w_v.n_samples();
    for (what, m) in [("K_XX", k_xx), ("K_TXX", k_txx)] {
        if m.nrows() != n {
            return Err(Error::mismatch(
                if what == "K_XX" { "K_XX rows" } else { "K_TXX rows" },
                n,
                m.nrows(),
            ));
        }
        if m.ncols() != n {
            return Err(Error::mismatch(
                if what == "K_XX" {
                    "K_XX columns"
                } else {
                    "K_TXX columns"
                },
                n,
                m.ncols(),
            ));
        }
    }
    Ok(())
}

/// Coefficients `W_KV` of the Koopman image `𝒦V = Φ_X W_KV`, from
/// `(K_XX + λI) W_KV = K_TXX W_V`.
pub fn solve_koopman_image(
    w_v: &DictionaryCoefficients,
    k_xx: &KernelMatrix,
    k_txx: &KernelMatrix,
    lambda: f64,
) -> Result<DictionaryCoefficients> {
    check_kernel_pair(w_v, k_xx, k_txx)?;
    let solver = RegularizedSolver::new(k_xx.as_ref(), lambda)?;
    let rhs = k_txx.as_ref() * w_v.as_ref();
    DictionaryCoefficients::new(solver.solve(rhs.as_ref())?)
}

/// `M_V`, `M_KV` and `M_cross` by direct multiplication.
pub fn gram_triple(
    w_v: &DictionaryCoefficients,
    w_kv: &DictionaryCoefficients,
    k_xx: &KernelMatrix,
    k_txx: &KernelMatrix,
) -> Result<GramTriple> {
    check_kernel_pair(w_v, k_xx, k_txx)?;
    if w_kv.n_samples() != w_v.n_samples() {
        return Err(Error::mismatch("W_KV rows", w_v.n_samples(), w_kv.n_samples()));
    }
    if w_kv.len() != w_v.len() {
        return Err(Error::mismatch("W_KV columns", w_v.len(), w_kv.len()));
    }
    let kw = k_xx.as_ref() * w_v.as_ref();
    let kwkv = k_xx.as_ref() * w_kv.as_ref();
    let tw = k_txx.as_ref() * w_v.as_ref();
    Ok(GramTriple {
        m_v: symmetrize((w_v.as_ref().transpose() * &kw).as_ref()),
        m_kv: symmetrize((w_kv.as_ref().transpose() * &kwkv).as_ref()),
        m_cross: w_v.as_ref().transpose() * &tw,
    })
}

/// QR factors of an implicitly represented collection from its Gram matrix:
/// truncated eigendecomposition `M ≈ Ṽ Λ̃ Ṽᵀ`, `B = Λ̃^{1/2} Ṽᵀ = Q_B R`,
/// `R† = Ṽ Λ̃^{−1/2} Q_B`.
pub fn implicit_qr(m: MatRef<'_, f64>, threshold: f64) -> Result<ImplicitQr> {
    let eig = truncated_eig_psd(m, threshold)?;
    let sqrt: Vec<f64> = eig.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let inv_sqrt: Vec<f64> = sqrt.iter().map(|s| 1.0 / s).collect();
    let b = scale_rows(eig.eigenvectors.transpose(), &sqrt);
    let qr = economy_qr(b.as_ref())?;
    let r_pinv = scale_columns(eig.eigenvectors.as_ref(), &inv_sqrt) * &qr.q;
    Ok(ImplicitQr { r: qr.r, r_pinv, eig })
}

/// Principal angles from the cross Gram matrix and pseudoinverse factors of
/// both subspaces.
///
/// Cosines above `1 + cosine_tolerance` raise
/// [`Error::NumericalInconsistency`]; the rest are clamped to `[0, 1]`.
pub fn principal_from_factors(
    m_cross: MatRef<'_, f64>,
    r_v_pinv: MatRef<'_, f64>,
    r_kv_pinv: MatRef<'_, f64>,
    cosine_tolerance: f64,
) -> Result<PrincipalDecomposition> {
    principal_with_peak(m_cross, r_v_pinv, r_kv_pinv, Some(cosine_tolerance)).map(|(pd, _)| pd)
}

/// As [`principal_from_factors`], also returning the largest cosine before
/// clamping. `None` disables the consistency check.
pub fn principal_with_peak(
    m_cross: MatRef<'_, f64>,
    r_v_pinv: MatRef<'_, f64>,
    r_kv_pinv: MatRef<'_, f64>,
    cosine_tolerance: Option<f64>,
) -> Result<(PrincipalDecomposition, f64)> {
    let cosine_matrix = r_v_pinv.transpose() * m_cross * r_kv_pinv;
    ensure_finite(cosine_matrix.as_ref(), "cosine matrix")?;
    let (rank_v, rank_kv) = (r_v_pinv.ncols(), r_kv_pinv.ncols());
    let k = rank_v.min(rank_kv);
    if k == 0 {
        return Err(Error::EmptyDecomposition);
    }
    let svd = cosine_matrix
        .thin_svd()
        .map_err(|e| Error::FactorizationFailed(format!("cosine svd: {e:?}")))?;
    let sigma = svd.S().column_vector();
    let peak = sigma[0];
    if let Some(tolerance) = cosine_tolerance {
        if peak > 1.0 + tolerance {
            return Err(Error::NumericalInconsistency {
                cosine: peak,
                tolerance,
            });
        }
    }
    let cosines: Vec<f64> = (0..k).map(|i| sigma[i].clamp(0.0, 1.0)).collect();
    let angles = cosines.iter().map(|c| c.acos()).collect();
    let a_v = r_v_pinv * svd.U().subcols(0, k);
    let a_kv = r_kv_pinv * svd.V().subcols(0, k);
    Ok((
        PrincipalDecomposition {
            angles,
            cosines,
            a_v,
            a_kv,
            rank_v,
            rank_kv,
        },
        peak,
    ))
}

/// Kernel matrices and the factored solve for one snapshot set, reusable
/// across dictionaries.
#[derive(Debug)]
pub struct ExactContext {
    kernel: KernelSpec,
    centers: StateMatrix,
    k_xx: KernelMatrix,
    k_txx: KernelMatrix,
    solver: RegularizedSolver,
    threshold: f64,
}

/// Everything computed by one exact principal-angle evaluation.
#[derive(Clone, Debug)]
pub struct ExactAnalysis {
    pub decomposition: PrincipalDecomposition,
    pub gram: GramTriple,
    pub w_kv: DictionaryCoefficients,
    pub qr_v: ImplicitQr,
    pub qr_kv: ImplicitQr,
    /// `‖K_XX W_KV − K_TXX W_V‖_F / ‖K_TXX W_V‖_F`.
    pub containment_residual: f64,
}

impl ExactContext {
    pub fn new(data: &SnapshotData, kernel: &KernelSpec, settings: &ExactSettings) -> Result<Self> {
        let k_xx = gram(kernel, &data.x, &data.x)?;
        let k_txx = gram(kernel, &data.tx, &data.x)?;
        let mut ctx = Self::from_matrices(k_xx, k_txx, settings)?;
        ctx.kernel = *kernel;
        ctx.centers = data.x.clone();
        Ok(ctx)
    }

    pub fn from_matrices(k_xx: KernelMatrix, k_txx: KernelMatrix, settings: &ExactSettings) -> Result<Self> {
        let n = k_xx.nrows();
        check_kernel_pair(&DictionaryCoefficients::zeros(n, 1), &k_xx, &k_txx)?;
        let lambda = settings.regularization.resolve(k_xx.as_ref())?;
        let solver = RegularizedSolver::new(k_xx.as_ref(), lambda)?;
        Ok(Self {
            kernel: KernelSpec::linear(),
            centers: StateMatrix::empty(1),
            k_xx,
            k_txx,
            solver,
            threshold: settings.threshold,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.solver.lambda()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n_samples(&self) -> usize {
        self.k_xx.nrows()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn k_xx(&self) -> &KernelMatrix {
        &self.k_xx
    }

    pub fn k_txx(&self) -> &KernelMatrix {
        &self.k_txx
    }

    fn check(&self, w: &DictionaryCoefficients) -> Result<()> {
        if w.n_samples() != self.n_samples() {
            return Err(Error::mismatch("dictionary rows", self.n_samples(), w.n_samples()));
        }
        Ok(())
    }

    pub fn koopman_image(&self, w_v: &DictionaryCoefficients) -> Result<DictionaryCoefficients> {
        self.check(w_v)?;
        let rhs = self.k_txx.as_ref() * w_v.as_ref();
        DictionaryCoefficients::new(self.solver.solve(rhs.as_ref())?)
    }

    /// Gram triple for `W_V` and its image `W_KV`.
    ///
    /// Uses `K_XX W_KV = K_TXX W_V − λ W_KV`, so
    /// `M_KV = W_KVᵀ K_TXX W_V − λ W_KVᵀ W_KV`. This equals the direct
    /// product `W_KVᵀ K_XX W_KV` but avoids multiplying `K_XX` into
    /// large, nearly cancelling coefficient vectors.
    pub fn gram_triple(&self, w_v: &DictionaryCoefficients, w_kv: &DictionaryCoefficients) -> Result<GramTriple> {
        self.check(w_v)?;
        self.check(w_kv)?;
        let kw = self.k_xx.as_ref() * w_v.as_ref();
        let tw = self.k_txx.as_ref() * w_v.as_ref();
        let lambda = self.lambda();
        let image = w_kv.as_ref().transpose() * &tw;
        let ridge = w_kv.as_ref().transpose() * w_kv.as_ref();
        let m_kv = Mat::from_fn(w_v.len(), w_v.len(), |i, j| image[(i, j)] - lambda * ridge[(i, j)]);
        Ok(GramTriple {
            m_v: symmetrize((w_v.as_ref().transpose() * &kw).as_ref()),
            m_kv: symmetrize(m_kv.as_ref()),
            m_cross: w_v.as_ref().transpose() * &tw,
        })
    }

    pub fn containment_residual(&self, w_v: &DictionaryCoefficients, w_kv: &DictionaryCoefficients) -> f64 {
        let lhs = self.k_xx.as_ref() * w_kv.as_ref();
        let rhs = self.k_txx.as_ref() * w_v.as_ref();
        let denom = rhs.norm_l2();
        if denom == 0.0 {
            return 0.0;
        }
        (&lhs - &rhs).norm_l2() / denom
    }

    pub fn analyze(&self, w_v: &DictionaryCoefficients) -> Result<ExactAnalysis> {
        let w_kv = self.koopman_image(w_v)?;
        let gram = self.gram_triple(w_v, &w_kv)?;
        let qr_v = implicit_qr(gram.m_v.as_ref(), self.threshold)?;
        let qr_kv = implicit_qr(gram.m_kv.as_ref(), self.threshold)?;
        let decomposition = principal_from_factors(
            gram.m_cross.as_ref(),
            qr_v.r_pinv.as_ref(),
            qr_kv.r_pinv.as_ref(),
            EXACT_COSINE_TOLERANCE,
        )?;
        let containment_residual = self.containment_residual(w_v, &w_kv);
        Ok(ExactAnalysis {
            decomposition,
            gram,
            w_kv,
            qr_v,
            qr_kv,
            containment_residual,
        })
    }

    pub fn principal(&self, w_v: &DictionaryCoefficients) -> Result<PrincipalDecomposition> {
        Ok(self.analyze(w_v)?.decomposition)
    }
}

/// Exact principal angles and vectors between `span(Φ_X W_V)` and its
/// Koopman image.
pub fn exact_principal(
    w_v: &DictionaryCoefficients,
    data: &SnapshotData,
    kernel: &KernelSpec,
    settings: &ExactSettings,
) -> Result<PrincipalDecomposition> {
    if w_v.n_samples() != data.len() {
        return Err(Error::mismatch("dictionary rows", data.len(), w_v.n_samples()));
    }
    ExactContext::new(data, kernel, settings)?.principal(w_v)
}

/// `Σᵢ wᵢ k(xᵢ, x)`.
pub fn evaluate_function(w: &[f64], centers: &StateMatrix, kernel: &KernelSpec, x: &[f64]) -> Result<f64> {
    if w.len() != centers.len() {
        return Err(Error::mismatch("function coefficients", centers.len(), w.len()));
    }
    if x.len() != centers.dim() {
        return Err(Error::mismatch("query state", centers.dim(), x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("query state"));
    }
    Ok(w.iter()
        .zip(centers.iter())
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, xi)| c * kernel.eval_unchecked(xi, x))
        .sum())
}

/// `δ(S) = sin θ_max(S, 𝒦S)`.
pub fn invariance_proximity(pd: &PrincipalDecomposition) -> Result<f64> {
    pd.max_angle().map(f64::sin).ok_or(Error::EmptyDecomposition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_uniform, DiscreteSystem, DomainBox};
    use crate::linalg::distance_from_identity;

    fn duffing_data(n: usize, seed: u64) -> SnapshotData {
        let sys = DiscreteSystem::duffing(0.01).unwrap();
        sample_uniform(&sys, n, &DomainBox::cube(2, -2.0, 2.0), seed).unwrap()
    }

    #[test]
    fn zero_dictionary_has_zero_image() {
        let data = duffing_data(20, 1);
        let k = KernelSpec::default();
        let kxx = gram(&k, &data.x, &data.x).unwrap();
        let ktxx = gram(&k, &data.tx, &data.x).unwrap();
        let w = DictionaryCoefficients::zeros(20, 3);
        let wkv = solve_koopman_image(&w, &kxx, &ktxx, 1e-10).unwrap();
        assert!(wkv.as_ref().norm_max() == 0.0);
    }

    #[test]
    fn identity_dynamics_image_is_dictionary() {
        let sys = DiscreteSystem::identity(2);
        let x = duffing_data(25, 2).x;
        let data = SnapshotData::from_states(&sys, x).unwrap();
        let k = KernelSpec::default();
        let kxx = gram(&k, &data.x, &data.x).unwrap();
        let ktxx = gram(&k, &data.tx, &data.x).unwrap();
        let w = DictionaryCoefficients::selection(25, &[0, 3, 7]).unwrap();
        let wkv = solve_koopman_image(&w, &kxx, &ktxx, 1e-12).unwrap();
        let diff = (wkv.as_ref() - w.as_ref()).norm_max();
        assert!(diff < 1e-6, "{diff}");
        let g = gram_triple(&w, &wkv, &kxx, &ktxx).unwrap();
        assert_eq!(g.m_cross, g.m_v);
    }

    #[test]
    fn single_section_gram() {
        let data = duffing_data(10, 3);
        let k = KernelSpec::gaussian(0.8).unwrap();
        let kxx = gram(&k, &data.x, &data.x).unwrap();
        let ktxx = gram(&k, &data.tx, &data.x).unwrap();
        let w = DictionaryCoefficients::selection(10, &[0]).unwrap();
        let wkv = solve_koopman_image(&w, &kxx, &ktxx, 1e-10).unwrap();
        let g = gram_triple(&w, &wkv, &kxx, &ktxx).unwrap();
        assert_eq!(g.m_v[(0, 0)], 1.0);
    }

    #[test]
    fn implicit_qr_identity_and_rank_one() {
        let q = implicit_qr(Mat::<f64>::identity(3, 3).as_ref(), 1e-8).unwrap();
        assert_eq!(q.rank(), 3);
        let rtr = q.r.transpose() * &q.r;
        assert!(distance_from_identity(rtr.as_ref()) < 1e-12);

        let d = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        let q = implicit_qr(d.as_ref(), 1e-8).unwrap();
        assert_eq!(q.rank(), 1);
        assert!((q.r[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(q.r[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn implicit_qr_of_zero_is_all_truncated() {
        assert!(matches!(
            implicit_qr(Mat::<f64>::zeros(2, 2).as_ref(), 1e-8),
            Err(Error::AllTruncated { .. })
        ));
    }

    #[test]
    fn proximity_values() {
        let pd = |angles: Vec<f64>| PrincipalDecomposition {
            cosines: angles.iter().map(|a: &f64| a.cos()).collect(),
            a_v: Mat::zeros(angles.len(), angles.len()),
            a_kv: Mat::zeros(angles.len(), angles.len()),
            rank_v: angles.len(),
            rank_kv: angles.len(),
            angles,
        };
        assert_eq!(invariance_proximity(&pd(vec![0.0, 0.0])).unwrap(), 0.0);
        assert!((invariance_proximity(&pd(vec![std::f64::consts::FRAC_PI_2])).unwrap() - 1.0).abs() < 1e-16);
        assert_eq!(invariance_proximity(&pd(vec![0.1, 0.3])).unwrap(), 0.3f64.sin());
        assert!(matches!(
            invariance_proximity(&pd(vec![])),
            Err(Error::EmptyDecomposition)
        ));
    }

    #[test]
    fn evaluate_function_cases() {
        let data = duffing_data(10, 4);
        let k = KernelSpec::default();
        let q = [0.3, -0.4];
        let mut w = vec![0.0; 10];
        assert_eq!(evaluate_function(&w, &data.x, &k, &q).unwrap(), 0.0);
        w[0] = 1.0;
        assert_eq!(
            evaluate_function(&w, &data.x, &k, &q).unwrap(),
            k.eval_unchecked(data.x.state(0), &q)
        );
        assert!(evaluate_function(&w[..3], &data.x, &k, &q).is_err());
        assert!(evaluate_function(&w, &data.x, &k, &[0.0]).is_err());
    }

    #[test]
    fn centers_sampling() {
        let a = sample_centers(50, 10, 9).unwrap();
        assert_eq!(a, sample_centers(50, 10, 9).unwrap());
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
        let mut all = sample_centers(7, 7, 1).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        assert!(sample_centers(5, 6, 0).is_err());
        assert!(sample_centers(5, 0, 0).is_err());
    }

    #[test]
    fn decomposition_json_round_trip() {
        let data = duffing_data(30, 5);
        let w = DictionaryCoefficients::selection(30, &[1, 4, 9, 16]).unwrap();
        let pd = exact_principal(&w, &data, &KernelSpec::default(), &ExactSettings::default()).unwrap();
        let json = serde_json::to_string(&pd).unwrap();
        let back: PrincipalDecomposition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pd);
    }
}
