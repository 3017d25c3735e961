//! Nyström feature maps and the approximate principal-angle path.
//!
//! With landmarks `L` and `K_LL = U Λ Uᵀ` (truncated), every state maps to
//! `ψ(x) = Λ^{−1/2} Uᵀ k_L(x)`, so `ψ(x)ᵀψ(y)` approximates `k(x, y)` and
//! equals it on the landmarks. A dictionary `V = Φ_X W_V` becomes the
//! feature-space matrix `Z_V = Ψ(X) W_V`; its Koopman image is the
//! Tikhonov least-squares fit
//! `Z_KV = (Ψ(X)Ψ(X)ᵀ + λI)⁻¹ Ψ(X) Ψ(T(X))ᵀ Z_V`.
//! Nothing here allocates an `N × N` matrix.

use std::path::Path;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotData;
use crate::error::{Error, Result};
use crate::geometry::{
    principal_with_peak, DictionaryCoefficients, GramTriple, PrincipalDecomposition, Regularization,
};
use crate::io::{mat_from_rows, mat_to_rows, read_json, read_matrix_csv, write_json, write_matrix_csv};
use crate::kernels::{gram_with, KernelSpec};
use crate::linalg::{
    distance_from_identity, scale_columns, scale_rows, truncated_eig_psd, truncated_svd, RegularizedSolver,
    TruncatedEig, TruncatedSvd,
};
use crate::parallel::{map_indices, Execution};
use crate::rng::{sample_without_replacement, stream_rng, STREAM_LANDMARKS};
use crate::states::StateMatrix;

/// Absolute eigenvalue cutoff applied to `K_LL`.
pub const DEFAULT_LANDMARK_THRESHOLD: f64 = 1e-10;

/// Cosines above `1 + APPROX_COSINE_TOLERANCE` indicate mistuned thresholds.
pub const APPROX_COSINE_TOLERANCE: f64 = 0.5;

/// Feature columns are produced in blocks of this many states; the block
/// size is fixed so that sequential and parallel runs agree bit for bit.
const FEATURE_BLOCK: usize = 256;

/// Landmarks and the truncated spectral factors of their kernel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NystromModel {
    pub kernel: KernelSpec,
    pub landmarks: StateMatrix,
    /// Column indices into the snapshot states, when sampled from them.
    pub landmark_indices: Option<Vec<usize>>,
    pub seed: Option<u64>,
    /// `Λ_L` descending and `U_L`; `eig.rank()` is the feature dimension.
    pub eig: TruncatedEig,
    /// `Λ_L^{−1/2} U_Lᵀ`, `d × D`.
    projection: Mat<f64>,
}

impl NystromModel {
    /// Model on the given landmark states.
    pub fn from_landmarks(kernel: &KernelSpec, landmarks: StateMatrix, threshold: f64) -> Result<Self> {
        let kernel = kernel.validated()?;
        if landmarks.is_empty() {
            return Err(Error::InvalidCount("at least one landmark is required".into()));
        }
        let k_ll = gram_with(&kernel, &landmarks, &landmarks, Execution::default())?;
        let eig = truncated_eig_psd(k_ll.as_ref(), threshold)?;
        Ok(Self::assemble(kernel, landmarks, eig))
    }

    fn assemble(kernel: KernelSpec, landmarks: StateMatrix, eig: TruncatedEig) -> Self {
        let inv_sqrt: Vec<f64> = eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
        let projection = scale_rows(eig.eigenvectors.transpose(), &inv_sqrt);
        Self {
            kernel,
            landmarks,
            landmark_indices: None,
            seed: None,
            eig,
            projection,
        }
    }

    /// `D`.
    pub fn n_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    /// `d ≤ D`, the number of retained landmark eigenvalues.
    pub fn feature_dim(&self) -> usize {
        self.eig.rank()
    }

    pub fn state_dim(&self) -> usize {
        self.landmarks.dim()
    }

    /// `ψ(x)`.
    pub fn feature_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::mismatch("feature map input", self.state_dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("feature map input"));
        }
        let k: Vec<f64> = self
            .landmarks
            .iter()
            .map(|l| self.kernel.eval_unchecked(l, x))
            .collect();
        let d = self.feature_dim();
        Ok((0..d)
            .map(|i| (0..k.len()).map(|j| self.projection[(i, j)] * k[j]).sum())
            .collect())
    }

    /// `Ψ(X)`, `d × N`, column `j` equal to `ψ(xⱼ)` up to rounding.
    pub fn feature_matrix(&self, x: &StateMatrix) -> Result<Mat<f64>> {
        self.feature_matrix_with(x, Execution::default())
    }

    pub fn feature_matrix_with(&self, x: &StateMatrix, exec: Execution) -> Result<Mat<f64>> {
        if x.dim() != self.state_dim() {
            return Err(Error::mismatch(
                "feature matrix state dimension",
                self.state_dim(),
                x.dim(),
            ));
        }
        let n = x.len();
        let d = self.feature_dim();
        let blocks = n.div_ceil(FEATURE_BLOCK);
        let parts = map_indices(exec, blocks, |b| -> Result<Mat<f64>> {
            let lo = b * FEATURE_BLOCK;
            let hi = (lo + FEATURE_BLOCK).min(n);
            let chunk = x.select(&(lo..hi).collect::<Vec<_>>());
            let k_lx = gram_with(&self.kernel, &self.landmarks, &chunk, Execution::Sequential)?;
            Ok(&self.projection * k_lx.as_ref())
        });
        let mut out = Mat::zeros(d, n);
        for (b, part) in parts.into_iter().enumerate() {
            let part = part?;
            let lo = b * FEATURE_BLOCK;
            for j in 0..part.ncols() {
                out.col_as_slice_mut(lo + j).copy_from_slice(part.col_as_slice(j));
            }
        }
        Ok(out)
    }
}

/// `D` landmarks drawn uniformly without replacement from the columns of `X`,
/// with the default landmark cutoff.
pub fn fit_landmarks(data: &SnapshotData, count: usize, seed: u64, kernel: &KernelSpec) -> Result<NystromModel> {
    fit_landmarks_with(data, count, seed, kernel, DEFAULT_LANDMARK_THRESHOLD)
}

pub fn fit_landmarks_with(
    data: &SnapshotData,
    count: usize,
    seed: u64,
    kernel: &KernelSpec,
    threshold: f64,
) -> Result<NystromModel> {
    if count == 0 || count > data.len() {
        return Err(Error::InvalidCount(format!(
            "landmark count {count} must lie in 1..={}",
            data.len()
        )));
    }
    let mut rng = stream_rng(seed, STREAM_LANDMARKS);
    let indices = sample_without_replacement(&mut rng, data.len(), count);
    let mut model = NystromModel::from_landmarks(kernel, data.x.select(&indices), threshold)?;
    model.landmark_indices = Some(indices);
    model.seed = Some(seed);
    Ok(model)
}

/// Singular-value cutoffs for `Z_V` and `Z_KV`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdSchedule {
    /// `τ = c · D^{−1/2}` for each side.
    Scaled {
        c_v: f64,
        c_kv: f64,
    },
    Fixed {
        tau_v: f64,
        tau_kv: f64,
    },
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule::Scaled { c_v: 1e-3, c_kv: 1e-3 }
    }
}

impl ThresholdSchedule {
    /// `(τ_V, τ_KV)` for `D` landmarks.
    pub fn resolve(&self, n_landmarks: usize) -> (f64, f64) {
        match *self {
            ThresholdSchedule::Scaled { c_v, c_kv } => {
                let s = (n_landmarks.max(1) as f64).sqrt();
                (c_v / s, c_kv / s)
            }
            ThresholdSchedule::Fixed { tau_v, tau_kv } => (tau_v, tau_kv),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSettings {
    /// Shift for `Ψ(X)Ψ(X)ᵀ`; relative values scale `trace / d`.
    pub regularization: Regularization,
    pub thresholds: ThresholdSchedule,
    /// `None` clamps every cosine without checking.
    pub cosine_tolerance: Option<f64>,
}

impl Default for ApproxSettings {
    fn default() -> Self {
        Self {
            regularization: Regularization::Relative(1e-8),
            thresholds: ThresholdSchedule::default(),
            cosine_tolerance: Some(APPROX_COSINE_TOLERANCE),
        }
    }
}

/// Feature-space representations of `V`, `𝒦V` and `V∘T`, before truncation.
#[derive(Clone, Debug)]
pub struct ApproxTargets {
    /// `Ψ(X) W_V`.
    pub z_v: Mat<f64>,
    /// Tikhonov fit of the Koopman image.
    pub z_kv: Mat<f64>,
    /// `Ψ(T(X)) W_V`.
    pub z_tv: Mat<f64>,
    pub lambda: f64,
}

impl ApproxTargets {
    /// `M̃_cross = Z_TVᵀ Z_V`, which approximates `W_Vᵀ K_TXX W_V`.
    pub fn cross(&self) -> Mat<f64> {
        self.z_tv.transpose() * &self.z_v
    }
}

/// Truncated factor `R̃ = Σ Vᵀ` of a target matrix and its pseudoinverse
/// `R̃† = V Σ⁻¹`.
#[derive(Clone, Debug)]
pub struct ApproxFactor {
    pub svd: TruncatedSvd,
    pub r: Mat<f64>,
    pub r_pinv: Mat<f64>,
}

impl ApproxFactor {
    pub fn new(z: MatRef<'_, f64>, threshold: f64) -> Result<Self> {
        let svd = truncated_svd(z, threshold)?;
        let inv: Vec<f64> = svd.singular_values.iter().map(|s| 1.0 / s).collect();
        let r = scale_rows(svd.right_vectors.transpose(), &svd.singular_values);
        let r_pinv = scale_columns(svd.right_vectors.as_ref(), &inv);
        Ok(Self { svd, r, r_pinv })
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    /// `‖(R̃†)ᵀ M R̃† − I‖₂` for an exact Gram matrix `M`.
    pub fn orthonormality_residual(&self, m: MatRef<'_, f64>) -> f64 {
        let g = self.r_pinv.transpose() * m * &self.r_pinv;
        distance_from_identity(g.as_ref())
    }
}

/// Everything computed by one approximate principal-angle evaluation.
#[derive(Clone, Debug)]
pub struct ApproxAnalysis {
    pub decomposition: PrincipalDecomposition,
    pub targets: ApproxTargets,
    pub factor_v: ApproxFactor,
    pub factor_kv: ApproxFactor,
    /// `(τ_V, τ_KV)` actually applied.
    pub thresholds: (f64, f64),
    /// Largest singular value of the cosine matrix before clamping.
    pub peak_cosine: f64,
}

impl ApproxAnalysis {
    /// `(ε_V, ε_KV)` against exact Gram matrices.
    pub fn orthonormality_residuals(&self, exact: &GramTriple) -> (f64, f64) {
        (
            self.factor_v.orthonormality_residual(exact.m_v.as_ref()),
            self.factor_kv.orthonormality_residual(exact.m_kv.as_ref()),
        )
    }
}

/// Feature matrices and the factored `d × d` solve for one snapshot set,
/// reusable across dictionaries.
#[derive(Debug)]
pub struct ApproxContext {
    model: NystromModel,
    psi_x: Mat<f64>,
    psi_tx: Mat<f64>,
    /// `Ψ(X) Ψ(T(X))ᵀ`.
    psi_cross: Mat<f64>,
    solver: RegularizedSolver,
    settings: ApproxSettings,
}

impl ApproxContext {
    pub fn new(model: NystromModel, data: &SnapshotData, settings: &ApproxSettings) -> Result<Self> {
        Self::with_execution(model, data, settings, Execution::default())
    }

    pub fn with_execution(
        model: NystromModel,
        data: &SnapshotData,
        settings: &ApproxSettings,
        exec: Execution,
    ) -> Result<Self> {
        let psi_x = model.feature_matrix_with(&data.x, exec)?;
        let psi_tx = model.feature_matrix_with(&data.tx, exec)?;
        let gram = psi_x.as_ref() * psi_x.transpose();
        let lambda = settings.regularization.resolve(gram.as_ref())?;
        let solver = RegularizedSolver::new(gram.as_ref(), lambda)?;
        let psi_cross = psi_x.as_ref() * psi_tx.transpose();
        Ok(Self {
            model,
            psi_x,
            psi_tx,
            psi_cross,
            solver,
            settings: *settings,
        })
    }

    pub fn model(&self) -> &NystromModel {
        &self.model
    }

    pub fn settings(&self) -> &ApproxSettings {
        &self.settings
    }

    pub fn lambda(&self) -> f64 {
        self.solver.lambda()
    }

    pub fn n_samples(&self) -> usize {
        self.psi_x.ncols()
    }

    /// `(τ_V, τ_KV)` for this model's landmark count.
    pub fn thresholds(&self) -> (f64, f64) {
        self.settings.thresholds.resolve(self.model.n_landmarks())
    }

    pub fn targets(&self, w_v: &DictionaryCoefficients) -> Result<ApproxTargets> {
        if w_v.n_samples() != self.n_samples() {
            return Err(Error::mismatch("dictionary rows", self.n_samples(), w_v.n_samples()));
        }
        let z_v = &self.psi_x * w_v.as_ref();
        let z_tv = &self.psi_tx * w_v.as_ref();
        let rhs = &self.psi_cross * &z_v;
        let z_kv = self.solver.solve(rhs.as_ref())?;
        Ok(ApproxTargets {
            z_v,
            z_kv,
            z_tv,
            lambda: self.lambda(),
        })
    }

    pub fn analyze(&self, w_v: &DictionaryCoefficients) -> Result<ApproxAnalysis> {
        let targets = self.targets(w_v)?;
        let (tau_v, tau_kv) = self.thresholds();
        let factor_v = ApproxFactor::new(targets.z_v.as_ref(), tau_v)?;
        let factor_kv = ApproxFactor::new(targets.z_kv.as_ref(), tau_kv)?;
        let (decomposition, peak_cosine) = principal_with_peak(
            targets.cross().as_ref(),
            factor_v.r_pinv.as_ref(),
            factor_kv.r_pinv.as_ref(),
            self.settings.cosine_tolerance,
        )?;
        Ok(ApproxAnalysis {
            decomposition,
            targets,
            factor_v,
            factor_kv,
            thresholds: (tau_v, tau_kv),
            peak_cosine,
        })
    }

    pub fn principal(&self, w_v: &DictionaryCoefficients) -> Result<PrincipalDecomposition> {
        Ok(self.analyze(w_v)?.decomposition)
    }
}

/// Pre-truncation targets for one dictionary.
pub fn target_matrices(
    model: &NystromModel,
    data: &SnapshotData,
    w_v: &DictionaryCoefficients,
    regularization: Regularization,
) -> Result<ApproxTargets> {
    let settings = ApproxSettings {
        regularization,
        ..ApproxSettings::default()
    };
    ApproxContext::new(model.clone(), data, &settings)?.targets(w_v)
}

/// Approximate principal angles and vectors through the Nyström features.
pub fn approx_principal(
    model: &NystromModel,
    data: &SnapshotData,
    w_v: &DictionaryCoefficients,
    settings: &ApproxSettings,
) -> Result<PrincipalDecomposition> {
    ApproxContext::new(model.clone(), data, settings)?.principal(w_v)
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    kernel: KernelSpec,
    seed: Option<u64>,
    landmark_indices: Option<Vec<usize>>,
    threshold: f64,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl NystromModel {
    /// Writes `landmarks.csv` (one state per row) and `nystrom.json`
    /// (kernel, seed, spectral factors) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let rows = self.landmarks.to_mat().transpose().to_owned();
        write_matrix_csv(&dir.join("landmarks.csv"), &rows)?;
        write_json(
            &dir.join("nystrom.json"),
            &ModelRecord {
                kernel: self.kernel,
                seed: self.seed,
                landmark_indices: self.landmark_indices.clone(),
                threshold: self.eig.threshold_used,
                eigenvalues: self.eig.eigenvalues.clone(),
                eigenvectors: mat_to_rows(&self.eig.eigenvectors),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let rows = read_matrix_csv(&dir.join("landmarks.csv"))?;
        let landmarks = StateMatrix::from_mat(&rows.transpose().to_owned())?;
        let rec: ModelRecord = read_json(&dir.join("nystrom.json"))?;
        let eigenvectors = mat_from_rows(&rec.eigenvectors)?;
        if eigenvectors.nrows() != landmarks.len() || eigenvectors.ncols() != rec.eigenvalues.len() {
            return Err(Error::Format("nystrom.json factors do not match landmarks.csv".into()));
        }
        let eig = TruncatedEig {
            eigenvalues: rec.eigenvalues,
            eigenvectors,
            threshold_used: rec.threshold,
        };
        let mut model = Self::assemble(rec.kernel.validated()?, landmarks, eig);
        model.seed = rec.seed;
        model.landmark_indices = rec.landmark_indices;
        Ok(model)
    }
}
