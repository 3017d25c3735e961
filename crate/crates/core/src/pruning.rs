//! Subspace pruning by principal vectors: repeatedly drop the direction of
//! the dictionary that is worst aligned with its Koopman image until the
//! invariance proximity falls below a tolerance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotData;
use crate::error::{Error, Result};
use crate::geometry::{
    invariance_proximity, DictionaryCoefficients, ExactContext, ExactSettings, PrincipalDecomposition,
};
use crate::io::format_float;
use crate::kernels::KernelSpec;
use crate::nystrom::{ApproxContext, ApproxSettings, NystromModel};

/// Anything that yields principal angles for a dictionary on fixed data.
pub trait PrincipalSolver {
    fn principal(&self, w_v: &DictionaryCoefficients) -> Result<PrincipalDecomposition>;
}

impl PrincipalSolver for ExactContext {
    fn principal(&self, w_v: &DictionaryCoefficients) -> Result<PrincipalDecomposition> {
        ExactContext::principal(self, w_v)
    }
}

impl PrincipalSolver for ApproxContext {
    fn principal(&self, w_v: &DictionaryCoefficients) -> Result<PrincipalDecomposition> {
        ApproxContext::principal(self, w_v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    Exact,
    Approximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Target invariance proximity, in `[0, 1)`.
    pub epsilon: f64,
    /// Cap on removal steps; `None` means the dictionary size.
    pub max_iterations: Option<usize>,
    pub mode: PruneMode,
}

impl PruneConfig {
    pub fn new(epsilon: f64, mode: PruneMode) -> Result<Self> {
        let config = Self {
            epsilon,
            max_iterations: None,
            mode,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "pruning tolerance {} must lie in [0, 1)",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// State of the dictionary at the start of one loop pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneIteration {
    pub iteration: usize,
    /// Number of dictionary columns.
    pub dimension: usize,
    pub rank_v: usize,
    pub rank_kv: usize,
    pub angles: Vec<f64>,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PruneReport {
    pub mode: PruneMode,
    pub epsilon: f64,
    pub iterations: Vec<PruneIteration>,
    pub final_delta: f64,
    pub final_dimension: usize,
    pub converged: bool,
    #[serde(skip)]
    pub final_w: DictionaryCoefficients,
}

impl PruneReport {
    pub fn dimensions(&self) -> Vec<usize> {
        self.iterations.iter().map(|it| it.dimension).collect()
    }

    /// Number of removal steps performed.
    pub fn steps(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    /// `iteration,dimension,delta` per loop pass.
    pub fn write_iterations_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(["iteration", "dimension", "delta"])?;
        for it in &self.iterations {
            w.write_record([
                it.iteration.to_string(),
                it.dimension.to_string(),
                format_float(it.delta),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Keeps the `k_r − 1` best-aligned principal vectors of `S` as the new
/// dictionary: `W' = W_V · A_V[:, ..k_r−1]`.
pub fn spv_step(w_v: &DictionaryCoefficients, pd: &PrincipalDecomposition) -> Result<DictionaryCoefficients> {
    let k = pd.len();
    if k <= 1 {
        return Err(Error::SubspaceExhausted(k));
    }
    if pd.a_v.nrows() != w_v.len() {
        return Err(Error::mismatch(
            "principal vector coefficients",
            w_v.len(),
            pd.a_v.nrows(),
        ));
    }
    w_v.transform(pd.a_v.as_ref().subcols(0, k - 1))
}

/// The pruning loop for any solver.
///
/// Stops when `δ ≤ ε` (converged), when one principal vector remains, or
/// after `max_iterations` removals.
pub fn prune_with<S: PrincipalSolver>(
    solver: &S,
    w_v: &DictionaryCoefficients,
    config: &PruneConfig,
) -> Result<PruneReport> {
    config.validate()?;
    let max_iterations = config.max_iterations.unwrap_or(w_v.len());
    let mut w = w_v.clone();
    let mut iterations = Vec::new();
    loop {
        let pd = solver.principal(&w)?;
        let delta = invariance_proximity(&pd)?;
        let iteration = iterations.len();
        iterations.push(PruneIteration {
            iteration,
            dimension: w.len(),
            rank_v: pd.rank_v,
            rank_kv: pd.rank_kv,
            angles: pd.angles.clone(),
            delta,
        });
        let converged = delta <= config.epsilon;
        if converged || pd.len() <= 1 || iteration >= max_iterations {
            return Ok(PruneReport {
                mode: config.mode,
                epsilon: config.epsilon,
                iterations,
                final_delta: delta,
                final_dimension: w.len(),
                converged,
                final_w: w,
            });
        }
        w = spv_step(&w, &pd)?;
    }
}

/// Pruning with exact principal angles.
pub fn kernel_spv(
    w_v: &DictionaryCoefficients,
    data: &SnapshotData,
    kernel: &KernelSpec,
    settings: &ExactSettings,
    config: &PruneConfig,
) -> Result<PruneReport> {
    let ctx = ExactContext::new(data, kernel, settings)?;
    prune_with(
        &ctx,
        w_v,
        &PruneConfig {
            mode: PruneMode::Exact,
            ..*config
        },
    )
}

/// Pruning with Nyström-approximate principal angles.
pub fn approx_kernel_spv(
    w_v: &DictionaryCoefficients,
    data: &SnapshotData,
    model: &NystromModel,
    settings: &ApproxSettings,
    config: &PruneConfig,
) -> Result<PruneReport> {
    let ctx = ApproxContext::new(model.clone(), data, settings)?;
    prune_with(
        &ctx,
        w_v,
        &PruneConfig {
            mode: PruneMode::Approximate,
            ..*config
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_uniform, DiscreteSystem, DomainBox};
    use crate::geometry::{exact_principal, sample_centers};
    use crate::linalg::distance_from_identity;
    use faer::Mat;

    fn duffing(n: usize, seed: u64) -> SnapshotData {
        let sys = DiscreteSystem::duffing(0.01).unwrap();
        sample_uniform(&sys, n, &DomainBox::cube(2, -2.0, 2.0), seed).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PruneConfig::new(0.0, PruneMode::Exact).is_ok());
        assert!(PruneConfig::new(1.0, PruneMode::Exact).is_err());
        assert!(PruneConfig::new(-0.1, PruneMode::Exact).is_err());
    }

    #[test]
    fn step_on_identity_dynamics_keeps_orthonormal_vectors() {
        let sys = DiscreteSystem::identity(2);
        let data = SnapshotData::from_states(&sys, duffing(30, 1).x).unwrap();
        let k = KernelSpec::default();
        let w = DictionaryCoefficients::selection(30, &[0, 7, 19]).unwrap();
        let ctx = ExactContext::new(&data, &k, &ExactSettings::default()).unwrap();
        let pd = ctx.principal(&w).unwrap();
        assert_eq!(pd.len(), 3);
        let next = spv_step(&w, &pd).unwrap();
        assert_eq!(next.len(), 2);
        let g = ctx.analyze(&next).unwrap().gram;
        assert!(distance_from_identity(g.m_v.as_ref()) < 1e-8);
    }

    #[test]
    fn step_refuses_single_vector() {
        let pd = PrincipalDecomposition {
            angles: vec![0.2],
            cosines: vec![0.2f64.cos()],
            a_v: Mat::zeros(1, 1),
            a_kv: Mat::zeros(1, 1),
            rank_v: 1,
            rank_kv: 1,
        };
        let w = DictionaryCoefficients::selection(3, &[0]).unwrap();
        assert!(matches!(spv_step(&w, &pd), Err(Error::SubspaceExhausted(1))));
    }

    #[test]
    fn duplicated_columns_prune_from_rank() {
        let data = duffing(40, 2);
        let w = DictionaryCoefficients::selection(40, &[1, 2, 3, 1, 2]).unwrap();
        let pd = exact_principal(&w, &data, &KernelSpec::default(), &ExactSettings::default()).unwrap();
        assert_eq!(pd.rank_v, 3);
        let next = spv_step(&w, &pd).unwrap();
        assert_eq!(next.len(), pd.len() - 1);
    }

    #[test]
    fn retained_vector_angle_matches_recomputation() {
        let data = duffing(60, 3);
        let k = KernelSpec::default();
        let centers = sample_centers(60, 2, 4).unwrap();
        let w = DictionaryCoefficients::selection(60, &centers).unwrap();
        let ctx = ExactContext::new(&data, &k, &ExactSettings::default()).unwrap();
        let pd = ctx.principal(&w).unwrap();
        let one = spv_step(&w, &pd).unwrap();
        let again = ctx.principal(&one).unwrap();
        assert_eq!(again.len(), 1);
        // The image of the retained vector lies in the old image space, where
        // the first principal partner is already the closest element.
        assert!(again.angles[0] >= pd.angles[0] - 1e-9);
        let delta = invariance_proximity(&again).unwrap();
        assert!((delta - again.angles[0].sin()).abs() < 1e-15);
    }

    #[test]
    fn identity_dynamics_converges_immediately() {
        let sys = DiscreteSystem::identity(2);
        let data = SnapshotData::from_states(&sys, duffing(30, 5).x).unwrap();
        let w = DictionaryCoefficients::selection(30, &[2, 4, 6, 8]).unwrap();
        let cfg = PruneConfig::new(1e-3, PruneMode::Exact).unwrap();
        let r = kernel_spv(&w, &data, &KernelSpec::default(), &ExactSettings::default(), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.steps(), 0);
        assert_eq!(r.final_dimension, 4);
    }

    #[test]
    fn loose_tolerance_converges_immediately() {
        let data = duffing(50, 6);
        let w = DictionaryCoefficients::selection(50, &sample_centers(50, 6, 1).unwrap()).unwrap();
        let cfg = PruneConfig::new(1.0 - 1e-12, PruneMode::Exact).unwrap();
        let r = kernel_spv(&w, &data, &KernelSpec::default(), &ExactSettings::default(), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.steps(), 0);
    }

    #[test]
    fn loop_terminates_and_records_each_pass() {
        let data = duffing(80, 7);
        let w = DictionaryCoefficients::selection(80, &sample_centers(80, 10, 2).unwrap()).unwrap();
        let cfg = PruneConfig::new(0.0, PruneMode::Exact).unwrap();
        let r = kernel_spv(&w, &data, &KernelSpec::default(), &ExactSettings::default(), &cfg).unwrap();
        let dims = r.dimensions();
        assert!(dims.windows(2).all(|p| p[1] < p[0]));
        assert!(r.steps() <= 10);
        assert_eq!(*dims.last().unwrap(), r.final_dimension);
        if r.converged {
            assert!(r.final_delta <= cfg.epsilon);
        }
        let capped = PruneConfig {
            max_iterations: Some(2),
            ..cfg
        };
        let r2 = kernel_spv(&w, &data, &KernelSpec::default(), &ExactSettings::default(), &capped).unwrap();
        assert!(r2.steps() <= 2);
    }

    #[test]
    fn iterations_csv() {
        let dir = tempfile::tempdir().unwrap();
        let data = duffing(40, 8);
        let w = DictionaryCoefficients::selection(40, &[0, 1, 2]).unwrap();
        let cfg = PruneConfig::new(0.0, PruneMode::Exact).unwrap();
        let r = kernel_spv(&w, &data, &KernelSpec::default(), &ExactSettings::default(), &cfg).unwrap();
        let path = dir.path().join("it.csv");
        r.write_iterations_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iteration,dimension,delta\n"));
        assert_eq!(text.lines().count(), r.iterations.len() + 1);
    }
}
