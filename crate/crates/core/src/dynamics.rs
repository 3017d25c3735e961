//! Discrete-time systems and snapshot generation.

use faer::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_DATA};
use crate::states::StateMatrix;

/// Default Euler step for the Duffing map.
pub const DEFAULT_DT: f64 = 0.01;

/// Serializable identity of a discrete-time map `x⁺ = T(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemDescriptor {
    /// Explicit-Euler Duffing oscillator `ẍ = x − 3x³`.
    Duffing { dt: f64 },
    /// `x⁺ = A x`, `A` given row by row.
    Linear { matrix: Vec<Vec<f64>> },
}

/// A discrete-time system with a validated descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSystem {
    descriptor: SystemDescriptor,
    state_dim: usize,
}

impl DiscreteSystem {
    pub fn duffing(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            descriptor: SystemDescriptor::Duffing { dt },
            state_dim: 2,
        })
    }

    pub fn identity(n: usize) -> Self {
        linear_system(&Mat::<f64>::identity(n, n)).expect("identity is finite and square")
    }

    pub fn from_descriptor(descriptor: SystemDescriptor) -> Result<Self> {
        match descriptor {
            SystemDescriptor::Duffing { dt } => Self::duffing(dt),
            SystemDescriptor::Linear { ref matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidParameter(
                        "linear system matrix must be square and nonempty".into(),
                    ));
                }
                linear_system(&Mat::from_fn(n, n, |i, j| matrix[i][j]))
            }
        }
    }

    pub fn descriptor(&self) -> &SystemDescriptor {
        &self.descriptor
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// One application of the map.
    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        match &self.descriptor {
            SystemDescriptor::Duffing { dt } => duffing_step([x[0], x[1]], *dt).to_vec(),
            SystemDescriptor::Linear { matrix } => matrix
                .iter()
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    pub fn step_all(&self, x: &StateMatrix) -> Result<StateMatrix> {
        if x.dim() != self.state_dim {
            return Err(Error::mismatch("system state dimension", self.state_dim, x.dim()));
        }
        Ok(x.map(|s| self.step(s)))
    }
}

/// `(x₁ + dt·x₂, x₂ + dt·(x₁ − 3x₁³))`.
pub fn duffing_step(x: [f64; 2], dt: f64) -> [f64; 2] {
    let [x1, x2] = x;
    [x1 + dt * x2, x2 + dt * (x1 - 3.0 * x1 * x1 * x1)]
}

pub fn linear_system(a: &Mat<f64>) -> Result<DiscreteSystem> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidParameter("linear system matrix must be square".into()));
    }
    crate::linalg::ensure_finite(a.as_ref(), "linear system matrix")?;
    let matrix = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect();
    Ok(DiscreteSystem {
        descriptor: SystemDescriptor::Linear { matrix },
        state_dim: a.nrows(),
    })
}

/// `T^steps(x)`; `steps = 0` returns `x`.
pub fn advance(system: &DiscreteSystem, x: &[f64], steps: usize) -> Vec<f64> {
    let mut state = x.to_vec();
    for _ in 0..steps {
        state = system.step(&state);
    }
    state
}

/// Axis-aligned sampling box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Degenerate (zero-width) sides are allowed; inverted ones are not.
    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::InvalidBox(format!(
                "bounds have lengths {} and {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidBox(format!("axis {k}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// Paired snapshots `X` and `T(X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotData {
    pub x: StateMatrix,
    pub tx: StateMatrix,
    pub system: SystemDescriptor,
    pub seed: Option<u64>,
    pub domain: Option<DomainBox>,
}

impl SnapshotData {
    /// Pairs arbitrary states with their images under `system`.
    pub fn from_states(system: &DiscreteSystem, x: StateMatrix) -> Result<Self> {
        let tx = system.step_all(&x)?;
        Ok(Self {
            x,
            tx,
            system: system.descriptor().clone(),
            seed: None,
            domain: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.x.dim()
    }

    pub fn system(&self) -> Result<DiscreteSystem> {
        DiscreteSystem::from_descriptor(self.system.clone())
    }

    /// Re-applies the map to every column of `X` and checks bit-equality
    /// with `T(X)`.
    pub fn is_consistent(&self) -> Result<bool> {
        let system = self.system()?;
        Ok(system.step_all(&self.x)? == self.tx)
    }
}

/// i.i.d. uniform states in `domain`, paired with their images.
pub fn sample_uniform(system: &DiscreteSystem, count: usize, domain: &DomainBox, seed: u64) -> Result<SnapshotData> {
    if count == 0 {
        return Err(Error::InvalidCount("sample count must be at least 1".into()));
    }
    domain.validate()?;
    if domain.dim() != system.state_dim() {
        return Err(Error::mismatch(
            "domain box dimension",
            system.state_dim(),
            domain.dim(),
        ));
    }
    let mut rng = stream_rng(seed, STREAM_DATA);
    let mut data = Vec::with_capacity(count * domain.dim());
    for _ in 0..count {
        for (lo, hi) in domain.lower.iter().zip(&domain.upper) {
            let u: f64 = rng.random();
            // Clamp guards the upper edge against rounding in lo + (hi − lo)·u.
            data.push((lo + (hi - lo) * u).clamp(*lo, *hi));
        }
    }
    let x = StateMatrix::new(domain.dim(), data)?;
    let mut snapshots = SnapshotData::from_states(system, x)?;
    snapshots.seed = Some(seed);
    snapshots.domain = Some(domain.clone());
    Ok(snapshots)
}

/// Consecutive states of one trajectory: `X = [x₀ … x_{steps−1}]`,
/// `T(X) = [x₁ … x_steps]`.
pub fn rollout(system: &DiscreteSystem, x0: &[f64], steps: usize) -> Result<SnapshotData> {
    if steps == 0 {
        return Err(Error::InvalidCount("rollout needs at least one step".into()));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::mismatch("rollout initial state", system.state_dim(), x0.len()));
    }
    let mut states = Vec::with_capacity(steps);
    let mut current = x0.to_vec();
    for _ in 0..steps {
        let next = system.step(&current);
        states.push(std::mem::replace(&mut current, next));
    }
    let x = StateMatrix::from_states(system.state_dim(), &states)?;
    SnapshotData::from_states(system, x)
}
