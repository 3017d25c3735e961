//! Experiment configuration: defaults, JSON file, `KSPV_*` environment
//! overrides and command-line flags, applied in that order.

use std::path::{Path, PathBuf};

use kspv::dynamics::DEFAULT_DT;
use kspv::geometry::ExactSettings;
use kspv::nystrom::DEFAULT_LANDMARK_THRESHOLD;
use kspv::{
    ApproxSettings, DomainBox, KernelSpec, PruneConfig, PruneMode, Regularization, SystemDescriptor, ThresholdSchedule,
};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Prefix of environment variables overriding top-level config keys, e.g.
/// `KSPV_N_SAMPLES=1000`.
pub const ENV_PREFIX: &str = "KSPV_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemDescriptor,
    pub domain: DomainBox,
    /// Snapshot count `N`.
    pub n_samples: usize,
    pub kernel: KernelSpec,
    /// Dictionary size `s`.
    pub dictionary_size: usize,
    /// Center-sampling seed; defaults to `seed`.
    pub dictionary_seed: Option<u64>,
    /// Landmark counts `D` swept by `residual-sweep` and `compare-angles`.
    pub landmark_counts: Vec<usize>,
    /// First landmark seed; defaults to `seed`.
    pub landmark_seed: Option<u64>,
    /// Landmark draws per `D`, seeded `landmark_seed + r`.
    pub landmark_repeats: usize,
    /// Eigenvalue cutoff for `K_LL`.
    pub landmark_threshold: f64,
    pub exact_regularization: Regularization,
    pub approx_regularization: Regularization,
    /// Eigenvalue cutoff `τ` for exact Gram matrices.
    pub eig_threshold: f64,
    /// Singular-value cutoff `c_V · D^{−1/2}` for `Z_V`.
    pub c_v: f64,
    /// Singular-value cutoff `c_KV · D^{−1/2}` for `Z_KV`.
    pub c_kv: f64,
    /// Largest tolerated excess of an approximate cosine over 1 during
    /// pruning; `null` disables the check.
    pub cosine_tolerance: Option<f64>,
    pub prune_epsilon: f64,
    pub prune_mode: PruneMode,
    /// Landmark count for approximate pruning.
    pub prune_landmarks: usize,
    pub max_iterations: Option<usize>,
    pub prediction_steps: usize,
    /// Largest `N` for which commands may form `N × N` kernel matrices.
    pub exact_n_cap: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemDescriptor::Duffing { dt: DEFAULT_DT },
            domain: DomainBox::cube(2, -2.0, 2.0),
            n_samples: 5000,
            kernel: KernelSpec::default(),
            dictionary_size: 200,
            dictionary_seed: None,
            landmark_counts: vec![800, 1000, 2000, 3000, 4000],
            landmark_seed: None,
            landmark_repeats: 1,
            landmark_threshold: DEFAULT_LANDMARK_THRESHOLD,
            exact_regularization: ExactSettings::default().regularization,
            approx_regularization: ApproxSettings::default().regularization,
            eig_threshold: ExactSettings::default().threshold,
            c_v: 1e-3,
            c_kv: 1e-3,
            cosine_tolerance: ApproxSettings::default().cosine_tolerance,
            prune_epsilon: 0.05,
            prune_mode: PruneMode::Approximate,
            prune_landmarks: 2000,
            max_iterations: None,
            prediction_steps: 5,
            exact_n_cap: 10_000,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Command-line values that take precedence over every other source.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Resolves the configuration from an optional JSON file, the given
    /// environment variables and command-line flags.
    pub fn load<I>(path: Option<&Path>, env: I, flags: &FlagOverrides) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut object = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                match serde_json::from_str::<Value>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                {
                    Value::Object(map) => map,
                    _ => return Err(CliError::Config(format!("{}: expected a JSON object", p.display()))),
                }
            }
            None => Map::new(),
        };
        apply_env(&mut object, env)?;
        if let Some(seed) = flags.seed {
            object.insert("seed".into(), Value::from(seed));
        }
        if let Some(out) = &flags.out {
            object.insert("output_dir".into(), Value::from(out.to_string_lossy().into_owned()));
        }
        let config: Self =
            serde_json::from_value(Value::Object(object)).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for (name, value) in [
            ("n_samples", self.n_samples),
            ("dictionary_size", self.dictionary_size),
            ("landmark_repeats", self.landmark_repeats),
            ("prune_landmarks", self.prune_landmarks),
            ("prediction_steps", self.prediction_steps),
            ("exact_n_cap", self.exact_n_cap),
        ] {
            if value == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.landmark_counts.contains(&0) {
            return bad("landmark_counts must be positive".into());
        }
        if self.dictionary_size > self.n_samples {
            return bad(format!(
                "dictionary_size {} exceeds n_samples {}",
                self.dictionary_size, self.n_samples
            ));
        }
        if !(0.0..1.0).contains(&self.prune_epsilon) {
            return bad(format!("prune_epsilon {} must lie in [0, 1)", self.prune_epsilon));
        }
        for (name, value) in [
            ("landmark_threshold", self.landmark_threshold),
            ("eig_threshold", self.eig_threshold),
            ("c_v", self.c_v),
            ("c_kv", self.c_kv),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return bad(format!("{name} must be positive, got {value}"));
            }
        }
        if let Some(t) = self.cosine_tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("cosine_tolerance must be nonnegative, got {t}"));
            }
        }
        for (name, reg) in [
            ("exact_regularization", self.exact_regularization),
            ("approx_regularization", self.approx_regularization),
        ] {
            let (Regularization::Absolute(v) | Regularization::Relative(v)) = reg;
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        kspv::DiscreteSystem::from_descriptor(self.system.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        self.domain.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.kernel.validated().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn dictionary_seed(&self) -> u64 {
        self.dictionary_seed.unwrap_or(self.seed)
    }

    /// Seeds of the landmark draws for each `D`.
    pub fn landmark_seeds(&self) -> Vec<u64> {
        let first = self.landmark_seed.unwrap_or(self.seed);
        (0..self.landmark_repeats as u64)
            .map(|r| first.wrapping_add(r))
            .collect()
    }

    pub fn exact_settings(&self) -> ExactSettings {
        ExactSettings {
            regularization: self.exact_regularization,
            threshold: self.eig_threshold,
        }
    }

    /// Settings for approximate pruning, with the configured cosine check.
    pub fn approx_settings(&self) -> ApproxSettings {
        ApproxSettings {
            regularization: self.approx_regularization,
            thresholds: ThresholdSchedule::Scaled {
                c_v: self.c_v,
                c_kv: self.c_kv,
            },
            cosine_tolerance: self.cosine_tolerance,
        }
    }

    /// Settings for diagnostics that report the peak cosine instead of
    /// rejecting it.
    pub fn diagnostic_settings(&self) -> ApproxSettings {
        ApproxSettings {
            cosine_tolerance: None,
            ..self.approx_settings()
        }
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            epsilon: self.prune_epsilon,
            max_iterations: self.max_iterations,
            mode: self.prune_mode,
        }
    }
}

/// Replaces top-level keys named by `KSPV_<KEY>` variables. Values parse as
/// JSON where possible and as plain strings otherwise.
fn apply_env<I>(object: &mut Map<String, Value>, env: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let known = match serde_json::to_value(ExperimentConfig::default()) {
        Ok(Value::Object(map)) => map,
        _ => unreachable!("config serializes to an object"),
    };
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (name, raw) in vars {
        let key = name[ENV_PREFIX.len()..].to_ascii_lowercase();
        if !known.contains_key(&key) {
            return Err(CliError::Config(format!("{name} does not name a config key")));
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        object.insert(key, value);
    }
    Ok(())
}
