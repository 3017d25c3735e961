//! One function per CLI verb. Each reads its inputs from the output
//! directory (or explicit paths), writes CSV/JSON results next to them and
//! finishes with a run manifest.

use std::path::{Path, PathBuf};

use kspv::io::{
    format_float, read_matrix_csv, read_snapshots, write_json, write_matrix_csv, write_snapshots, write_table,
};
use kspv::nystrom::{fit_landmarks_with, ApproxContext};
use kspv::pruning::prune_with;
use kspv::{
    dictionary_grams, eigenpairs, invariance_proximity, prediction_error_map, reduced_edmd_from, sample_centers,
    sample_uniform, DictionaryCoefficients, DiscreteSystem, Eigenfunction, ErrorSummary, ExactContext, Execution,
    PrincipalDecomposition, PruneMode, PruneReport, SnapshotData,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::Recorder;

pub const DATA_FILE: &str = "data.csv";
pub const DICTIONARY_FILE: &str = "dictionary.csv";
pub const CENTERS_FILE: &str = "centers.json";
pub const SWEEP_FILE: &str = "residual_sweep.csv";
pub const SWEEP_TIMINGS_FILE: &str = "residual_sweep_timings.csv";
pub const ANGLES_FILE: &str = "angles.csv";
pub const ANGLE_SUMMARY_FILE: &str = "angle_summary.csv";
pub const PRUNE_REPORT_FILE: &str = "prune_report.json";
pub const PRUNE_ITERATIONS_FILE: &str = "prune_iterations.csv";
pub const PRUNE_FINAL_W_FILE: &str = "prune_final_w.csv";
pub const PREDICTION_ERRORS_FILE: &str = "prediction_errors.csv";
pub const PREDICTION_SUMMARY_FILE: &str = "prediction_summary.csv";

/// Flags shared by every verb.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Recompute the exact δ of the pruned subspace.
    pub audit_exact: bool,
    /// Allow `N × N` kernel matrices above the configured cap.
    pub force_exact: bool,
}

/// Explicit input locations; `None` falls back to the output directory.
#[derive(Clone, Debug, Default)]
pub struct Inputs {
    pub data: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub pruned: Option<PathBuf>,
}

fn prepare_output_dir(config: &ExperimentConfig) -> Result<Recorder, CliError> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
    Ok(Recorder::new(dir))
}

fn load_data(config: &ExperimentConfig, inputs: &Inputs) -> Result<SnapshotData, CliError> {
    let path = inputs.data.clone().unwrap_or_else(|| config.output_dir.join(DATA_FILE));
    Ok(read_snapshots(&path)?)
}

fn load_dictionary(path: &Path, data: &SnapshotData) -> Result<DictionaryCoefficients, CliError> {
    let w = DictionaryCoefficients::new(read_matrix_csv(path)?)?;
    if w.n_samples() != data.len() {
        return Err(kspv::Error::DimensionMismatch {
            context: "dictionary rows",
            expected: data.len(),
            found: w.n_samples(),
        }
        .into());
    }
    Ok(w)
}

fn dictionary_path(config: &ExperimentConfig, inputs: &Inputs) -> PathBuf {
    inputs
        .dictionary
        .clone()
        .unwrap_or_else(|| config.output_dir.join(DICTIONARY_FILE))
}

/// Refuses `N × N` kernel matrices above the cap unless forced.
fn ensure_exact_affordable(config: &ExperimentConfig, n: usize, opts: &RunOptions, what: &str) -> Result<(), CliError> {
    if n > config.exact_n_cap && !opts.force_exact {
        return Err(CliError::Config(format!(
            "{what} needs N × N kernel matrices; N = {n} exceeds exact_n_cap = {} (pass --force-exact to override)",
            config.exact_n_cap
        )));
    }
    Ok(())
}

fn float_or_empty(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn generate(config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let mut rec = prepare_output_dir(config)?;
    let system = DiscreteSystem::from_descriptor(config.system.clone())?;
    let data = rec.time("sample", || {
        sample_uniform(&system, config.n_samples, &config.domain, config.seed)
    })?;
    let path = rec.output(DATA_FILE);
    write_snapshots(&path, &data)?;
    rec.output("data.meta.json");
    rec.finish("generate", config)
}

#[derive(Serialize)]
struct CentersRecord<'a> {
    n_samples: usize,
    seed: u64,
    centers: &'a [usize],
}

pub fn dictionary(config: &ExperimentConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let mut rec = prepare_output_dir(config)?;
    let data = load_data(config, inputs)?;
    let seed = config.dictionary_seed();
    let centers = sample_centers(data.len(), config.dictionary_size, seed)?;
    let w = DictionaryCoefficients::selection(data.len(), &centers)?;
    write_matrix_csv(&rec.output(DICTIONARY_FILE), w.matrix())?;
    write_json(
        &rec.output(CENTERS_FILE),
        &CentersRecord {
            n_samples: data.len(),
            seed,
            centers: &centers,
        },
    )?;
    rec.finish("dictionary", config)
}

pub fn residual_sweep(config: &ExperimentConfig, inputs: &Inputs, opts: &RunOptions) -> Result<PathBuf, CliError> {
    let mut rec = prepare_output_dir(config)?;
    let data = load_data(config, inputs)?;
    ensure_exact_affordable(config, data.len(), opts, "residual-sweep")?;
    let w = load_dictionary(&dictionary_path(config, inputs), &data)?;
    let exact = rec.time("exact", || -> Result<_, CliError> {
        let ctx = ExactContext::new(&data, &config.kernel, &config.exact_settings())?;
        Ok(ctx.analyze(&w)?)
    })?;
    let settings = config.diagnostic_settings();
    let mut rows = Vec::new();
    let mut timing_rows = Vec::new();
    for &d in &config.landmark_counts {
        for seed in config.landmark_seeds() {
            let start = std::time::Instant::now();
            let model = fit_landmarks_with(&data, d, seed, &config.kernel, config.landmark_threshold)?;
            let analysis = ApproxContext::new(model, &data, &settings)?.analyze(&w)?;
            let (eps_v, eps_kv) = analysis.orthonormality_residuals(&exact.gram);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(vec![
                d.to_string(),
                seed.to_string(),
                analysis.factor_v.rank().to_string(),
                analysis.factor_kv.rank().to_string(),
                format_float(eps_v),
                format_float(eps_kv),
                format_float(analysis.peak_cosine),
            ]);
            timing_rows.push(vec![d.to_string(), seed.to_string(), format_float(wall_ms)]);
        }
    }
    let header = [
        "landmarks",
        "landmark_seed",
        "rank_v",
        "rank_kv",
        "epsilon_v",
        "epsilon_kv",
        "peak_cosine",
    ];
    write_table(&rec.output(SWEEP_FILE), &strings(&header), rows)?;
    // Wall times vary between runs, so they live apart from the results.
    write_table(
        &rec.output(SWEEP_TIMINGS_FILE),
        &strings(&["landmarks", "landmark_seed", "wall_ms"]),
        timing_rows,
    )?;
    rec.finish("residual-sweep", config)
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `max |θ̃ᵢ − θᵢ|` over the indices both decompositions share.
fn aligned_deviation(exact: &PrincipalDecomposition, approx: &PrincipalDecomposition) -> f64 {
    exact
        .angles
        .iter()
        .zip(&approx.angles)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub fn compare_angles(config: &ExperimentConfig, inputs: &Inputs, opts: &RunOptions) -> Result<PathBuf, CliError> {
    let mut rec = prepare_output_dir(config)?;
    let data = load_data(config, inputs)?;
    ensure_exact_affordable(config, data.len(), opts, "compare-angles")?;
    let w = load_dictionary(&dictionary_path(config, inputs), &data)?;
    let exact = rec.time("exact", || -> Result<_, CliError> {
        Ok(ExactContext::new(&data, &config.kernel, &config.exact_settings())?.principal(&w)?)
    })?;
    let settings = config.diagnostic_settings();
    let mut columns: Vec<(String, PrincipalDecomposition)> = Vec::new();
    let mut summary = Vec::new();
    for &d in &config.landmark_counts {
        for seed in config.landmark_seeds() {
            let (analysis, peak) = rec.time(format!("approximate d={d} seed={seed}"), || -> Result<_, CliError> {
                let model = fit_landmarks_with(&data, d, seed, &config.kernel, config.landmark_threshold)?;
                let a = ApproxContext::new(model, &data, &settings)?.analyze(&w)?;
                Ok((a.decomposition, a.peak_cosine))
            })?;
            summary.push(vec![
                d.to_string(),
                seed.to_string(),
                exact.len().to_string(),
                analysis.len().to_string(),
                float_or_empty(exact.max_angle()),
                float_or_empty(analysis.max_angle()),
                float_or_empty(exact.max_angle().zip(analysis.max_angle()).map(|(a, b)| (a - b).abs())),
                format_float(aligned_deviation(&exact, &analysis)),
                format_float(peak),
            ]);
            columns.push((format!("theta_d{d}_seed{seed}"), analysis));
        }
    }
    let len = columns.iter().map(|(_, pd)| pd.len()).fold(exact.len(), usize::max);
    let mut header = strings(&["index", "theta_exact"]);
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    let rows = (0..len).map(|i| {
        let mut row = vec![i.to_string(), float_or_empty(exact.angles.get(i).copied())];
        row.extend(columns.iter().map(|(_, pd)| float_or_empty(pd.angles.get(i).copied())));
        row
    });
    write_table(&rec.output(ANGLES_FILE), &header, rows)?;
    let summary_header = [
        "landmarks",
        "landmark_seed",
        "count_exact",
        "count_approx",
        "theta_max_exact",
        "theta_max_approx",
        "max_angle_deviation",
        "max_abs_deviation",
        "peak_cosine",
    ];
    write_table(&rec.output(ANGLE_SUMMARY_FILE), &strings(&summary_header), summary)?;
    rec.finish("compare-angles", config)
}

#[derive(Serialize)]
struct PruneOutput<'a> {
    #[serde(flatten)]
    report: &'a PruneReport,
    initial_dimension: usize,
    landmarks: Option<usize>,
    landmark_seed: Option<u64>,
    /// Exact `δ` of the final subspace, present with `--audit-exact`.
    audit_exact_delta: Option<f64>,
}

pub fn prune(config: &ExperimentConfig, inputs: &Inputs, opts: &RunOptions) -> Result<PathBuf, CliError> {
    let mut rec = prepare_output_dir(config)?;
    let data = load_data(config, inputs)?;
    let w = load_dictionary(&dictionary_path(config, inputs), &data)?;
    let prune_config = config.prune_config();
    let landmark_seed = config.landmark_seeds()[0];
    let (report, landmarks) = match config.prune_mode {
        PruneMode::Exact => {
            ensure_exact_affordable(config, data.len(), opts, "exact pruning")?;
            let report = rec.time("prune", || -> Result<_, CliError> {
                let ctx = ExactContext::new(&data, &config.kernel, &config.exact_settings())?;
                Ok(prune_with(&ctx, &w, &prune_config)?)
            })?;
            (report, None)
        }
        PruneMode::Approximate => {
            let report = rec.time("prune", || -> Result<_, CliError> {
                let model = fit_landmarks_with(
                    &data,
                    config.prune_landmarks,
                    landmark_seed,
                    &config.kernel,
                    config.landmark_threshold,
                )?;
                let ctx = ApproxContext::with_execution(model, &data, &config.approx_settings(), Execution::default())?;
                Ok(prune_with(&ctx, &w, &prune_config)?)
            })?;
            (report, Some(config.prune_landmarks))
        }
    };
    let audit_exact_delta = if opts.audit_exact {
        ensure_exact_affordable(config, data.len(), opts, "--audit-exact")?;
        let delta = rec.time("audit", || -> Result<_, CliError> {
            let ctx = ExactContext::new(&data, &config.kernel, &config.exact_settings())?;
            Ok(invariance_proximity(&ctx.principal(&report.final_w)?)?)
        })?;
        Some(delta)
    } else {
        None
    };
    write_json(
        &rec.output(PRUNE_REPORT_FILE),
        &PruneOutput {
            report: &report,
            initial_dimension: w.len(),
            landmarks,
            landmark_seed: landmarks.map(|_| landmark_seed),
            audit_exact_delta,
        },
    )?;
    report.write_iterations_csv(&rec.output(PRUNE_ITERATIONS_FILE))?;
    write_matrix_csv(&rec.output(PRUNE_FINAL_W_FILE), report.final_w.matrix())?;
    rec.finish("prune", config)
}

struct Prediction {
    dimension: usize,
    eigenvalue: (f64, f64),
    errors: Vec<f64>,
    summary: ErrorSummary,
}

fn predict(config: &ExperimentConfig, data: &SnapshotData, w: &DictionaryCoefficients) -> Result<Prediction, CliError> {
    let system = data.system()?;
    let (m_v, m_cross) = dictionary_grams(data, &config.kernel, w, Execution::default())?;
    let model = reduced_edmd_from(&m_v, &m_cross, config.eig_threshold)?;
    let pairs = eigenpairs(&model)?;
    let pair = pairs.first().ok_or(kspv::Error::EmptyDecomposition)?;
    let phi = Eigenfunction::from_pair(pair, w, data, &config.kernel)?;
    let errors = prediction_error_map(&phi, &system, data, config.prediction_steps)?;
    let summary = ErrorSummary::from_errors(&errors)?;
    Ok(Prediction {
        dimension: w.len(),
        eigenvalue: (pair.eigenvalue.re, pair.eigenvalue.im),
        errors,
        summary,
    })
}

fn summary_row(label: &str, p: &Prediction) -> Vec<String> {
    vec![
        label.to_string(),
        p.dimension.to_string(),
        format_float(p.eigenvalue.0),
        format_float(p.eigenvalue.1),
        format_float(p.summary.max),
        format_float(p.summary.mean),
        format_float(p.summary.p95),
    ]
}

pub fn predict_error(config: &ExperimentConfig, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let mut rec = prepare_output_dir(config)?;
    let data = load_data(config, inputs)?;
    let base_w = load_dictionary(&dictionary_path(config, inputs), &data)?;
    let base = rec.time("predict base", || predict(config, &data, &base_w))?;
    let pruned = match &inputs.pruned {
        Some(path) => {
            let w = load_dictionary(path, &data)?;
            Some(rec.time("predict pruned", || predict(config, &data, &w))?)
        }
        None => None,
    };

    let n = data.state_dim();
    let mut header: Vec<String> = std::iter::once("index".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain(std::iter::once("error".to_string()))
        .collect();
    if pruned.is_some() {
        header.push("error_pruned".into());
    }
    let rows = (0..data.len()).map(|j| {
        let mut row = vec![j.to_string()];
        row.extend(data.x.state(j).iter().map(|v| format_float(*v)));
        row.push(format_float(base.errors[j]));
        if let Some(p) = &pruned {
            row.push(format_float(p.errors[j]));
        }
        row
    });
    write_table(&rec.output(PREDICTION_ERRORS_FILE), &header, rows)?;

    let mut summary = vec![summary_row("base", &base)];
    if let Some(p) = &pruned {
        summary.push(summary_row("pruned", p));
        summary.push(vec![
            "delta".into(),
            String::new(),
            String::new(),
            String::new(),
            format_float(p.summary.max - base.summary.max),
            format_float(p.summary.mean - base.summary.mean),
            format_float(p.summary.p95 - base.summary.p95),
        ]);
    }
    let summary_header = [
        "label",
        "dimension",
        "eigenvalue_re",
        "eigenvalue_im",
        "max",
        "mean",
        "p95",
    ];
    write_table(&rec.output(PREDICTION_SUMMARY_FILE), &strings(&summary_header), summary)?;
    rec.finish("predict-error", config)
}
