//! End-to-end benchmark workflows: generate data, fit a predictor, dump
//! predictions, evaluate held-out error, and sweep hyper-parameters. Each
//! command reads and writes plain files (CSV for signals and scores, JSON
//! for models, TOML for metrics) so runs are easy to script and diff.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyperopt::{
    grid_search_structured, grid_search_unstructured, write_scores_csv, GridSearchOutcome,
    GridSpec,
};
use crate::kernels::KernelSpec;
use crate::regression::{
    iterative_w_predict, iterative_w_predict_unstructured, unstructured_query, FittedPredictor,
    IterativeOptions, PrimalQueryContext, QueryWindow, UnstructuredData, UnstructuredPredictor,
    UnstructuredVariant,
};
use crate::signals::{
    build_data_matrices, read_trajectory_csv, reconstruct_primal, write_trajectory_csv, Dims,
    ReconstructionMode, Trajectory,
};

use super::config::{BenchmarkConfig, PredictorMode, SchedulingMode};
use super::model::{LoadedPredictor, SavedModel};
use super::systems::generate_from_config;

/// Outcome of `generate`.
#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub n_samples: usize,
    pub seed: u64,
}

/// Outcome of `fit`.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub mode: PredictorMode,
    pub n_c: usize,
    pub fit_seconds: f64,
}

/// Outcome of `predict`.
#[derive(Debug, Clone)]
pub struct PredictSummary {
    pub n_windows: usize,
    pub horizon: usize,
}

/// Held-out evaluation metrics, written as flat TOML.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub kernel: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub gamma: f64,
    pub n_c: usize,
    pub eval_windows: usize,
    pub fit_seconds: f64,
    /// How the evaluation supplied scheduling information.
    pub scheduling: String,
    /// RMSE of the predicted output differences over all steps.
    pub rmse_delta: f64,
    /// RMSE of reconstructed outputs chaining the predictor's own levels.
    pub rmse_primal_a: f64,
    /// RMSE of reconstructed outputs re-anchored on measured levels.
    pub rmse_primal_b: f64,
    /// Fraction of windows whose fixed-point refinement reached its
    /// tolerance (iterative scheduling only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged_fraction: Option<f64>,
}

/// Generate the dictionary trajectory of a configuration and write it as
/// CSV. An explicit seed overrides the configured one.
pub fn run_generate(
    config_path: &Path,
    out_path: &Path,
    seed_override: Option<u64>,
) -> Result<GenerateSummary> {
    let config = BenchmarkConfig::load(config_path)?;
    let seed = seed_override.unwrap_or(config.seed);
    let traj = generate_from_config(&config, seed)?;
    write_trajectory_csv(&traj, out_path)?;
    Ok(GenerateSummary {
        n_samples: traj.len(),
        seed,
    })
}

fn dims_for_data(config: &BenchmarkConfig, traj: &Trajectory) -> Result<Dims> {
    if traj.start != 0 {
        return Err(Error::InvalidInput(
            "dictionary trajectories must start at time 0".into(),
        ));
    }
    let n_data = traj.len().saturating_sub(1);
    if n_data != config.n_data {
        return Err(Error::Config(format!(
            "data holds {} samples ({} increments) but the configuration says N = {}",
            traj.len(),
            n_data,
            config.n_data
        )));
    }
    if traj.u.nrows() != 1 || traj.y.nrows() != 1 {
        return Err(Error::InvalidInput(
            "the benchmark systems are single-input single-output".into(),
        ));
    }
    config.dims_for(n_data)
}

/// Fit the configured predictor on a dictionary trajectory and persist it.
pub fn run_fit(config_path: &Path, data_path: &Path, model_path: &Path) -> Result<FitSummary> {
    let config = BenchmarkConfig::load(config_path)?;
    let traj = read_trajectory_csv(data_path)?;
    let dims = dims_for_data(&config, &traj)?;
    let kernel = config.kernel_spec()?;
    let gamma = config.fixed_gamma()?;
    let start = Instant::now();
    let (saved, n_c) = match config.mode {
        PredictorMode::Structured => {
            let data = build_data_matrices(&traj, &dims)?;
            let pred = FittedPredictor::fit(&data, kernel, gamma)?;
            let secs = start.elapsed().as_secs_f64();
            let n_c = pred.n_cols();
            (SavedModel::from_structured(&pred, secs)?, n_c)
        }
        PredictorMode::UnstructuredVelocity => {
            let data = build_data_matrices(&traj, &dims)?;
            let udata = UnstructuredData::velocity(&data)?;
            let pred = UnstructuredPredictor::fit(&udata, kernel, gamma)?;
            let secs = start.elapsed().as_secs_f64();
            let n_c = pred.z.ncols();
            (SavedModel::from_unstructured(&pred, secs)?, n_c)
        }
        PredictorMode::UnstructuredPrimal => {
            let udata = UnstructuredData::primal(&traj, &dims)?;
            let pred = UnstructuredPredictor::fit(&udata, kernel, gamma)?;
            let secs = start.elapsed().as_secs_f64();
            let n_c = pred.z.ncols();
            (SavedModel::from_unstructured(&pred, secs)?, n_c)
        }
    };
    saved.save(model_path)?;
    Ok(FitSummary {
        mode: config.mode,
        n_c,
        fit_seconds: saved.fit_seconds,
    })
}

/// Reshape a stacked per-step prediction (`[step 1; step 2; ...]`) into a
/// matrix with one column per step.
fn steps_matrix(stacked: &DVector<f64>, n_y: usize, horizon: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n_y, horizon, stacked.as_slice())
}

/// Measured reference outputs with column `t` at step `t` (absolute time
/// `anchor - 1 + t`), as `reconstruct_primal` expects.
fn reference_levels(traj: &Trajectory, anchor: i64, dims: &Dims) -> Result<DMatrix<f64>> {
    let mut y_ref = DMatrix::zeros(dims.n_y, dims.horizon);
    for t in 0..dims.horizon {
        y_ref.set_column(t, &traj.y_at(anchor - 1 + t as i64)?);
    }
    Ok(y_ref)
}

/// One prediction window: differences and reconstructed levels, one column
/// per step. `levels_a` chains the predictor's own outputs, `levels_b`
/// re-anchors each step on the measured previous output. `converged` is the
/// fixed-point flag when iterative scheduling ran.
struct WindowPrediction {
    deltas: DMatrix<f64>,
    levels_a: DMatrix<f64>,
    levels_b: DMatrix<f64>,
    converged: Option<bool>,
}

/// Wrap stacked predicted differences into a full window report.
fn delta_window(
    stacked: &DVector<f64>,
    traj: &Trajectory,
    anchor: i64,
    dims: &Dims,
    converged: Option<bool>,
) -> Result<WindowPrediction> {
    let deltas = steps_matrix(stacked, dims.n_y, dims.horizon);
    let y_ref = reference_levels(traj, anchor, dims)?;
    let levels_a = reconstruct_primal(&deltas, &y_ref, ReconstructionMode::PredictedPrevious)?;
    let levels_b = reconstruct_primal(&deltas, &y_ref, ReconstructionMode::TruePrevious)?;
    Ok(WindowPrediction {
        deltas,
        levels_a,
        levels_b,
        converged,
    })
}

fn predict_window(
    predictor: &LoadedPredictor,
    traj: &Trajectory,
    anchor: i64,
    dims: &Dims,
    scheduling: SchedulingMode,
) -> Result<WindowPrediction> {
    match predictor {
        LoadedPredictor::Structured(p) => match scheduling {
            SchedulingMode::Measured => {
                let q = QueryWindow::from_trajectory(traj, anchor, dims)?;
                delta_window(&p.predict(&q)?, traj, anchor, dims, None)
            }
            SchedulingMode::Iterative => {
                let ctx = PrimalQueryContext::from_trajectory(traj, anchor, dims)?;
                let res = iterative_w_predict(p, &ctx, IterativeOptions::default())?;
                delta_window(&res.dy, traj, anchor, dims, Some(res.converged))
            }
        },
        LoadedPredictor::Unstructured(p) => match p.variant {
            UnstructuredVariant::Velocity => match scheduling {
                SchedulingMode::Measured => {
                    let zq = unstructured_query(p.variant, dims, traj, anchor)?;
                    delta_window(&p.predict(&zq)?, traj, anchor, dims, None)
                }
                SchedulingMode::Iterative => {
                    let ctx = PrimalQueryContext::from_trajectory(traj, anchor, dims)?;
                    let res =
                        iterative_w_predict_unstructured(p, &ctx, IterativeOptions::default())?;
                    delta_window(&res.dy, traj, anchor, dims, Some(res.converged))
                }
            },
            UnstructuredVariant::Primal => {
                // The level-based query never needs future outputs, so the
                // scheduling mode is irrelevant here. Levels come straight
                // from the predictor; differences follow by differencing
                // against the measured anchor.
                let zq = unstructured_query(p.variant, dims, traj, anchor)?;
                let stacked = p.predict(&zq)?;
                let levels = steps_matrix(&stacked, dims.n_y, dims.horizon);
                let mut deltas = levels.clone();
                let y_prev = traj.y_at(anchor - 1)?;
                for t in (1..dims.horizon).rev() {
                    let prev = levels.column(t - 1).into_owned();
                    deltas.set_column(t, &(levels.column(t) - &prev));
                }
                deltas.set_column(0, &(levels.column(0) - &y_prev));
                Ok(WindowPrediction {
                    deltas,
                    levels_a: levels.clone(),
                    levels_b: levels,
                    converged: None,
                })
            }
        },
    }
}

/// True output differences and levels over a window, one column per step.
fn truth_window(traj: &Trajectory, anchor: i64, dims: &Dims) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut dy = DMatrix::zeros(dims.n_y, dims.horizon);
    let mut y = DMatrix::zeros(dims.n_y, dims.horizon);
    for t in 0..dims.horizon {
        let now = traj.y_at(anchor + t as i64)?;
        let prev = traj.y_at(anchor + t as i64 - 1)?;
        dy.set_column(t, &(&now - prev));
        y.set_column(t, &now);
    }
    Ok((dy, y))
}

fn prediction_csv_header(n_y: usize, with_truth: bool) -> String {
    let mut h = String::from("anchor,step");
    for r in 1..=n_y {
        let _ = write!(h, ",dy_pred_{r}");
    }
    for r in 1..=n_y {
        let _ = write!(h, ",y_pred_a_{r}");
    }
    for r in 1..=n_y {
        let _ = write!(h, ",y_pred_b_{r}");
    }
    if with_truth {
        for r in 1..=n_y {
            let _ = write!(h, ",dy_true_{r}");
        }
        for r in 1..=n_y {
            let _ = write!(h, ",y_true_{r}");
        }
    }
    h.push('\n');
    h
}

fn push_window_rows(
    out: &mut String,
    anchor: i64,
    pred: &WindowPrediction,
    truth: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) {
    let (n_y, horizon) = pred.deltas.shape();
    for t in 0..horizon {
        let _ = write!(out, "{anchor},{}", t + 1);
        for r in 0..n_y {
            let _ = write!(out, ",{}", pred.deltas[(r, t)]);
        }
        for r in 0..n_y {
            let _ = write!(out, ",{}", pred.levels_a[(r, t)]);
        }
        for r in 0..n_y {
            let _ = write!(out, ",{}", pred.levels_b[(r, t)]);
        }
        if let Some((dy_true, y_true)) = truth {
            for r in 0..n_y {
                let _ = write!(out, ",{}", dy_true[(r, t)]);
            }
            for r in 0..n_y {
                let _ = write!(out, ",{}", y_true[(r, t)]);
            }
        }
        out.push('\n');
    }
}

/// Predict over every feasible window of a trajectory and write one CSV row
/// per (window, step).
pub fn run_predict(
    model_path: &Path,
    data_path: &Path,
    out_path: &Path,
) -> Result<PredictSummary> {
    let saved = SavedModel::load(model_path)?;
    let traj = read_trajectory_csv(data_path)?;
    let dims = saved.dims;
    if traj.u.nrows() != dims.n_u || traj.y.nrows() != dims.n_y {
        return Err(Error::InvalidInput(format!(
            "data has {} inputs and {} outputs, the model expects {} and {}",
            traj.u.nrows(),
            traj.y.nrows(),
            dims.n_u,
            dims.n_y
        )));
    }
    let predictor = saved.load_predictor()?;
    let anchors = QueryWindow::feasible_anchors(&traj, &dims);
    if anchors.is_empty() {
        return Err(Error::InsufficientData(format!(
            "trajectory with {} samples has no feasible prediction window (needs at least {})",
            traj.len(),
            dims.ell + dims.horizon + 2
        )));
    }
    let mut out = prediction_csv_header(dims.n_y, false);
    for &anchor in &anchors {
        let pred = predict_window(&predictor, &traj, anchor, &dims, SchedulingMode::Measured)?;
        push_window_rows(&mut out, anchor, &pred, None);
    }
    std::fs::write(out_path, out)?;
    Ok(PredictSummary {
        n_windows: anchors.len(),
        horizon: dims.horizon,
    })
}

/// Pick `m` evenly spaced entries (all of them when fewer exist).
fn evenly_spaced(anchors: &[i64], m: usize) -> Vec<i64> {
    if anchors.len() <= m {
        return anchors.to_vec();
    }
    (0..m).map(|i| anchors[i * anchors.len() / m]).collect()
}

/// Sibling path `<stem>_trajectories.csv` next to the metrics file.
pub fn trajectories_path(out_path: &Path) -> PathBuf {
    let stem = out_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "eval".into());
    out_path.with_file_name(format!("{stem}_trajectories.csv"))
}

/// Evaluate a saved model on (typically held-out) data: RMSE of the
/// predicted differences and of both level reconstructions over evenly
/// spaced windows. Writes flat TOML metrics plus a per-window CSV.
pub fn run_eval(
    config_path: &Path,
    model_path: &Path,
    data_path: &Path,
    out_path: &Path,
) -> Result<EvalReport> {
    let config = BenchmarkConfig::load(config_path)?;
    let saved = SavedModel::load(model_path)?;
    let traj = read_trajectory_csv(data_path)?;
    let dims = saved.dims;
    if traj.u.nrows() != dims.n_u || traj.y.nrows() != dims.n_y {
        return Err(Error::InvalidInput(format!(
            "data has {} inputs and {} outputs, the model expects {} and {}",
            traj.u.nrows(),
            traj.y.nrows(),
            dims.n_u,
            dims.n_y
        )));
    }
    let predictor = saved.load_predictor()?;
    let all = QueryWindow::feasible_anchors(&traj, &dims);
    if all.is_empty() {
        return Err(Error::InsufficientData(
            "evaluation trajectory has no feasible prediction window".into(),
        ));
    }
    let anchors = evenly_spaced(&all, config.eval_windows);
    let mut csv = prediction_csv_header(dims.n_y, true);
    let (mut sq_delta, mut sq_a, mut sq_b) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut entries = 0usize;
    let (mut refined, mut refined_ok) = (0usize, 0usize);
    for &anchor in &anchors {
        let pred = predict_window(&predictor, &traj, anchor, &dims, config.scheduling)?;
        if let Some(flag) = pred.converged {
            refined += 1;
            refined_ok += flag as usize;
        }
        let (dy_true, y_true) = truth_window(&traj, anchor, &dims)?;
        sq_delta += (&pred.deltas - &dy_true).norm_squared();
        sq_a += (&pred.levels_a - &y_true).norm_squared();
        sq_b += (&pred.levels_b - &y_true).norm_squared();
        entries += dims.n_y * dims.horizon;
        push_window_rows(&mut csv, anchor, &pred, Some((&dy_true, &y_true)));
    }
    let denom = entries as f64;
    let report = EvalReport {
        mode: saved.mode.clone(),
        kernel: saved.kernel.clone(),
        sigma: saved.sigma,
        gamma: saved.gamma,
        n_c: saved.n_c,
        eval_windows: anchors.len(),
        fit_seconds: saved.fit_seconds,
        scheduling: config.scheduling.as_str().to_string(),
        rmse_delta: (sq_delta / denom).sqrt(),
        rmse_primal_a: (sq_a / denom).sqrt(),
        rmse_primal_b: (sq_b / denom).sqrt(),
        converged_fraction: (refined > 0).then(|| refined_ok as f64 / refined as f64),
    };
    let toml_text = toml::to_string(&report)
        .map_err(|e| Error::Config(format!("cannot serialize metrics: {e}")))?;
    std::fs::write(out_path, toml_text)?;
    std::fs::write(trajectories_path(out_path), csv)?;
    Ok(report)
}

/// Sweep the hyper-parameter grid of a configuration on a dictionary
/// trajectory and write the score table. Fixed hyper-parameters collapse
/// their grid axis to the fixed value.
pub fn run_gridsearch(
    config_path: &Path,
    data_path: &Path,
    out_path: &Path,
) -> Result<GridSearchOutcome> {
    let config = BenchmarkConfig::load(config_path)?;
    let traj = read_trajectory_csv(data_path)?;
    let dims = dims_for_data(&config, &traj)?;
    let mut grid: GridSpec = config.grid_spec();
    if let Some(sigma) = config.sigma.as_ref().and_then(|s| s.fixed()) {
        grid.sigmas = vec![sigma];
    }
    if let Some(gamma) = config.gamma.fixed() {
        grid.gammas = vec![gamma];
    }
    let base_sigma = grid.sigmas.first().copied();
    let kernel = KernelSpec::from_name(&config.kernel, base_sigma.or(Some(1.0)))?;
    let outcome = match config.mode {
        PredictorMode::Structured => {
            let data = build_data_matrices(&traj, &dims)?;
            grid_search_structured(&data, &kernel, &grid)?
        }
        PredictorMode::UnstructuredVelocity => {
            let data = build_data_matrices(&traj, &dims)?;
            let udata = UnstructuredData::velocity(&data)?;
            grid_search_unstructured(&udata, &kernel, &grid)?
        }
        PredictorMode::UnstructuredPrimal => {
            let udata = UnstructuredData::primal(&traj, &dims)?;
            grid_search_unstructured(&udata, &kernel, &grid)?
        }
    };
    write_scores_csv(&outcome.rows, out_path)?;
    Ok(outcome)
}
