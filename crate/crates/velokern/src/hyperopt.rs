//! Hyper-parameter selection by grid search over a train/validation split.
//!
//! For every kernel width the full effective Gram matrix is computed once;
//! each regularization weight then costs one factorization of the training
//! block plus two matrix products (train and validation predictions). The
//! split is a temporal prefix by default so validation windows lie in the
//! future of the training windows; an optional seeded shuffle randomizes
//! the assignment instead.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{effective_gram, KernelSpec};
use crate::linalg::SpdFactor;
use crate::regression::{plain_gram, rmse, UnstructuredData};
use crate::rng::SeededRng;
use crate::signals::DataMatrices;

/// `count` points spaced evenly in exponent between `10^lo` and `10^hi`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Grid-search configuration.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Fraction of columns assigned to training.
    pub train_fraction: f64,
    /// Shuffle columns before splitting instead of a temporal prefix.
    pub shuffle: bool,
    /// Seed for the shuffled split.
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            sigmas: Self::default_sigmas(),
            gammas: Self::default_gammas(),
            train_fraction: 0.7,
            shuffle: false,
            seed: 0,
        }
    }
}

impl GridSpec {
    /// Nine kernel widths, log-spaced between `10^0.5` and `10^2.5`.
    pub fn default_sigmas() -> Vec<f64> {
        logspace(0.5, 2.5, 9)
    }

    /// Nine regularization weights, log-spaced between `1` and `10^4`.
    pub fn default_gammas() -> Vec<f64> {
        logspace(0.0, 4.0, 9)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.gammas.is_empty() {
            return Err(Error::Config("grid must contain at least one point".into()));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.gammas.iter().any(|g| !(g.is_finite() && *g > 0.0))
        {
            return Err(Error::Config(
                "grid points must be positive and finite".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Column indices of the train/validation split (each sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Split `n_c` columns into train and validation sets.
pub fn split_columns(
    n_c: usize,
    train_fraction: f64,
    shuffle: bool,
    seed: u64,
) -> Result<SplitIndices> {
    let n_train = (train_fraction * n_c as f64).floor() as usize;
    if n_train == 0 || n_train >= n_c {
        return Err(Error::InsufficientData(format!(
            "cannot split {n_c} columns into non-empty train and validation sets \
             at fraction {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n_c).collect();
    if shuffle {
        let mut rng = SeededRng::new(seed);
        rng.shuffle(&mut order);
    }
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok(SplitIndices { train, val })
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct ScoreRow {
    /// Kernel width; 0 when the kernel has no width parameter.
    pub sigma: f64,
    pub gamma: f64,
    pub val_rmse: f64,
    pub train_rmse: f64,
    /// `"ok"` or a short failure note.
    pub status: String,
}

/// Grid-search result: all evaluated rows plus the selected point.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub rows: Vec<ScoreRow>,
    pub best: Option<ScoreRow>,
    pub split: SplitIndices,
}

/// Selection rule: smallest validation error; ties prefer the smaller
/// regularization weight, then the smaller kernel width.
pub fn pick_best(rows: &[ScoreRow]) -> Option<ScoreRow> {
    let mut best: Option<&ScoreRow> = None;
    for row in rows.iter().filter(|r| r.status == "ok" && r.val_rmse.is_finite()) {
        let better = match best {
            None => true,
            Some(b) => {
                row.val_rmse < b.val_rmse
                    || (row.val_rmse == b.val_rmse
                        && (row.gamma < b.gamma
                            || (row.gamma == b.gamma && row.sigma < b.sigma)))
            }
        };
        if better {
            best = Some(row);
        }
    }
    best.cloned()
}

/// Sweep all regularization weights for one precomputed Gram matrix.
fn sweep_gammas(
    gram: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    split: &SplitIndices,
    sigma: f64,
    gammas: &[f64],
    rows: &mut Vec<ScoreRow>,
) {
    let g_tt = gram
        .select_rows(split.train.iter())
        .select_columns(split.train.iter());
    let g_tv = gram
        .select_rows(split.train.iter())
        .select_columns(split.val.iter());
    let y_t = targets.select_columns(split.train.iter());
    let y_v = targets.select_columns(split.val.iter());
    for &gamma in gammas {
        let mut m = g_tt.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0 / gamma;
        }
        let row = match SpdFactor::new(&m)
            .and_then(|spd| spd.solve_mat(&y_t.transpose()))
        {
            Ok(sol) => {
                let a = sol.transpose();
                let val_rmse = rmse(&(&a * &g_tv), &y_v);
                let train_rmse = rmse(&(&a * &g_tt), &y_t);
                let status = if val_rmse.is_finite() && train_rmse.is_finite() {
                    "ok".to_string()
                } else {
                    "non-finite error".to_string()
                };
                ScoreRow {
                    sigma,
                    gamma,
                    val_rmse,
                    train_rmse,
                    status,
                }
            }
            Err(e) => ScoreRow {
                sigma,
                gamma,
                val_rmse: f64::NAN,
                train_rmse: f64::NAN,
                status: format!("factorization failed: {e}"),
            },
        };
        rows.push(row);
    }
}

/// Kernel widths to actually sweep: kernels without an RBF component are
/// width-free, so a single pass (recorded as width 0) suffices.
fn effective_sigmas(kernel: &KernelSpec, grid: &GridSpec) -> Vec<f64> {
    if kernel.sigma().is_some() || matches!(kernel, KernelSpec::Rbf { .. }) {
        grid.sigmas.clone()
    } else {
        // Probe: rewriting the width changes nothing for width-free kernels.
        match kernel.with_sigma(1.0) {
            Ok(k) if k.sigma().is_none() => vec![0.0],
            _ => grid.sigmas.clone(),
        }
    }
}

/// Grid search for the structured predictor.
pub fn grid_search_structured(
    data: &DataMatrices,
    kernel: &KernelSpec,
    grid: &GridSpec,
) -> Result<GridSearchOutcome> {
    grid.validate()?;
    let split = split_columns(data.n_cols(), grid.train_fraction, grid.shuffle, grid.seed)?;
    let targets = data.y_l.entries.clone();
    let mut rows = Vec::new();
    for &sigma in &effective_sigmas(kernel, grid) {
        let k = if sigma > 0.0 {
            kernel.with_sigma(sigma)?
        } else {
            kernel.clone()
        };
        let gram = effective_gram(&k, data)?;
        sweep_gammas(&gram, &targets, &split, sigma, &grid.gammas, &mut rows);
    }
    let best = pick_best(&rows);
    Ok(GridSearchOutcome { rows, best, split })
}

/// Grid search for an unstructured baseline.
pub fn grid_search_unstructured(
    data: &UnstructuredData,
    kernel: &KernelSpec,
    grid: &GridSpec,
) -> Result<GridSearchOutcome> {
    grid.validate()?;
    let split = split_columns(data.z.ncols(), grid.train_fraction, grid.shuffle, grid.seed)?;
    let mut rows = Vec::new();
    for &sigma in &effective_sigmas(kernel, grid) {
        let k = if sigma > 0.0 {
            kernel.with_sigma(sigma)?
        } else {
            kernel.clone()
        };
        let gram = plain_gram(&k, &data.z)?;
        sweep_gammas(&gram, &data.targets, &split, sigma, &grid.gammas, &mut rows);
    }
    let best = pick_best(&rows);
    Ok(GridSearchOutcome { rows, best, split })
}

/// Write score rows as CSV with a fixed header.
pub fn write_scores_csv(rows: &[ScoreRow], path: &Path) -> Result<()> {
    let mut out = String::from("sigma,gamma,val_rmse,train_rmse,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sigma,
            r.gamma,
            r.val_rmse,
            r.train_rmse,
            r.status.replace(',', ";")
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{build_data_matrices, Dims, Trajectory};
    use approx::assert_abs_diff_eq;

    fn smooth_data(seed: u64, dims: &Dims) -> (Trajectory, DataMatrices) {
        let mut rng = SeededRng::new(seed);
        let n = dims.n_data + 1;
        let u = DMatrix::from_fn(dims.n_u, n, |_, _| rng.uniform_in(-1.0, 1.0));
        let mut y: DMatrix<f64> = DMatrix::zeros(dims.n_y, n);
        for k in 1..n {
            for r in 0..dims.n_y {
                let prev = y[(r, k - 1)];
                y[(r, k)] = 0.5 * prev + 0.4 * (u[(0, k - 1)] + 0.3 * prev * prev).tanh();
            }
        }
        let traj = Trajectory::new(u, y, 0).unwrap();
        let data = build_data_matrices(&traj, dims).unwrap();
        (traj, data)
    }

    #[test]
    fn logspace_matches_endpoint_and_spacing() {
        let v = logspace(0.0, 4.0, 9);
        assert_eq!(v.len(), 9);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[8], 1e4, epsilon = 1e-8);
        assert_abs_diff_eq!(v[4], 100.0, epsilon = 1e-10);
        assert_eq!(logspace(0.5, 0.5, 1), vec![10f64.powf(0.5)]);
    }

    #[test]
    fn default_grids_cover_the_tuned_operating_points() {
        let sigmas = GridSpec::default_sigmas();
        let gammas = GridSpec::default_gammas();
        for sigma in [40.11, 25.97] {
            assert!(sigmas[0] < sigma && sigma < sigmas[8], "sigma {sigma} outside grid");
        }
        for gamma in [123.3, 1474.5] {
            assert!(gammas[0] < gamma && gamma < gammas[8], "gamma {gamma} outside grid");
        }
    }

    #[test]
    fn split_is_a_temporal_prefix_unless_shuffled() {
        let s = split_columns(10, 0.7, false, 0).unwrap();
        assert_eq!(s.train, (0..7).collect::<Vec<_>>());
        assert_eq!(s.val, (7..10).collect::<Vec<_>>());
        let sh = split_columns(10, 0.7, true, 3).unwrap();
        assert_eq!(sh.train.len(), 7);
        assert_eq!(sh.val.len(), 3);
        assert_ne!(sh.train, s.train);
        let again = split_columns(10, 0.7, true, 3).unwrap();
        assert_eq!(sh, again);
        assert!(split_columns(1, 0.7, false, 0).is_err());
        assert!(split_columns(10, 0.05, false, 0).is_err()); // empty train
    }

    #[test]
    fn tie_breaking_prefers_smaller_gamma_then_sigma() {
        let mk = |sigma: f64, gamma: f64, val: f64| ScoreRow {
            sigma,
            gamma,
            val_rmse: val,
            train_rmse: 0.1,
            status: "ok".into(),
        };
        let rows = vec![
            mk(10.0, 100.0, 0.5),
            mk(10.0, 10.0, 0.5),
            mk(3.0, 10.0, 0.5),
            mk(30.0, 1000.0, 0.7),
        ];
        let best = pick_best(&rows).unwrap();
        assert_eq!((best.sigma, best.gamma), (3.0, 10.0));
        let mut with_failure = rows.clone();
        with_failure.push(ScoreRow {
            sigma: 1.0,
            gamma: 1.0,
            val_rmse: f64::NAN,
            train_rmse: f64::NAN,
            status: "factorization failed: x".into(),
        });
        let best2 = pick_best(&with_failure).unwrap();
        assert_eq!((best2.sigma, best2.gamma), (3.0, 10.0));
        assert!(pick_best(&[]).is_none());
    }

    #[test]
    fn structured_grid_search_is_deterministic_and_complete() {
        let dims = Dims::uniform(1, 1, 2, 3, 40).unwrap();
        let (_, data) = smooth_data(100, &dims);
        let kernel = KernelSpec::rbf(1.0).unwrap();
        let grid = GridSpec {
            sigmas: logspace(0.0, 1.0, 3),
            gammas: logspace(0.0, 2.0, 3),
            train_fraction: 0.7,
            shuffle: false,
            seed: 0,
        };
        let a = grid_search_structured(&data, &kernel, &grid).unwrap();
        let b = grid_search_structured(&data, &kernel, &grid).unwrap();
        assert_eq!(a.rows.len(), 9);
        assert!(a.rows.iter().all(|r| r.status == "ok"));
        let best_a = a.best.as_ref().unwrap();
        let best_b = b.best.as_ref().unwrap();
        assert_eq!(
            (best_a.sigma, best_a.gamma, best_a.val_rmse),
            (best_b.sigma, best_b.gamma, best_b.val_rmse)
        );
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.val_rmse.to_bits(), rb.val_rmse.to_bits());
        }
    }

    #[test]
    fn grid_search_selection_matches_a_direct_refit() {
        // The shared-Gram sweep must reproduce what a from-scratch fit on
        // the training columns predicts on the validation columns.
        let dims = Dims::uniform(1, 1, 2, 3, 30).unwrap();
        let (_, data) = smooth_data(101, &dims);
        let kernel = KernelSpec::rbf(2.0).unwrap();
        let grid = GridSpec {
            sigmas: vec![2.0],
            gammas: vec![25.0],
            train_fraction: 0.7,
            shuffle: false,
            seed: 0,
        };
        let out = grid_search_structured(&data, &kernel, &grid).unwrap();
        let row = &out.rows[0];

        use crate::regression::{FittedPredictor, QueryWindow};
        let train_data = data.select_columns(&out.split.train).unwrap();
        let pred = FittedPredictor::fit(&train_data, kernel.clone(), 25.0).unwrap();
        // Validation predictions via explicit queries on the original data.
        let mut se = 0.0;
        let mut count = 0;
        for &j in &out.split.val {
            let wq = data.w_l.column_window(j);
            let q = QueryWindow::new(
                {
                    let x = data.regressor_column(j);
                    x.rows(0, dims.head_dim()).into_owned()
                },
                {
                    let x = data.regressor_column(j);
                    DMatrix::from_column_slice(
                        dims.n_u,
                        dims.horizon,
                        x.rows(dims.head_dim(), dims.horizon * dims.n_u).as_slice(),
                    )
                },
                wq,
            );
            let dy = pred.predict(&q).unwrap();
            let target = data.y_l.entries.column(j).into_owned();
            count += target.len();
            se += (dy - target).norm_squared();
        }
        let direct_rmse = (se / count as f64).sqrt();
        assert_abs_diff_eq!(row.val_rmse, direct_rmse, epsilon = 1e-10);
    }

    #[test]
    fn unstructured_grid_search_runs_and_selects() {
        let dims = Dims::uniform(1, 1, 2, 3, 30).unwrap();
        let (traj, _) = smooth_data(102, &dims);
        let udata = UnstructuredData::primal(&traj, &dims).unwrap();
        let kernel = KernelSpec::rbf(1.0).unwrap();
        let grid = GridSpec {
            sigmas: logspace(0.0, 1.0, 2),
            gammas: logspace(0.0, 2.0, 2),
            train_fraction: 0.6,
            shuffle: true,
            seed: 7,
        };
        let out = grid_search_unstructured(&udata, &kernel, &grid).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.best.is_some());
    }

    #[test]
    fn width_free_kernels_sweep_a_single_pseudo_width() {
        let dims = Dims::uniform(1, 1, 2, 3, 25).unwrap();
        let (_, data) = smooth_data(103, &dims);
        let grid = GridSpec {
            sigmas: logspace(0.0, 1.0, 5),
            gammas: logspace(0.0, 1.0, 2),
            train_fraction: 0.7,
            shuffle: false,
            seed: 0,
        };
        let out = grid_search_structured(&data, &KernelSpec::Linear, &grid).unwrap();
        assert_eq!(out.rows.len(), 2); // one pseudo-width x two gammas
        assert!(out.rows.iter().all(|r| r.sigma == 0.0));
    }

    #[test]
    fn scores_csv_has_the_fixed_header() {
        let dir = std::env::temp_dir().join("velokern_hyperopt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scores.csv");
        let rows = vec![ScoreRow {
            sigma: 3.0,
            gamma: 10.0,
            val_rmse: 0.25,
            train_rmse: 0.125,
            status: "ok".into(),
        }];
        write_scores_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sigma,gamma,val_rmse,train_rmse,status\n"));
        assert!(text.contains("3,10,0.25,0.125,ok"));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let dims = Dims::uniform(1, 1, 2, 3, 25).unwrap();
        let (_, data) = smooth_data(104, &dims);
        let kernel = KernelSpec::rbf(1.0).unwrap();
        let bad_fraction = GridSpec {
            train_fraction: 1.0,
            ..GridSpec::default()
        };
        assert!(grid_search_structured(&data, &kernel, &bad_fraction).is_err());
        let empty = GridSpec {
            sigmas: vec![],
            ..GridSpec::default()
        };
        assert!(grid_search_structured(&data, &kernel, &empty).is_err());
        let negative = GridSpec {
            gammas: vec![-1.0],
            ..GridSpec::default()
        };
        assert!(grid_search_structured(&data, &kernel, &negative).is_err());
    }
}
