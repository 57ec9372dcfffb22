//! Kernelized ridge regression for multi-step velocity predictors.
//!
//! The structured predictor fits the dual coefficients
//! `A = Y_L ((1/gamma) I + G)^{-1}` against the effective Gram matrix of
//! the block-weighted regressors; prediction forms, for each training
//! column, the structured inner product of its regressor with the query
//! regressor and maps the resulting coefficient vector through `A`. The
//! same prediction is also available in implicit form (solve first, then
//! combine training targets), which the explicit path must reproduce.
//!
//! Two unstructured baselines share the dual machinery with a plain kernel
//! on stacked trajectory windows: one on raw signal levels, one on the
//! differenced regressor-plus-scheduling stack.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{effective_gram_parts, kernel_slice, KernelSpec};
use crate::linalg::SpdFactor;
use crate::signals::{build_scheduling, DataMatrices, Dims, HankelMatrix, Trajectory};

/// Default stopping tolerance of the iterative scheduling refinement.
pub const DEFAULT_ITERATIVE_TOL: f64 = 1e-9;
/// Default iteration cap of the iterative scheduling refinement.
pub const DEFAULT_ITERATIVE_MAX_ITER: usize = 50;

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "regularization weight gamma must be positive and finite, got {gamma}"
        )));
    }
    Ok(())
}

/// A fitted structured multi-step predictor.
#[derive(Debug)]
pub struct FittedPredictor {
    pub dims: Dims,
    pub kernel: KernelSpec,
    pub gamma: f64,
    /// Stacked training regressors, one column per training window.
    pub x_cols: DMatrix<f64>,
    /// Scheduling windows of the training columns.
    pub w_windows: HankelMatrix,
    /// Stacked prediction targets, one column per training window.
    pub y_l: DMatrix<f64>,
    /// Factorization of `(1/gamma) I + G`.
    pub spd: SpdFactor,
    /// Dual coefficients `Y_L ((1/gamma) I + G)^{-1}`.
    pub a_dual: DMatrix<f64>,
}

impl FittedPredictor {
    pub fn fit(data: &DataMatrices, kernel: KernelSpec, gamma: f64) -> Result<Self> {
        let gram = crate::kernels::effective_gram(&kernel, data)?;
        Self::fit_with_gram(data, kernel, gamma, &gram)
    }

    /// Fit against a precomputed effective Gram matrix (the grid search
    /// shares one Gram across many regularization weights).
    pub fn fit_with_gram(
        data: &DataMatrices,
        kernel: KernelSpec,
        gamma: f64,
        gram: &DMatrix<f64>,
    ) -> Result<Self> {
        validate_gamma(gamma)?;
        let n_c = data.n_cols();
        if gram.nrows() != n_c || gram.ncols() != n_c {
            return Err(Error::InvalidInput(format!(
                "Gram matrix is {}x{} but there are {} training columns",
                gram.nrows(),
                gram.ncols(),
                n_c
            )));
        }
        let mut m = gram.clone();
        for i in 0..n_c {
            m[(i, i)] += 1.0 / gamma;
        }
        let spd = SpdFactor::new(&m)?;
        let y_l = data.y_l.entries.clone();
        let a_dual = spd.solve_mat(&y_l.transpose())?.transpose();
        Ok(Self {
            dims: data.dims,
            kernel,
            gamma,
            x_cols: data.x_matrix(),
            w_windows: data.w_l.clone(),
            y_l,
            spd,
            a_dual,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.x_cols.ncols()
    }

    /// Structured coefficient vector of a query: `c[i]` is the
    /// block-weighted inner product of training regressor `i` with the
    /// query regressor, weighted along the paired scheduling windows.
    pub fn coefficients(&self, query: &QueryWindow) -> Result<DVector<f64>> {
        query.validate(&self.dims)?;
        let head_dim = self.dims.head_dim();
        let n_u = self.dims.n_u;
        let r = query.regressor();
        let mut c = DVector::zeros(self.n_cols());
        for i in 0..self.n_cols() {
            let wi = self.w_windows.column_window(i);
            let block = kernel_slice(&self.kernel, &wi, &query.w, head_dim, n_u)?;
            c[i] = block.weighted_inner(&self.x_cols.column(i).into_owned(), &r);
        }
        Ok(c)
    }

    /// Multi-step prediction `dy[1..L]` through the dual coefficients.
    pub fn predict(&self, query: &QueryWindow) -> Result<DVector<f64>> {
        Ok(&self.a_dual * self.coefficients(query)?)
    }

    /// The implicit form: solve `((1/gamma) I + G) g = c` and combine the
    /// stored targets, `dy = Y_L g`. Must agree with [`Self::predict`] up
    /// to factorization round-off.
    pub fn implicit_predict(&self, query: &QueryWindow) -> Result<ImplicitSolution> {
        let c = self.coefficients(query)?;
        let g = self.spd.solve_vec(&c)?;
        let dy = &self.y_l * &g;
        Ok(ImplicitSolution { g, dy })
    }

    /// Largest entrywise violation of the first-order optimality identity
    /// `Y_L - A G = A / gamma` on the training data.
    pub fn training_residual(&self) -> Result<f64> {
        let gram = effective_gram_parts(
            &self.kernel,
            &self.w_windows,
            &self.x_cols,
            self.dims.head_dim(),
            self.dims.n_u,
        )?;
        let lhs = &self.y_l - &self.a_dual * gram;
        let rhs = &self.a_dual / self.gamma;
        Ok((lhs - rhs).abs().max())
    }

    /// Root-mean-square one-shot training error over all columns.
    pub fn training_rmse(&self) -> Result<f64> {
        let gram = effective_gram_parts(
            &self.kernel,
            &self.w_windows,
            &self.x_cols,
            self.dims.head_dim(),
            self.dims.n_u,
        )?;
        let pred = &self.a_dual * gram;
        Ok(rmse(&pred, &self.y_l))
    }
}

/// Stacked root-mean-square error between prediction and target columns.
pub fn rmse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(pred.shape(), target.shape());
    let diff = pred - target;
    (diff.norm_squared() / (diff.nrows() * diff.ncols()) as f64).sqrt()
}

/// Implicit solve result: the representation weights and the prediction
/// they induce.
#[derive(Debug, Clone)]
pub struct ImplicitSolution {
    pub g: DVector<f64>,
    pub dy: DVector<f64>,
}

/// One prediction query: the initial difference window, the planned input
/// differences over the horizon, and the scheduling windows pairing each
/// step with the training data.
#[derive(Debug, Clone)]
pub struct QueryWindow {
    /// `[dy(a-ell .. a-1); du(a-ell .. a-1)]`, oldest first.
    pub dphi0: DVector<f64>,
    /// Column `t` is `du(a+t)` for `t = 0..L-1`.
    pub du: DMatrix<f64>,
    /// Column `t` is the scheduling vector at time `a+t`.
    pub w: DMatrix<f64>,
}

impl QueryWindow {
    pub fn new(dphi0: DVector<f64>, du: DMatrix<f64>, w: DMatrix<f64>) -> Self {
        Self { dphi0, du, w }
    }

    /// Assemble the query anchored at absolute time `anchor` (the time of
    /// the first predicted step) from a measured trajectory. Requires
    /// samples at times `anchor - ell - 1 ..= anchor + L - 1`: the
    /// scheduling vectors over the horizon come from the measured outputs.
    pub fn from_trajectory(traj: &Trajectory, anchor: i64, dims: &Dims) -> Result<Self> {
        let ell = dims.ell as i64;
        let horizon = dims.horizon as i64;
        let (first, last) = traj.time_range();
        if anchor - ell - 1 < first || anchor + horizon - 1 > last {
            return Err(Error::InsufficientData(format!(
                "query anchored at {anchor} needs times {}..={}, trajectory covers {first}..={last}",
                anchor - ell - 1,
                anchor + horizon - 1
            )));
        }
        let window = traj.slice(anchor - ell - 1, anchor + horizon - 1)?;
        let sched = build_scheduling(&window, dims.ell)?;
        debug_assert_eq!(sched.start, anchor);
        let w = sched.w.columns(0, dims.horizon).into_owned();
        let delta = window.delta()?; // differences at anchor-ell ..= anchor+L-1
        let mut dphi0 = DVector::zeros(dims.head_dim());
        for lag in 0..dims.ell {
            dphi0
                .rows_mut(lag * dims.n_y, dims.n_y)
                .copy_from(&delta.dy.column(lag));
            dphi0
                .rows_mut(dims.ell * dims.n_y + lag * dims.n_u, dims.n_u)
                .copy_from(&delta.du.column(lag));
        }
        let du = delta.du.columns(dims.ell, dims.horizon).into_owned();
        Ok(Self { dphi0, du, w })
    }

    /// Feasible query anchors on a trajectory: every time index with a
    /// full past window behind it and a full horizon ahead of it.
    pub fn feasible_anchors(traj: &Trajectory, dims: &Dims) -> Vec<i64> {
        let (first, last) = traj.time_range();
        let lo = first + dims.ell as i64 + 1;
        let hi = last - dims.horizon as i64 + 1;
        (lo..=hi).collect()
    }

    /// The stacked query regressor `[dphi0; du]`.
    pub fn regressor(&self) -> DVector<f64> {
        let n_u = self.du.nrows();
        let horizon = self.du.ncols();
        let mut r = DVector::zeros(self.dphi0.len() + horizon * n_u);
        r.rows_mut(0, self.dphi0.len()).copy_from(&self.dphi0);
        for t in 0..horizon {
            r.rows_mut(self.dphi0.len() + t * n_u, n_u)
                .copy_from(&self.du.column(t));
        }
        r
    }

    fn validate(&self, dims: &Dims) -> Result<()> {
        if self.dphi0.len() != dims.head_dim()
            || self.du.nrows() != dims.n_u
            || self.du.ncols() != dims.horizon
            || self.w.nrows() != dims.n_w()
            || self.w.ncols() != dims.horizon
        {
            return Err(Error::InvalidInput(format!(
                "query shapes (dphi0 {}, du {}x{}, w {}x{}) do not match the fitted dimensions",
                self.dphi0.len(),
                self.du.nrows(),
                self.du.ncols(),
                self.w.nrows(),
                self.w.ncols()
            )));
        }
        Ok(())
    }
}

/// Which stacked windows the unstructured baseline regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnstructuredVariant {
    /// Raw signal levels: past outputs, past and future inputs, targeting
    /// future output levels.
    Primal,
    /// Differenced regressor plus the flattened scheduling window,
    /// targeting future output differences.
    Velocity,
}

/// Training windows of an unstructured baseline.
#[derive(Debug, Clone)]
pub struct UnstructuredData {
    pub variant: UnstructuredVariant,
    pub dims: Dims,
    /// One stacked window per column.
    pub z: DMatrix<f64>,
    /// Matching prediction targets.
    pub targets: DMatrix<f64>,
}

impl UnstructuredData {
    /// Level-based windows, anchored identically to the velocity data so
    /// both predictors see the same number of training columns.
    pub fn primal(traj: &Trajectory, dims: &Dims) -> Result<Self> {
        dims.validate()?;
        if traj.start != 0 || traj.len() != dims.n_data + 1 {
            return Err(Error::InvalidInput(
                "level-based windows expect the full dictionary trajectory starting at 0".into(),
            ));
        }
        let (n_u, n_y, ell, horizon) = (dims.n_u, dims.n_y, dims.ell, dims.horizon);
        let n_c = dims.n_cols();
        let z_len = ell * n_y + (ell + horizon) * n_u;
        let mut z = DMatrix::zeros(z_len, n_c);
        let mut targets = DMatrix::zeros(horizon * n_y, n_c);
        for j in 0..n_c {
            // Anchor a = j + ell + 1: past outputs y(a-ell..a-1), inputs
            // u(a-ell..a+L-1), targets y(a..a+L-1).
            let base = j + 1;
            for lag in 0..ell {
                z.view_mut((lag * n_y, j), (n_y, 1))
                    .copy_from(&traj.y.column(base + lag));
            }
            for s in 0..ell + horizon {
                z.view_mut((ell * n_y + s * n_u, j), (n_u, 1))
                    .copy_from(&traj.u.column(base + s));
            }
            for t in 0..horizon {
                targets
                    .view_mut((t * n_y, j), (n_y, 1))
                    .copy_from(&traj.y.column(base + ell + t));
            }
        }
        Ok(Self {
            variant: UnstructuredVariant::Primal,
            dims: *dims,
            z,
            targets,
        })
    }

    /// Difference-based windows: the structured regressor stacked with the
    /// flattened scheduling window, same targets as the structured fit.
    pub fn velocity(data: &DataMatrices) -> Result<Self> {
        let x = data.x_matrix();
        let n_c = data.n_cols();
        let w_rows = data.w_l.entries.nrows();
        let mut z = DMatrix::zeros(x.nrows() + w_rows, n_c);
        z.view_mut((0, 0), (x.nrows(), n_c)).copy_from(&x);
        z.view_mut((x.nrows(), 0), (w_rows, n_c))
            .copy_from(&data.w_l.entries);
        Ok(Self {
            variant: UnstructuredVariant::Velocity,
            dims: data.dims,
            z,
            targets: data.y_l.entries.clone(),
        })
    }

    /// Assemble the query stack matching this variant's training layout.
    pub fn query_from_trajectory(&self, traj: &Trajectory, anchor: i64) -> Result<DVector<f64>> {
        unstructured_query(self.variant, &self.dims, traj, anchor)
    }
}

/// Assemble the query stack of an unstructured baseline variant from a
/// measured trajectory, independent of any training data.
pub fn unstructured_query(
    variant: UnstructuredVariant,
    dims: &Dims,
    traj: &Trajectory,
    anchor: i64,
) -> Result<DVector<f64>> {
    match variant {
        UnstructuredVariant::Primal => {
            let (n_u, n_y, ell, horizon) = (dims.n_u, dims.n_y, dims.ell, dims.horizon);
            let (ell_i, horizon_i) = (ell as i64, horizon as i64);
            let (first, last) = traj.time_range();
            if anchor - ell_i < first || anchor + horizon_i - 1 > last {
                return Err(Error::InsufficientData(format!(
                    "level query anchored at {anchor} needs times {}..={}",
                    anchor - ell_i,
                    anchor + horizon_i - 1
                )));
            }
            let mut zq = DVector::zeros(ell * n_y + (ell + horizon) * n_u);
            for lag in 0..ell {
                let y = traj.y_at(anchor - ell_i + lag as i64)?;
                zq.rows_mut(lag * n_y, n_y).copy_from(&y);
            }
            for s in 0..ell + horizon {
                let u = traj.u_at(anchor - ell_i + s as i64)?;
                zq.rows_mut(ell * n_y + s * n_u, n_u).copy_from(&u);
            }
            Ok(zq)
        }
        UnstructuredVariant::Velocity => {
            let q = QueryWindow::from_trajectory(traj, anchor, dims)?;
            Ok(stack_velocity_query(&q))
        }
    }
}

/// Stack a structured query into the difference-based baseline layout.
pub fn stack_velocity_query(q: &QueryWindow) -> DVector<f64> {
    let r = q.regressor();
    let w_flat = q.w.len();
    let mut zq = DVector::zeros(r.len() + w_flat);
    zq.rows_mut(0, r.len()).copy_from(&r);
    for t in 0..q.w.ncols() {
        zq.rows_mut(r.len() + t * q.w.nrows(), q.w.nrows())
            .copy_from(&q.w.column(t));
    }
    zq
}

/// A fitted unstructured baseline predictor.
#[derive(Debug)]
pub struct UnstructuredPredictor {
    pub variant: UnstructuredVariant,
    pub dims: Dims,
    pub kernel: KernelSpec,
    pub gamma: f64,
    pub z: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub spd: SpdFactor,
    pub a_dual: DMatrix<f64>,
}

impl UnstructuredPredictor {
    pub fn fit(data: &UnstructuredData, kernel: KernelSpec, gamma: f64) -> Result<Self> {
        let gram = plain_gram(&kernel, &data.z)?;
        Self::fit_with_gram(data, kernel, gamma, &gram)
    }

    pub fn fit_with_gram(
        data: &UnstructuredData,
        kernel: KernelSpec,
        gamma: f64,
        gram: &DMatrix<f64>,
    ) -> Result<Self> {
        validate_gamma(gamma)?;
        let n_c = data.z.ncols();
        if gram.nrows() != n_c || gram.ncols() != n_c {
            return Err(Error::InvalidInput(format!(
                "Gram matrix is {}x{} but there are {n_c} training columns",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let mut m = gram.clone();
        for i in 0..n_c {
            m[(i, i)] += 1.0 / gamma;
        }
        let spd = SpdFactor::new(&m)?;
        let a_dual = spd.solve_mat(&data.targets.transpose())?.transpose();
        Ok(Self {
            variant: data.variant,
            dims: data.dims,
            kernel,
            gamma,
            z: data.z.clone(),
            targets: data.targets.clone(),
            spd,
            a_dual,
        })
    }

    pub fn predict(&self, zq: &DVector<f64>) -> Result<DVector<f64>> {
        if zq.len() != self.z.nrows() {
            return Err(Error::InvalidInput(format!(
                "query stack has length {}, training windows have {}",
                zq.len(),
                self.z.nrows()
            )));
        }
        let mut c = DVector::zeros(self.z.ncols());
        for i in 0..self.z.ncols() {
            c[i] = self.kernel.eval(&self.z.column(i).into_owned(), zq)?;
        }
        Ok(&self.a_dual * c)
    }
}

/// Plain kernel Gram matrix over stacked window columns.
pub fn plain_gram(kernel: &KernelSpec, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.ncols();
    let cols: Vec<DVector<f64>> = (0..n).map(|i| z.column(i).into_owned()).collect();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&cols[i], &cols[j])?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}

/// Everything the iterative refinement needs about the query: measured
/// past outputs and the full (past and planned) input trajectory.
#[derive(Debug, Clone)]
pub struct PrimalQueryContext {
    /// `y(a-ell-1 .. a-1)`, one column per time.
    pub y_past: DMatrix<f64>,
    /// `u(a-ell-1 .. a+L-1)`, one column per time.
    pub u_all: DMatrix<f64>,
}

impl PrimalQueryContext {
    pub fn from_trajectory(traj: &Trajectory, anchor: i64, dims: &Dims) -> Result<Self> {
        let ell = dims.ell as i64;
        let horizon = dims.horizon as i64;
        let (first, last) = traj.time_range();
        if anchor - ell - 1 < first || anchor + horizon - 1 > last {
            return Err(Error::InsufficientData(format!(
                "iterative query anchored at {anchor} needs times {}..={}",
                anchor - ell - 1,
                anchor + horizon - 1
            )));
        }
        let past = traj.slice(anchor - ell - 1, anchor - 1)?;
        let future = traj.slice(anchor - ell - 1, anchor + horizon - 1)?;
        Ok(Self {
            y_past: past.y,
            u_all: future.u,
        })
    }
}

/// Result of the iterative scheduling refinement.
#[derive(Debug, Clone)]
pub struct IterativeResult {
    /// Final stacked difference prediction `dy[1..L]`.
    pub dy: DVector<f64>,
    /// Reconstructed output levels over the horizon, one column per step.
    pub y: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iteration controls for [`iterative_w_predict`].
#[derive(Debug, Clone, Copy)]
pub struct IterativeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_ITERATIVE_TOL,
            max_iter: DEFAULT_ITERATIVE_MAX_ITER,
        }
    }
}

/// Predict without measured future outputs: seed the scheduling windows by
/// holding the last measured output, then alternate between predicting the
/// difference trajectory and rebuilding the scheduling vectors it implies,
/// until the prediction reaches a fixed point.
pub fn iterative_w_predict(
    predictor: &FittedPredictor,
    ctx: &PrimalQueryContext,
    opts: IterativeOptions,
) -> Result<IterativeResult> {
    let dims = &predictor.dims;
    let (n_u, n_y, ell, horizon) = (dims.n_u, dims.n_y, dims.ell, dims.horizon);
    if ctx.y_past.nrows() != n_y || ctx.y_past.ncols() != ell + 1 {
        return Err(Error::InvalidInput(format!(
            "iterative query needs y over {} past times, got {} columns",
            ell + 1,
            ctx.y_past.ncols()
        )));
    }
    if ctx.u_all.nrows() != n_u || ctx.u_all.ncols() != ell + 1 + horizon {
        return Err(Error::InvalidInput(format!(
            "iterative query needs u over {} times, got {} columns",
            ell + 1 + horizon,
            ctx.u_all.ncols()
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidInput(
            "iterative refinement needs a positive tolerance and at least one iteration".into(),
        ));
    }
    let y_last = ctx.y_past.column(ell).into_owned();
    // Initial guess: the output holds its last measured value.
    let mut y_future = DMatrix::from_fn(n_y, horizon, |r, _| y_last[r]);
    let mut dy_prev: Option<DVector<f64>> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut dy = DVector::zeros(horizon * n_y);
    while iterations < opts.max_iter {
        iterations += 1;
        let mut y_full = DMatrix::zeros(n_y, ell + 1 + horizon);
        y_full.view_mut((0, 0), (n_y, ell + 1)).copy_from(&ctx.y_past);
        y_full
            .view_mut((0, ell + 1), (n_y, horizon))
            .copy_from(&y_future);
        let traj = Trajectory::new(ctx.u_all.clone(), y_full, 0)?;
        let query = QueryWindow::from_trajectory(&traj, ell as i64 + 1, dims)?;
        dy = predictor.predict(&query)?;
        if !dy.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(
                "iterative refinement produced a non-finite prediction".into(),
            ));
        }
        // Integrate the predicted differences into output levels.
        let mut level = y_last.clone();
        for t in 0..horizon {
            level += dy.rows(t * n_y, n_y);
            y_future.set_column(t, &level);
        }
        if let Some(prev) = &dy_prev {
            let step = (&dy - prev).abs().max();
            if step <= opts.tol {
                converged = true;
                break;
            }
        }
        dy_prev = Some(dy.clone());
    }
    Ok(IterativeResult {
        dy,
        y: y_future,
        iterations,
        converged,
    })
}

/// Counterpart of [`iterative_w_predict`] for the difference-based
/// unstructured baseline, whose query stack also embeds the scheduling
/// windows and therefore future output levels. Only the velocity variant
/// needs refinement; the level variant's query is fully determined by
/// measured data.
pub fn iterative_w_predict_unstructured(
    predictor: &UnstructuredPredictor,
    ctx: &PrimalQueryContext,
    opts: IterativeOptions,
) -> Result<IterativeResult> {
    if predictor.variant != UnstructuredVariant::Velocity {
        return Err(Error::InvalidInput(
            "iterative refinement applies to the difference-based baseline; \
             the level-based query needs no future outputs"
                .into(),
        ));
    }
    let dims = &predictor.dims;
    let (n_u, n_y, ell, horizon) = (dims.n_u, dims.n_y, dims.ell, dims.horizon);
    if ctx.y_past.nrows() != n_y || ctx.y_past.ncols() != ell + 1 {
        return Err(Error::InvalidInput(format!(
            "iterative query needs y over {} past times, got {} columns",
            ell + 1,
            ctx.y_past.ncols()
        )));
    }
    if ctx.u_all.nrows() != n_u || ctx.u_all.ncols() != ell + 1 + horizon {
        return Err(Error::InvalidInput(format!(
            "iterative query needs u over {} times, got {} columns",
            ell + 1 + horizon,
            ctx.u_all.ncols()
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidInput(
            "iterative refinement needs a positive tolerance and at least one iteration".into(),
        ));
    }
    let y_last = ctx.y_past.column(ell).into_owned();
    let mut y_future = DMatrix::from_fn(n_y, horizon, |r, _| y_last[r]);
    let mut dy_prev: Option<DVector<f64>> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut dy = DVector::zeros(horizon * n_y);
    while iterations < opts.max_iter {
        iterations += 1;
        let mut y_full = DMatrix::zeros(n_y, ell + 1 + horizon);
        y_full.view_mut((0, 0), (n_y, ell + 1)).copy_from(&ctx.y_past);
        y_full
            .view_mut((0, ell + 1), (n_y, horizon))
            .copy_from(&y_future);
        let traj = Trajectory::new(ctx.u_all.clone(), y_full, 0)?;
        let zq = unstructured_query(predictor.variant, dims, &traj, ell as i64 + 1)?;
        dy = predictor.predict(&zq)?;
        if !dy.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(
                "iterative refinement produced a non-finite prediction".into(),
            ));
        }
        let mut level = y_last.clone();
        for t in 0..horizon {
            level += dy.rows(t * n_y, n_y);
            y_future.set_column(t, &level);
        }
        if let Some(prev) = &dy_prev {
            let step = (&dy - prev).abs().max();
            if step <= opts.tol {
                converged = true;
                break;
            }
        }
        dy_prev = Some(dy.clone());
    }
    Ok(IterativeResult {
        dy,
        y: y_future,
        iterations,
        converged,
    })
}
