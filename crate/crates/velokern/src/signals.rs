//! Signal containers and data-dictionary construction.
//!
//! Discrete-time signals are stored column-wise: column `t` of a signal
//! matrix holds the sample at time `start + t`. From a measured trajectory
//! the module derives difference (velocity) signals, scheduling vectors, and
//! the block-Hankel data matrices that the predictor consumes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Problem dimensions shared by every module.
///
/// `n_a`/`n_b` are the output/input lag depths of the underlying system and
/// matter only to the simulation and explicit-parameter paths; the
/// data-driven pipeline windows everything uniformly with `ell >= max(n_a,
/// n_b)` past samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Number of inputs.
    pub n_u: usize,
    /// Number of outputs.
    pub n_y: usize,
    /// Output lag depth of the system.
    pub n_a: usize,
    /// Input lag depth of the system.
    pub n_b: usize,
    /// Uniform window depth used for data matrices (`ell >= max(n_a, n_b)`).
    pub ell: usize,
    /// Multi-step prediction horizon `L`.
    pub horizon: usize,
    /// Last time index of the data dictionary; a trajectory carries
    /// `n_data + 1` samples indexed `0..=n_data`.
    pub n_data: usize,
}

impl Dims {
    pub fn new(
        n_u: usize,
        n_y: usize,
        n_a: usize,
        n_b: usize,
        ell: usize,
        horizon: usize,
        n_data: usize,
    ) -> Result<Self> {
        let dims = Self {
            n_u,
            n_y,
            n_a,
            n_b,
            ell,
            horizon,
            n_data,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// Dimensions with the system lags taken equal to the window depth.
    pub fn uniform(n_u: usize, n_y: usize, ell: usize, horizon: usize, n_data: usize) -> Result<Self> {
        Self::new(n_u, n_y, ell, ell, ell, horizon, n_data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_y == 0 {
            return Err(Error::InvalidInput(
                "n_u and n_y must both be at least 1".into(),
            ));
        }
        if self.n_r() == 0 {
            return Err(Error::InvalidInput("max(n_a, n_b) must be at least 1".into()));
        }
        if self.ell < self.n_r() {
            return Err(Error::InvalidInput(format!(
                "window depth ell = {} must be >= max(n_a, n_b) = {}",
                self.ell,
                self.n_r()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if self.n_data < self.horizon + self.ell {
            return Err(Error::InsufficientData(format!(
                "need n_data >= horizon + ell = {} for at least one data column, got {}",
                self.horizon + self.ell,
                self.n_data
            )));
        }
        Ok(())
    }

    /// Largest system lag, `max(n_a, n_b)`.
    pub fn n_r(&self) -> usize {
        self.n_a.max(self.n_b)
    }

    /// Number of data-matrix columns, `N - L - ell + 1`.
    pub fn n_cols(&self) -> usize {
        self.n_data - self.horizon - self.ell + 1
    }

    /// Scheduling-vector dimension `(ell + 1) n_y + (ell + 2) n_u`.
    pub fn n_w(&self) -> usize {
        (self.ell + 1) * self.n_y + (self.ell + 2) * self.n_u
    }

    /// Rows of the initial-window regressor block, `ell (n_y + n_u)`.
    pub fn head_dim(&self) -> usize {
        self.ell * (self.n_y + self.n_u)
    }

    /// Full regressor dimension `ell (n_y + n_u) + L n_u`.
    pub fn regressor_dim(&self) -> usize {
        self.head_dim() + self.horizon * self.n_u
    }
}

/// Measured input/output trajectory. Column `t` holds the sample at time
/// `start + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub start: i64,
}

impl Trajectory {
    pub fn new(u: DMatrix<f64>, y: DMatrix<f64>, start: i64) -> Result<Self> {
        if u.ncols() != y.ncols() {
            return Err(Error::InvalidInput(format!(
                "input and output sample counts differ: {} vs {}",
                u.ncols(),
                y.ncols()
            )));
        }
        if u.ncols() == 0 {
            return Err(Error::InsufficientData("empty trajectory".into()));
        }
        Ok(Self { u, y, start })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First and last time index covered.
    pub fn time_range(&self) -> (i64, i64) {
        (self.start, self.start + self.len() as i64 - 1)
    }

    fn offset(&self, k: i64) -> Result<usize> {
        let (first, last) = self.time_range();
        if k < first || k > last {
            return Err(Error::InvalidInput(format!(
                "time index {k} outside trajectory range [{first}, {last}]"
            )));
        }
        Ok((k - self.start) as usize)
    }

    pub fn u_at(&self, k: i64) -> Result<DVector<f64>> {
        Ok(self.u.column(self.offset(k)?).into_owned())
    }

    pub fn y_at(&self, k: i64) -> Result<DVector<f64>> {
        Ok(self.y.column(self.offset(k)?).into_owned())
    }

    /// Difference signals; the result starts one step after `self.start`.
    pub fn delta(&self) -> Result<DeltaTrajectory> {
        Ok(DeltaTrajectory {
            du: diff_signal(&self.u)?,
            dy: diff_signal(&self.y)?,
            start: self.start + 1,
        })
    }

    /// Sub-trajectory covering times `from..=to`.
    pub fn slice(&self, from: i64, to: i64) -> Result<Trajectory> {
        let a = self.offset(from)?;
        let b = self.offset(to)?;
        if b < a {
            return Err(Error::InvalidInput(format!(
                "slice range [{from}, {to}] is empty"
            )));
        }
        Trajectory::new(
            self.u.columns(a, b - a + 1).into_owned(),
            self.y.columns(a, b - a + 1).into_owned(),
            from,
        )
    }
}

/// Velocity (first-difference) form of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTrajectory {
    pub du: DMatrix<f64>,
    pub dy: DMatrix<f64>,
    pub start: i64,
}

impl DeltaTrajectory {
    pub fn len(&self) -> usize {
        self.du.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sequence of scheduling vectors; column `t` holds `w(start + t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingSequence {
    pub w: DMatrix<f64>,
    pub start: i64,
}

impl SchedulingSequence {
    pub fn len(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Matrix of `count` consecutive scheduling vectors starting at time `k`.
    pub fn window(&self, k: i64, count: usize) -> Result<DMatrix<f64>> {
        let last = self.start + self.len() as i64 - 1;
        if k < self.start || k + count as i64 - 1 > last {
            return Err(Error::InvalidInput(format!(
                "scheduling window [{k}, {}] outside range [{}, {last}]",
                k + count as i64 - 1,
                self.start
            )));
        }
        let a = (k - self.start) as usize;
        Ok(self.w.columns(a, count).into_owned())
    }
}

/// Block-Hankel matrix of a vector signal. Block-row `t` of column `j` holds
/// the sample `t` steps after the column's first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HankelMatrix {
    pub entries: DMatrix<f64>,
    /// Number of stacked samples per column.
    pub depth: usize,
    /// Dimension of one signal sample.
    pub signal_dim: usize,
}

impl HankelMatrix {
    pub fn width(&self) -> usize {
        self.entries.ncols()
    }

    /// View of block-row `t` (rows `t*signal_dim .. (t+1)*signal_dim`).
    pub fn block_row(&self, t: usize) -> DMatrix<f64> {
        self.entries
            .rows(t * self.signal_dim, self.signal_dim)
            .into_owned()
    }

    /// Column `j` reshaped to one sample per column (`signal_dim x depth`).
    pub fn column_window(&self, j: usize) -> DMatrix<f64> {
        let col = self.entries.column(j);
        DMatrix::from_column_slice(self.signal_dim, self.depth, col.as_slice())
    }

    /// Restrict to a subset of columns (order preserved, repeats allowed).
    pub fn select_columns(&self, cols: &[usize]) -> Result<HankelMatrix> {
        if cols.iter().any(|&c| c >= self.width()) {
            return Err(Error::InvalidInput(format!(
                "column selection out of range (width {})",
                self.width()
            )));
        }
        let mut entries = DMatrix::zeros(self.entries.nrows(), cols.len());
        for (k, &c) in cols.iter().enumerate() {
            entries.set_column(k, &self.entries.column(c));
        }
        Ok(HankelMatrix {
            entries,
            depth: self.depth,
            signal_dim: self.signal_dim,
        })
    }

    /// Recover the generating sample sequence when the entries are exactly
    /// (bit-for-bit) Hankel-consistent, i.e. overlapping blocks agree.
    /// Returns `None` for matrices whose columns were permuted or otherwise
    /// do not form a sliding window.
    pub fn try_source_sequence(&self) -> Option<DMatrix<f64>> {
        let w = self.width();
        if w == 0 {
            return None;
        }
        let n = self.signal_dim;
        let mut seq = DMatrix::zeros(n, w + self.depth - 1);
        for j in 0..w {
            for r in 0..n {
                seq[(r, j)] = self.entries[(r, j)];
            }
        }
        for t in 1..self.depth {
            for r in 0..n {
                seq[(r, w - 1 + t)] = self.entries[(t * n + r, w - 1)];
            }
        }
        // Verify every entry against the candidate sequence.
        for j in 0..w {
            for t in 0..self.depth {
                for r in 0..n {
                    if self.entries[(t * n + r, j)].to_bits() != seq[(r, j + t)].to_bits() {
                        return None;
                    }
                }
            }
        }
        Some(seq)
    }

    /// Whether overlapping blocks agree, i.e. the matrix is a genuine
    /// sliding-window Hankel matrix.
    pub fn is_consistent(&self) -> bool {
        self.try_source_sequence().is_some()
    }
}

/// First differences: `out(t) = x(t+1) - x(t)`, one column shorter.
pub fn diff_signal(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() < 2 {
        return Err(Error::InsufficientData(
            "difference signal needs at least two samples".into(),
        ));
    }
    Ok(DMatrix::from_fn(x.nrows(), x.ncols() - 1, |r, c| {
        x[(r, c + 1)] - x[(r, c)]
    }))
}

/// Cumulative sums: `out(0) = x0`, `out(k) = out(k-1) + dx(k-1)`.
pub fn sum_signal(dx: &DMatrix<f64>, x0: &DVector<f64>) -> Result<DMatrix<f64>> {
    if x0.len() != dx.nrows() {
        return Err(Error::InvalidInput(format!(
            "initial sample has dimension {}, increments have {}",
            x0.len(),
            dx.nrows()
        )));
    }
    let mut out = DMatrix::zeros(dx.nrows(), dx.ncols() + 1);
    out.set_column(0, x0);
    for c in 0..dx.ncols() {
        let prev = out.column(c).into_owned();
        out.set_column(c + 1, &(prev + dx.column(c)));
    }
    Ok(out)
}

/// Block-Hankel matrix of depth `depth` over the columns of `x`.
pub fn hankel(x: &DMatrix<f64>, depth: usize) -> Result<HankelMatrix> {
    if depth == 0 {
        return Err(Error::InvalidInput("Hankel depth must be at least 1".into()));
    }
    if x.ncols() < depth {
        return Err(Error::InsufficientData(format!(
            "Hankel depth {} exceeds the {} available samples",
            depth,
            x.ncols()
        )));
    }
    let n = x.nrows();
    let width = x.ncols() - depth + 1;
    let mut entries = DMatrix::zeros(depth * n, width);
    for j in 0..width {
        for t in 0..depth {
            for r in 0..n {
                entries[(t * n + r, j)] = x[(r, j + t)];
            }
        }
    }
    Ok(HankelMatrix {
        entries,
        depth,
        signal_dim: n,
    })
}

/// Scheduling vectors of the velocity-form predictor:
/// `w(k) = col(y(k-1), ..., y(k-ell-1), u(k), u(k-1), ..., u(k-ell-1))`,
/// available for every `k` with a full lag window inside the trajectory.
pub fn build_scheduling(traj: &Trajectory, ell: usize) -> Result<SchedulingSequence> {
    let (first, last) = traj.time_range();
    let k0 = first + ell as i64 + 1;
    if k0 > last {
        return Err(Error::InsufficientData(format!(
            "trajectory of length {} cannot host scheduling vectors of depth ell = {}",
            traj.len(),
            ell
        )));
    }
    let n_u = traj.u.nrows();
    let n_y = traj.y.nrows();
    let n_w = (ell + 1) * n_y + (ell + 2) * n_u;
    let count = (last - k0 + 1) as usize;
    let mut w = DMatrix::zeros(n_w, count);
    for (c, k) in (k0..=last).enumerate() {
        let mut row = 0;
        for lag in 1..=(ell as i64 + 1) {
            let y = traj.y_at(k - lag)?;
            for r in 0..n_y {
                w[(row + r, c)] = y[r];
            }
            row += n_y;
        }
        for lag in 0..=(ell as i64 + 1) {
            let u = traj.u_at(k - lag)?;
            for r in 0..n_u {
                w[(row + r, c)] = u[r];
            }
            row += n_u;
        }
    }
    Ok(SchedulingSequence { w, start: k0 })
}

/// Scheduling vectors of the shifted form:
/// `w(k) = col(y(k), y(k-1), u(k), u(k-1))`.
pub fn build_shifted_scheduling(traj: &Trajectory) -> Result<SchedulingSequence> {
    let (first, last) = traj.time_range();
    if traj.len() < 2 {
        return Err(Error::InsufficientData(
            "shifted scheduling needs at least two samples".into(),
        ));
    }
    let n_u = traj.u.nrows();
    let n_y = traj.y.nrows();
    let count = traj.len() - 1;
    let mut w = DMatrix::zeros(2 * (n_y + n_u), count);
    for (c, k) in ((first + 1)..=last).enumerate() {
        let mut row = 0;
        for lag in 0..=1 {
            let y = traj.y_at(k - lag)?;
            for r in 0..n_y {
                w[(row + r, c)] = y[r];
            }
            row += n_y;
        }
        for lag in 0..=1 {
            let u = traj.u_at(k - lag)?;
            for r in 0..n_u {
                w[(row + r, c)] = u[r];
            }
            row += n_u;
        }
    }
    Ok(SchedulingSequence {
        w,
        start: first + 1,
    })
}

/// The six aligned block-Hankel matrices the predictor is trained on. All
/// share the same width `N_c = n_data - horizon - ell + 1`; column `i`
/// describes the window anchored at time `a = i + ell + 1` (1-based `i`):
/// past differences over `a-ell .. a-1`, future differences, scheduling
/// vectors and measured outputs over `a .. a+L-1`.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub dims: Dims,
    /// Past output differences, depth `ell`.
    pub y_ell: HankelMatrix,
    /// Future output differences, depth `horizon`.
    pub y_l: HankelMatrix,
    /// Past input differences, depth `ell`.
    pub u_ell: HankelMatrix,
    /// Future input differences, depth `horizon`.
    pub u_l: HankelMatrix,
    /// Scheduling vectors over the prediction window, depth `horizon`.
    pub w_l: HankelMatrix,
    /// Measured (undifferenced) outputs over the prediction window.
    pub ybar_l: HankelMatrix,
}

/// Build the data matrices from a measured trajectory over times
/// `0..=dims.n_data`.
pub fn build_data_matrices(traj: &Trajectory, dims: &Dims) -> Result<DataMatrices> {
    dims.validate()?;
    if traj.start != 0 {
        return Err(Error::InvalidInput(
            "data dictionary must start at time index 0".into(),
        ));
    }
    if traj.len() != dims.n_data + 1 {
        return Err(Error::InvalidInput(format!(
            "trajectory has {} samples but dims.n_data = {} requires {}",
            traj.len(),
            dims.n_data,
            dims.n_data + 1
        )));
    }
    if traj.u.nrows() != dims.n_u || traj.y.nrows() != dims.n_y {
        return Err(Error::InvalidInput(format!(
            "trajectory is {}-in/{}-out but dims say {}/{}",
            traj.u.nrows(),
            traj.y.nrows(),
            dims.n_u,
            dims.n_y
        )));
    }
    let ell = dims.ell;
    let horizon = dims.horizon;
    let n = dims.n_data;
    let delta = traj.delta()?; // differences at times 1..=n
    let sched = build_scheduling(traj, ell)?; // w at times ell+1..=n

    let early = n - horizon; // past windows use differences 1..=n-L
    let y_ell = hankel(&delta.dy.columns(0, early).into_owned(), ell)?;
    let u_ell = hankel(&delta.du.columns(0, early).into_owned(), ell)?;
    let late = n - ell; // future windows use samples ell+1..=n
    let y_l = hankel(&delta.dy.columns(ell, late).into_owned(), horizon)?;
    let u_l = hankel(&delta.du.columns(ell, late).into_owned(), horizon)?;
    let w_l = hankel(&sched.w, horizon)?;
    let ybar_l = hankel(&traj.y.columns(ell + 1, late).into_owned(), horizon)?;

    let data = DataMatrices {
        dims: *dims,
        y_ell,
        y_l,
        u_ell,
        u_l,
        w_l,
        ybar_l,
    };
    debug_assert_eq!(data.y_ell.width(), dims.n_cols());
    debug_assert_eq!(data.y_l.width(), dims.n_cols());
    debug_assert_eq!(data.w_l.width(), dims.n_cols());
    Ok(data)
}

impl DataMatrices {
    pub fn n_cols(&self) -> usize {
        self.y_l.width()
    }

    /// Stacked regressor column `X_i = [Y_ell; U_ell; U_L](:, i)`.
    pub fn regressor_column(&self, i: usize) -> DVector<f64> {
        let mut x = DVector::zeros(self.dims.regressor_dim());
        let d = self.dims;
        x.rows_mut(0, d.ell * d.n_y)
            .copy_from(&self.y_ell.entries.column(i));
        x.rows_mut(d.ell * d.n_y, d.ell * d.n_u)
            .copy_from(&self.u_ell.entries.column(i));
        x.rows_mut(d.head_dim(), d.horizon * d.n_u)
            .copy_from(&self.u_l.entries.column(i));
        x
    }

    /// All regressor columns stacked into one matrix.
    pub fn x_matrix(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.dims.regressor_dim(), self.n_cols());
        for i in 0..self.n_cols() {
            x.set_column(i, &self.regressor_column(i));
        }
        x
    }

    /// Restrict all matrices to a subset of columns. The result carries
    /// adjusted dimensions; for non-contiguous selections the Hankel
    /// sliding-window structure is lost (handled downstream).
    pub fn select_columns(&self, cols: &[usize]) -> Result<DataMatrices> {
        if cols.is_empty() {
            return Err(Error::InvalidInput("empty column selection".into()));
        }
        let d = self.dims;
        let dims = Dims::new(
            d.n_u,
            d.n_y,
            d.n_a,
            d.n_b,
            d.ell,
            d.horizon,
            cols.len() + d.horizon + d.ell - 1,
        )?;
        Ok(DataMatrices {
            dims,
            y_ell: self.y_ell.select_columns(cols)?,
            y_l: self.y_l.select_columns(cols)?,
            u_ell: self.u_ell.select_columns(cols)?,
            u_l: self.u_l.select_columns(cols)?,
            w_l: self.w_l.select_columns(cols)?,
            ybar_l: self.ybar_l.select_columns(cols)?,
        })
    }
}

/// How multi-step difference predictions are folded back into absolute
/// outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionMode {
    /// `y(t) = dy(t) + y(t-1)` using the previously *reconstructed* output;
    /// one-step errors persist as an offset.
    PredictedPrevious,
    /// `y(t) = dy(t) + y_ref(t-1)` using the measured previous output;
    /// one-step errors stay local.
    TruePrevious,
}

/// Fold predicted differences (columns = steps `1..=L`) back into absolute
/// outputs. `y_ref` holds reference outputs with column `t` at step `t`;
/// mode `PredictedPrevious` only uses column 0 (the anchor `y(0)`), mode
/// `TruePrevious` needs columns `0..L-1`.
pub fn reconstruct_primal(
    dy_hat: &DMatrix<f64>,
    y_ref: &DMatrix<f64>,
    mode: ReconstructionMode,
) -> Result<DMatrix<f64>> {
    let l = dy_hat.ncols();
    if l == 0 {
        return Err(Error::InvalidInput("no predicted differences".into()));
    }
    if y_ref.nrows() != dy_hat.nrows() {
        return Err(Error::InvalidInput(format!(
            "reference outputs have dimension {}, predictions {}",
            y_ref.nrows(),
            dy_hat.nrows()
        )));
    }
    let needed = match mode {
        ReconstructionMode::PredictedPrevious => 1,
        ReconstructionMode::TruePrevious => l,
    };
    if y_ref.ncols() < needed {
        return Err(Error::InsufficientData(format!(
            "reconstruction needs {} reference samples, got {}",
            needed,
            y_ref.ncols()
        )));
    }
    let mut out = DMatrix::zeros(dy_hat.nrows(), l);
    match mode {
        ReconstructionMode::PredictedPrevious => {
            let mut prev = y_ref.column(0).into_owned();
            for t in 0..l {
                prev += dy_hat.column(t);
                out.set_column(t, &prev);
            }
        }
        ReconstructionMode::TruePrevious => {
            for t in 0..l {
                let col = y_ref.column(t) + dy_hat.column(t);
                out.set_column(t, &col);
            }
        }
    }
    Ok(out)
}

/// Write a trajectory as CSV with header `k,u_1,...,u_nu,y_1,...,y_ny`.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut text = String::new();
    let n_u = traj.u.nrows();
    let n_y = traj.y.nrows();
    text.push('k');
    for i in 1..=n_u {
        let _ = write!(text, ",u_{i}");
    }
    for i in 1..=n_y {
        let _ = write!(text, ",y_{i}");
    }
    text.push('\n');
    for t in 0..traj.len() {
        let _ = write!(text, "{}", traj.start + t as i64);
        for r in 0..n_u {
            let _ = write!(text, ",{}", traj.u[(r, t)]);
        }
        for r in 0..n_y {
            let _ = write!(text, ",{}", traj.y[(r, t)]);
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a trajectory from the CSV layout produced by
/// [`write_trajectory_csv`]. Time indices must be consecutive.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let name = path.display().to_string();
    let data_err = |line: usize, message: String| Error::Data {
        path: name.clone(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| data_err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"k") {
        return Err(data_err(1, "header must start with 'k'".into()));
    }
    let mut n_u = 0;
    let mut n_y = 0;
    for (j, c) in cols[1..].iter().enumerate() {
        let expect = if n_y == 0 && c.starts_with("u_") {
            n_u += 1;
            format!("u_{n_u}")
        } else {
            n_y += 1;
            format!("y_{n_y}")
        };
        if **c != expect {
            return Err(data_err(
                1,
                format!("unexpected header column {} (wanted {expect})", j + 2),
            ));
        }
    }
    if n_u == 0 || n_y == 0 {
        return Err(data_err(1, "need at least one u_ and one y_ column".into()));
    }
    let mut ks: Vec<i64> = Vec::new();
    let mut u_vals: Vec<f64> = Vec::new();
    let mut y_vals: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + n_u + n_y {
            return Err(data_err(
                lineno,
                format!("expected {} fields, found {}", 1 + n_u + n_y, fields.len()),
            ));
        }
        let k: i64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| data_err(lineno, format!("bad time index: {e}")))?;
        if let Some(&prev) = ks.last() {
            if k != prev + 1 {
                return Err(data_err(
                    lineno,
                    format!("non-consecutive time index {k} after {prev}"),
                ));
            }
        }
        ks.push(k);
        for (pos, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|e| data_err(lineno, format!("bad value in field {}: {e}", pos + 2)))?;
            if !v.is_finite() {
                return Err(data_err(lineno, format!("non-finite value in field {}", pos + 2)));
            }
            if pos < n_u {
                u_vals.push(v);
            } else {
                y_vals.push(v);
            }
        }
    }
    if ks.is_empty() {
        return Err(data_err(2, "no data rows".into()));
    }
    let t = ks.len();
    let u = DMatrix::from_fn(n_u, t, |r, c| u_vals[c * n_u + r]);
    let y = DMatrix::from_fn(n_y, t, |r, c| y_vals[c * n_y + r]);
    Trajectory::new(u, y, ks[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use approx::assert_relative_eq;

    fn random_trajectory(n_u: usize, n_y: usize, len: usize, seed: u64) -> Trajectory {
        let mut rng = SeededRng::new(seed);
        Trajectory::new(
            DMatrix::from_fn(n_u, len, |_, _| rng.gaussian()),
            DMatrix::from_fn(n_y, len, |_, _| rng.gaussian()),
            0,
        )
        .unwrap()
    }

    #[test]
    fn hankel_matches_hand_layout() {
        let x = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let h = hankel(&x, 2).unwrap();
        assert_eq!(h.width(), 3);
        assert_eq!(
            h.entries,
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0])
        );
        assert!(h.is_consistent());
    }

    #[test]
    fn hankel_blocks_are_anti_diagonal_constant() {
        let mut rng = SeededRng::new(5);
        let x = DMatrix::from_fn(3, 12, |_, _| rng.gaussian());
        let h = hankel(&x, 4).unwrap();
        for j in 0..h.width() {
            for t in 0..h.depth {
                for r in 0..3 {
                    assert_eq!(h.entries[(t * 3 + r, j)], x[(r, j + t)]);
                }
            }
        }
        let seq = h.try_source_sequence().unwrap();
        assert_eq!(seq, x);
    }

    #[test]
    fn hankel_rejects_short_signals() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            hankel(&x, 3),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn permuted_columns_are_not_hankel_consistent() {
        let x = DMatrix::from_row_slice(1, 6, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let h = hankel(&x, 2).unwrap();
        let p = h.select_columns(&[2, 0, 1, 4, 3]).unwrap();
        assert!(!p.is_consistent());
        let c = h.select_columns(&[1, 2, 3]).unwrap();
        assert!(c.is_consistent());
    }

    #[test]
    fn diff_then_sum_round_trips() {
        let traj = random_trajectory(2, 3, 30, 9);
        let d = diff_signal(&traj.y).unwrap();
        let back = sum_signal(&d, &traj.y.column(0).into_owned()).unwrap();
        assert_relative_eq!(back, traj.y, epsilon = 1e-12);
    }

    #[test]
    fn diff_needs_two_samples() {
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(diff_signal(&x), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn dims_counts_match_benchmark_protocol() {
        let dims = Dims::uniform(1, 1, 2, 10, 899).unwrap();
        assert_eq!(dims.n_cols(), 888);
        assert_eq!(dims.n_w(), 7);
        assert_eq!(dims.head_dim(), 4);
        assert_eq!(dims.regressor_dim(), 14);
    }

    #[test]
    fn dims_validation_rejects_bad_shapes() {
        assert!(Dims::new(1, 1, 3, 1, 2, 4, 100).is_err()); // ell < n_r
        assert!(Dims::uniform(1, 1, 2, 10, 11).is_err()); // no columns
        assert!(Dims::uniform(0, 1, 1, 1, 10).is_err());
        assert!(Dims::uniform(1, 1, 2, 10, 12).is_ok()); // exactly one column
    }

    #[test]
    fn scheduling_vectors_stack_the_documented_lags() {
        // Distinct integer samples make the expected layout unmistakable.
        let len = 12;
        let u = DMatrix::from_fn(1, len, |_, c| 100.0 + c as f64);
        let y = DMatrix::from_fn(1, len, |_, c| 200.0 + c as f64);
        let traj = Trajectory::new(u, y, 0).unwrap();
        let ell = 2;
        let s = build_scheduling(&traj, ell).unwrap();
        assert_eq!(s.start, 3);
        assert_eq!(s.len(), len - 1 - ell);
        // w(k) = [y(k-1), y(k-2), y(k-3), u(k), u(k-1), u(k-2), u(k-3)]
        let k = 5i64;
        let col = s.window(k, 1).unwrap();
        let expect = [204.0, 203.0, 202.0, 105.0, 104.0, 103.0, 102.0];
        for (r, e) in expect.iter().enumerate() {
            assert_eq!(col[(r, 0)], *e);
        }
    }

    #[test]
    fn shifted_scheduling_stacks_current_and_previous() {
        let len = 6;
        let u = DMatrix::from_fn(1, len, |_, c| 10.0 + c as f64);
        let y = DMatrix::from_fn(1, len, |_, c| 20.0 + c as f64);
        let traj = Trajectory::new(u, y, 0).unwrap();
        let s = build_shifted_scheduling(&traj).unwrap();
        assert_eq!(s.start, 1);
        let col = s.window(3, 1).unwrap();
        // w(k) = [y(k), y(k-1), u(k), u(k-1)]
        assert_eq!(col.column(0).as_slice(), &[23.0, 22.0, 13.0, 12.0]);
    }

    #[test]
    fn data_matrices_have_documented_alignment() {
        // SISO, ell = 2, L = 3, n_data = 9 -> N_c = 5.
        let dims = Dims::uniform(1, 1, 2, 3, 9).unwrap();
        let len = 10;
        let u = DMatrix::from_fn(1, len, |_, c| 100.0 + c as f64);
        let y = DMatrix::from_fn(1, len, |_, c| (c as f64) * (c as f64));
        let traj = Trajectory::new(u.clone(), y.clone(), 0).unwrap();
        let dm = build_data_matrices(&traj, &dims).unwrap();
        assert_eq!(dm.n_cols(), 5);
        let dy = |k: usize| y[(0, k)] - y[(0, k - 1)];
        for i in 0..5 {
            // 1-based column index i+1; anchor a = i + ell + 1.
            let a = i + 3;
            for t in 0..2 {
                // Y_ell stacks dy(a-ell .. a-1), oldest first.
                assert_eq!(dm.y_ell.entries[(t, i)], dy(a - 2 + t));
                assert_eq!(dm.u_ell.entries[(t, i)], 1.0);
            }
            for t in 0..3 {
                assert_eq!(dm.y_l.entries[(t, i)], dy(a + t));
                assert_eq!(dm.u_l.entries[(t, i)], 1.0);
                assert_eq!(dm.ybar_l.entries[(t, i)], y[(0, a + t)]);
            }
            // W_L block-row t holds w(a + t).
            let sched = build_scheduling(&traj, 2).unwrap();
            for t in 0..3 {
                let w = sched.window((a + t) as i64, 1).unwrap();
                for r in 0..dims.n_w() {
                    assert_eq!(dm.w_l.entries[(t * dims.n_w() + r, i)], w[(r, 0)]);
                }
            }
        }
        // Y_L column i starts ell steps after Y_ell column i ends + 1:
        // first future difference is dy(a), last past difference dy(a-1).
        assert!(dm.y_l.is_consistent() && dm.y_ell.is_consistent());
    }

    #[test]
    fn select_columns_preserves_contiguous_structure() {
        let dims = Dims::uniform(1, 1, 2, 3, 20).unwrap();
        let traj = random_trajectory(1, 1, 21, 33);
        let dm = build_data_matrices(&traj, &dims).unwrap();
        let sub = dm.select_columns(&[4, 5, 6, 7]).unwrap();
        assert_eq!(sub.n_cols(), 4);
        assert_eq!(sub.dims.n_cols(), 4);
        assert!(sub.w_l.is_consistent());
        let perm = dm.select_columns(&[7, 2, 0]).unwrap();
        assert!(!perm.w_l.is_consistent());
    }

    #[test]
    fn reconstruction_modes_differ_exactly_as_documented() {
        // True differences of y(t) = t^2 with an error eps injected at step 1.
        let l = 4;
        let y_true = DMatrix::from_fn(1, l + 1, |_, c| (c * c) as f64);
        let mut dy = DMatrix::zeros(1, l);
        for t in 0..l {
            dy[(0, t)] = y_true[(0, t + 1)] - y_true[(0, t)];
        }
        let eps = 0.25;
        dy[(0, 0)] += eps;
        let y_ref = y_true.columns(0, l).into_owned();
        let a = reconstruct_primal(&dy, &y_ref, ReconstructionMode::PredictedPrevious).unwrap();
        let b = reconstruct_primal(&dy, &y_ref, ReconstructionMode::TruePrevious).unwrap();
        for t in 0..l {
            let truth = y_true[(0, t + 1)];
            assert_relative_eq!(a[(0, t)] - truth, eps, epsilon = 1e-12);
            let expected_b = if t == 0 { eps } else { 0.0 };
            assert_relative_eq!(b[(0, t)] - truth, expected_b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_checks_reference_length() {
        let dy = DMatrix::zeros(1, 3);
        let y_ref = DMatrix::zeros(1, 2);
        assert!(reconstruct_primal(&dy, &y_ref, ReconstructionMode::TruePrevious).is_err());
        assert!(reconstruct_primal(&dy, &y_ref, ReconstructionMode::PredictedPrevious).is_ok());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let traj = random_trajectory(2, 1, 17, 77);
        let dir = std::env::temp_dir().join("velokern_signals_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        write_trajectory_csv(&traj, &path).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.start, traj.start);
        for t in 0..traj.len() {
            for r in 0..2 {
                assert_eq!(back.u[(r, t)].to_bits(), traj.u[(r, t)].to_bits());
            }
            assert_eq!(back.y[(0, t)].to_bits(), traj.y[(0, t)].to_bits());
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn csv_reader_rejects_malformed_files() {
        let dir = std::env::temp_dir().join("velokern_signals_test");
        std::fs::create_dir_all(&dir).unwrap();
        let cases: &[(&str, &str)] = &[
            ("bad_header.csv", "t,u_1,y_1\n0,1,2\n"),
            ("ragged.csv", "k,u_1,y_1\n0,1,2\n1,3\n"),
            ("non_numeric.csv", "k,u_1,y_1\n0,1,x\n"),
            ("gap.csv", "k,u_1,y_1\n0,1,2\n2,3,4\n"),
            ("no_rows.csv", "k,u_1,y_1\n"),
            ("no_outputs.csv", "k,u_1,u_2\n0,1,2\n"),
        ];
        for (name, text) in cases {
            let path = dir.join(name);
            std::fs::write(&path, text).unwrap();
            let got = read_trajectory_csv(&path);
            assert!(
                matches!(got, Err(Error::Data { .. })),
                "{name} should fail, got {got:?}"
            );
            std::fs::remove_file(&path).unwrap();
        }
    }

    #[test]
    fn trajectory_slicing_and_indexing() {
        let traj = random_trajectory(1, 1, 10, 4);
        let s = traj.slice(3, 7).unwrap();
        assert_eq!(s.start, 3);
        assert_eq!(s.len(), 5);
        assert_eq!(s.y_at(3).unwrap(), traj.y_at(3).unwrap());
        assert!(traj.y_at(10).is_err());
        assert!(traj.slice(8, 4).is_err());
    }
}
