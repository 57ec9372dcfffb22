//! Linear parameter-varying embedding of the velocity form.
//!
//! With the scheduling signal `p(k) = psi(w(k))` and shifted-affine
//! coefficient dependence, the velocity dynamics become linear and
//! time-invariant in the lifted signals `(du, dy, du^p, dy^p)` where
//! `x^p(k) = p(k) (x) x(k)`. Window membership then reduces to a linear
//! feasibility problem over Hankel matrices of one recorded trajectory:
//! a query window `(du_q, dy_q)` under query scheduling `p_q` belongs to
//! the behavior iff some combination `g` of dictionary columns matches the
//! query signals while the scheduling-corrected lifted rows vanish,
//!
//! ```text
//! [ H(du); H(dy); H(du^p) - P_q H(du); H(dy^p) - P_q H(dy) ] g
//!     = [ du_q; dy_q; 0; 0 ]
//! ```
//!
//! with `P_q` the block-diagonal action of `p_q` along the window. With an
//! empty basis the corrected rows disappear and the test collapses to the
//! classical linear time-invariant window membership.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::signals::{build_scheduling, hankel, Trajectory};
use crate::structure::BasisSet;

/// Aligned lifted signals extracted from one trajectory: differences and
/// scheduling values over the common valid time range.
#[derive(Debug, Clone)]
pub struct LpvData {
    pub n_u: usize,
    pub n_y: usize,
    pub n_psi: usize,
    /// Input differences, one column per time.
    pub du: DMatrix<f64>,
    /// Output differences, one column per time.
    pub dy: DMatrix<f64>,
    /// Scheduling signal `p(k) = psi(w(k))`, one column per time.
    pub p: DMatrix<f64>,
    /// Absolute time of the first column.
    pub start: i64,
}

impl LpvData {
    pub fn len(&self) -> usize {
        self.du.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.du.ncols() == 0
    }
}

/// Extract the lifted-signal dictionary from a trajectory: differences at
/// the times where a depth-`ell` scheduling vector exists.
pub fn build_lpv_data(traj: &Trajectory, basis: &BasisSet, ell: usize) -> Result<LpvData> {
    let delta = traj.delta()?;
    let sched = build_scheduling(traj, ell)?;
    let n_psi = basis.len();
    let offset = (sched.start - delta.start) as usize; // differences start earlier
    let count = sched.len();
    let du = delta.du.columns(offset, count).into_owned();
    let dy = delta.dy.columns(offset, count).into_owned();
    let mut p = DMatrix::zeros(n_psi, count);
    for j in 0..count {
        let v = basis.eval(&sched.w.column(j).into_owned())?;
        p.set_column(j, &v);
    }
    Ok(LpvData {
        n_u: traj.u.nrows(),
        n_y: traj.y.nrows(),
        n_psi,
        du,
        dy,
        p,
        start: sched.start,
    })
}

/// Per-column Kronecker lift `x^p(:, k) = p(:, k) (x) x(:, k)`.
pub fn scheduled_products(p: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.ncols() != x.ncols() {
        return Err(Error::InvalidInput(format!(
            "scheduling has {} columns, signal has {}",
            p.ncols(),
            x.ncols()
        )));
    }
    let (m, n) = (p.nrows(), x.nrows());
    let mut out = DMatrix::zeros(m * n, x.ncols());
    for k in 0..x.ncols() {
        for s in 0..m {
            for r in 0..n {
                out[(s * n + r, k)] = p[(s, k)] * x[(r, k)];
            }
        }
    }
    Ok(out)
}

/// The assembled linear membership system.
#[derive(Debug, Clone)]
pub struct MembershipProblem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Outcome of a membership check: the least-squares combination and how
/// far the query lies from the span of the dictionary.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub g: DVector<f64>,
    /// Euclidean norm of `M g - rhs`.
    pub residual: f64,
    /// Euclidean norm of the right-hand side, for relative thresholds.
    pub rhs_norm: f64,
}

impl MembershipReport {
    /// Residual relative to `1 + ||rhs||`.
    pub fn relative_residual(&self) -> f64 {
        self.residual / (1.0 + self.rhs_norm)
    }
}

/// Assemble the membership system for a query window of `horizon` steps.
/// `du_q` and `dy_q` hold the query differences (one column per step),
/// `p_q` the query scheduling values.
pub fn membership_problem(
    data: &LpvData,
    du_q: &DMatrix<f64>,
    dy_q: &DMatrix<f64>,
    p_q: &DMatrix<f64>,
) -> Result<MembershipProblem> {
    let horizon = du_q.ncols();
    if horizon == 0 {
        return Err(Error::InvalidInput("membership window is empty".into()));
    }
    if dy_q.ncols() != horizon || p_q.ncols() != horizon {
        return Err(Error::InvalidInput(
            "query signals must cover the same number of steps".into(),
        ));
    }
    if du_q.nrows() != data.n_u || dy_q.nrows() != data.n_y || p_q.nrows() != data.n_psi {
        return Err(Error::InvalidInput(format!(
            "query rows ({}, {}, {}) do not match dictionary signals ({}, {}, {})",
            du_q.nrows(),
            dy_q.nrows(),
            p_q.nrows(),
            data.n_u,
            data.n_y,
            data.n_psi
        )));
    }
    if data.len() < horizon {
        return Err(Error::InsufficientData(format!(
            "dictionary holds {} samples, window needs {horizon}",
            data.len()
        )));
    }
    let h_du = hankel(&data.du, horizon)?;
    let h_dy = hankel(&data.dy, horizon)?;
    let dup = scheduled_products(&data.p, &data.du)?;
    let dyp = scheduled_products(&data.p, &data.dy)?;
    let h_dup = hankel(&dup, horizon)?;
    let h_dyp = hankel(&dyp, horizon)?;
    let n_c = h_du.width();
    let (n_u, n_y, n_psi) = (data.n_u, data.n_y, data.n_psi);
    let base_rows = horizon * (n_u + n_y);
    let lift_rows = horizon * n_psi * (n_u + n_y);
    let mut m = DMatrix::zeros(base_rows + lift_rows, n_c);
    m.view_mut((0, 0), (horizon * n_u, n_c))
        .copy_from(&h_du.entries);
    m.view_mut((horizon * n_u, 0), (horizon * n_y, n_c))
        .copy_from(&h_dy.entries);
    // Scheduling-corrected lifted rows: block `t`, column `j` holds
    // `(p(j+t) - p_q(t)) (x) x(j+t)`.
    let mut row = base_rows;
    for (h_lift, h_base, width) in [(&h_dup, &h_du, n_u), (&h_dyp, &h_dy, n_y)] {
        for t in 0..horizon {
            for j in 0..n_c {
                for s in 0..n_psi {
                    for r in 0..width {
                        let lifted = h_lift.entries[(t * n_psi * width + s * width + r, j)];
                        let base = h_base.entries[(t * width + r, j)];
                        m[(row + s * width + r, j)] = lifted - p_q[(s, t)] * base;
                    }
                }
            }
            row += n_psi * width;
        }
    }
    let mut rhs = DVector::zeros(base_rows + lift_rows);
    for t in 0..horizon {
        rhs.rows_mut(t * n_u, n_u).copy_from(&du_q.column(t));
        rhs.rows_mut(horizon * n_u + t * n_y, n_y)
            .copy_from(&dy_q.column(t));
    }
    Ok(MembershipProblem { matrix: m, rhs })
}

/// Solve the membership system in the least-squares sense and report how
/// far the query is from the dictionary span.
pub fn check_membership(problem: &MembershipProblem) -> Result<MembershipReport> {
    let svd = problem.matrix.clone().svd(true, true);
    let g = svd
        .solve(&problem.rhs, 1e-10)
        .map_err(|e| Error::Numerical(format!("membership solve failed: {e}")))?;
    let residual = (&problem.matrix * &g - &problem.rhs).norm();
    Ok(MembershipReport {
        residual,
        rhs_norm: problem.rhs.norm(),
        g,
    })
}

/// Assemble and solve in one call.
pub fn lpv_membership(
    data: &LpvData,
    du_q: &DMatrix<f64>,
    dy_q: &DMatrix<f64>,
    p_q: &DMatrix<f64>,
) -> Result<MembershipReport> {
    check_membership(&membership_problem(data, du_q, dy_q, p_q)?)
}

/// Simulate a single-input single-output first-order shifted-affine
/// recursion `dy(k) = a(w(k-1)) dy(k-1) + b(w(k-1)) du(k-1)` with
/// `a(w) = a0 + a1' psi(w)` and `b(w) = b0 + b1' psi(w)`, maintaining the
/// output levels so the scheduling vectors stay self-consistent. The first
/// `ell + 1` steps run a fixed stable warm-up until scheduling vectors
/// exist. Windows of such a trajectory belong to the lifted behavior by
/// construction, which makes this the reference generator for membership
/// checks.
pub fn simulate_shifted_affine(
    rng: &mut SeededRng,
    basis: &BasisSet,
    coeffs: (f64, Vec<f64>, f64, Vec<f64>),
    ell: usize,
    n: usize,
) -> Result<Trajectory> {
    let (a0, a1, b0, b1) = coeffs;
    if a1.len() != basis.len() || b1.len() != basis.len() {
        return Err(Error::InvalidInput(format!(
            "scheduled coefficient vectors have lengths {} and {}, basis has {}",
            a1.len(),
            b1.len(),
            basis.len()
        )));
    }
    let u = DMatrix::from_fn(1, n + 1, |_, _| rng.uniform_in(-1.0, 1.0));
    let mut y: DMatrix<f64> = DMatrix::zeros(1, n + 1);
    // Warm up with a simple stable response until scheduling vectors
    // exist, then switch to the scheduled recursion.
    for k in 1..=(ell + 1).min(n) {
        y[(0, k)] = 0.3 * y[(0, k - 1)] + 0.5 * u[(0, k - 1)];
    }
    for k in ell + 2..=n {
        let partial = Trajectory::new(
            u.columns(0, k).into_owned(),
            y.columns(0, k).into_owned(),
            0,
        )?;
        let sched = build_scheduling(&partial, ell)?;
        // Scheduling vector at time k-1 is the last available column.
        let w_prev = sched.w.column(sched.len() - 1).into_owned();
        debug_assert_eq!(sched.start + sched.len() as i64 - 1, k as i64 - 1);
        let psi = basis.eval(&w_prev)?;
        let a = a0 + a1.iter().zip(psi.iter()).map(|(c, p)| c * p).sum::<f64>();
        let b = b0 + b1.iter().zip(psi.iter()).map(|(c, p)| c * p).sum::<f64>();
        let dy_prev = y[(0, k - 1)] - y[(0, k - 2)];
        let du_prev = u[(0, k - 1)] - u[(0, k - 2)];
        let dy = a * dy_prev + b * du_prev;
        if !dy.is_finite() {
            return Err(Error::SimulationDiverged { index: k });
        }
        y[(0, k)] = y[(0, k - 1)] + dy;
    }
    Trajectory::new(u, y, 0)
}
