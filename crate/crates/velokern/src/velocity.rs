//! Exact velocity-form coefficients of nonlinear input-output systems.
//!
//! A system `y(k) = f(y(k-1..k-n_a), u(k..k-n_b))` has an *exact* velocity
//! form: the output difference obeys
//!
//! ```text
//! dy(k) = sum_i A_i(k) dy(k-i) + sum_j B_j(k) du(k-j)
//! ```
//!
//! where `[A_1 .. A_na B_0 .. B_nb]` is the Jacobian of `f` integrated along
//! the straight segment joining the regressor at `k-1` to the regressor at
//! `k`. The integral is evaluated by composite Simpson quadrature; for
//! polynomial nonlinearities a closed form is available.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default number of Simpson nodes (odd; 128 panels).
pub const DEFAULT_QUAD_NODES: usize = 129;

/// Composite Simpson rule on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    /// Number of nodes, odd and at least 3.
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_QUAD_NODES,
        }
    }
}

impl QuadratureSpec {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 3 || nodes % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "Simpson quadrature needs an odd node count >= 3, got {nodes}"
            )));
        }
        Ok(Self { nodes })
    }

    /// Integrate a matrix-valued function over `[0, 1]`.
    pub fn integrate<F: FnMut(f64) -> DMatrix<f64>>(&self, mut f: F) -> DMatrix<f64> {
        let n = self.nodes;
        let h = 1.0 / (n - 1) as f64;
        let mut acc = f(0.0);
        acc += f(1.0);
        for i in 1..n - 1 {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(i as f64 * h) * w;
        }
        acc * (h / 3.0)
    }
}

/// A nonlinear input-output system in regressor form. The regressor stacks
/// `xi = col(y(k-1), ..., y(k-n_a), u(k), u(k-1), ..., u(k-n_b))`.
pub struct NlSystem {
    pub n_u: usize,
    pub n_y: usize,
    pub n_a: usize,
    pub n_b: usize,
    f: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    jac: Option<Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>>,
}

impl NlSystem {
    pub fn new(
        n_u: usize,
        n_y: usize,
        n_a: usize,
        n_b: usize,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n_u,
            n_y,
            n_a,
            n_b,
            f: Box::new(f),
            jac: None,
        }
    }

    /// Attach an analytic Jacobian (`n_y x regressor_dim`); without one a
    /// central finite difference is used.
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    /// Linear system `y(k) = sum_i a_i y(k-i) + sum_j b_j u(k-j)` with
    /// `b_j` indexed from the feedthrough term `j = 0`.
    pub fn linear(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidInput(
                "linear system needs at least one a and one b block".into(),
            ));
        }
        let n_y = a[0].nrows();
        let n_u = b[0].ncols();
        if a.iter().any(|m| m.nrows() != n_y || m.ncols() != n_y)
            || b.iter().any(|m| m.nrows() != n_y || m.ncols() != n_u)
        {
            return Err(Error::InvalidInput(
                "inconsistent block dimensions in linear system".into(),
            ));
        }
        let n_a = a.len();
        let n_b = b.len() - 1;
        let mut jac_fixed = DMatrix::zeros(n_y, n_a * n_y + (n_b + 1) * n_u);
        for (i, m) in a.iter().enumerate() {
            jac_fixed.view_mut((0, i * n_y), (n_y, n_y)).copy_from(m);
        }
        for (j, m) in b.iter().enumerate() {
            jac_fixed
                .view_mut((0, n_a * n_y + j * n_u), (n_y, n_u))
                .copy_from(m);
        }
        let j2 = jac_fixed.clone();
        Ok(
            Self::new(n_u, n_y, n_a, n_b, move |xi: &DVector<f64>| &jac_fixed * xi)
                .with_jacobian(move |_| j2.clone()),
        )
    }

    /// The benchmark system
    /// `y(k) = -u(k-2) exp(-y(k-1)^2) + 0.5 y(k-2) u(k-1)^2`
    /// with its analytic Jacobian.
    pub fn example() -> Self {
        Self::new(1, 1, 2, 2, |xi: &DVector<f64>| {
            let (y1, y2, _u0, u1, u2) = (xi[0], xi[1], xi[2], xi[3], xi[4]);
            DVector::from_element(1, -u2 * (-y1 * y1).exp() + 0.5 * y2 * u1 * u1)
        })
        .with_jacobian(|xi: &DVector<f64>| {
            let (y1, y2, _u0, u1, u2) = (xi[0], xi[1], xi[2], xi[3], xi[4]);
            let e = (-y1 * y1).exp();
            DMatrix::from_row_slice(1, 5, &[2.0 * y1 * u2 * e, 0.5 * u1 * u1, 0.0, y2 * u1, -e])
        })
    }

    /// Stacked regressor dimension `n_a n_y + (n_b + 1) n_u`.
    pub fn regressor_dim(&self) -> usize {
        self.n_a * self.n_y + (self.n_b + 1) * self.n_u
    }

    pub fn eval(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        if xi.len() != self.regressor_dim() {
            return Err(Error::InvalidInput(format!(
                "regressor has dimension {}, system expects {}",
                xi.len(),
                self.regressor_dim()
            )));
        }
        Ok((self.f)(xi))
    }

    /// Jacobian of `f` at `xi`: analytic if attached, otherwise central
    /// finite differences with per-coordinate step
    /// `h_i = cbrt(eps) * max(1, |xi_i|)`.
    pub fn jacobian_at(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        if xi.len() != self.regressor_dim() {
            return Err(Error::InvalidInput(format!(
                "regressor has dimension {}, system expects {}",
                xi.len(),
                self.regressor_dim()
            )));
        }
        if let Some(jac) = &self.jac {
            return Ok(jac(xi));
        }
        let base = f64::EPSILON.cbrt();
        let mut j = DMatrix::zeros(self.n_y, xi.len());
        let mut hi = xi.clone();
        let mut lo = xi.clone();
        for c in 0..xi.len() {
            let h = base * xi[c].abs().max(1.0);
            hi[c] = xi[c] + h;
            lo[c] = xi[c] - h;
            let d = ((self.f)(&hi) - (self.f)(&lo)) / (2.0 * h);
            j.set_column(c, &d);
            hi[c] = xi[c];
            lo[c] = xi[c];
        }
        Ok(j)
    }
}

/// Lagged samples supplying the pre-window history of a simulation; column
/// `j` holds the sample `j + 1` steps before the first simulated time.
#[derive(Debug, Clone)]
pub struct History {
    pub y_past: DMatrix<f64>,
    pub u_past: DMatrix<f64>,
}

impl History {
    pub fn zeros(n_u: usize, n_y: usize, y_lags: usize, u_lags: usize) -> Self {
        Self {
            y_past: DMatrix::zeros(n_y, y_lags),
            u_past: DMatrix::zeros(n_u, u_lags),
        }
    }
}

/// One set of velocity-form coefficient matrices:
/// `a[i-1]` weights `dy(k-i)` (`i = 1..=n_a`) and `b[j]` weights `du(k-j)`
/// (`j = 0..=n_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCoefficients {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

impl VelocityCoefficients {
    /// Apply to lagged differences: `dy_lags` column `i-1` holds `dy(k-i)`,
    /// `du_window` column `j` holds `du(k-j)` (current input first).
    pub fn apply(&self, dy_lags: &DMatrix<f64>, du_window: &DMatrix<f64>) -> Result<DVector<f64>> {
        if dy_lags.ncols() != self.a.len() || du_window.ncols() != self.b.len() {
            return Err(Error::InvalidInput(format!(
                "coefficient application expects {} output and {} input lags, got {} and {}",
                self.a.len(),
                self.b.len(),
                dy_lags.ncols(),
                du_window.ncols()
            )));
        }
        let n_y = self.a[0].nrows();
        let mut out = DVector::zeros(n_y);
        for (i, m) in self.a.iter().enumerate() {
            out += m * dy_lags.column(i);
        }
        for (j, m) in self.b.iter().enumerate() {
            out += m * du_window.column(j);
        }
        Ok(out)
    }
}

/// Velocity coefficients between two regressor snapshots: the Jacobian of
/// `f` integrated along `xi_prev + lambda (xi_cur - xi_prev)`.
pub fn ftc_coefficients(
    sys: &NlSystem,
    xi_prev: &DVector<f64>,
    xi_cur: &DVector<f64>,
    quad: &QuadratureSpec,
) -> Result<VelocityCoefficients> {
    if xi_prev.len() != sys.regressor_dim() || xi_cur.len() != sys.regressor_dim() {
        return Err(Error::InvalidInput(
            "regressor endpoints must match the system's regressor dimension".into(),
        ));
    }
    let step = xi_cur - xi_prev;
    let mut err: Option<Error> = None;
    let jbar = quad.integrate(|lambda| {
        let xi = xi_prev + &step * lambda;
        match sys.jacobian_at(&xi) {
            Ok(j) => j,
            Err(e) => {
                err.get_or_insert(e);
                DMatrix::zeros(sys.n_y, sys.regressor_dim())
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(slice_coefficients(&jbar, sys.n_u, sys.n_y, sys.n_a, sys.n_b))
}

/// Split an integrated Jacobian into the lag-indexed coefficient blocks.
fn slice_coefficients(
    jbar: &DMatrix<f64>,
    n_u: usize,
    n_y: usize,
    n_a: usize,
    n_b: usize,
) -> VelocityCoefficients {
    let a = (0..n_a)
        .map(|i| jbar.view((0, i * n_y), (n_y, n_y)).into_owned())
        .collect();
    let b = (0..=n_b)
        .map(|j| {
            jbar.view((0, n_a * n_y + j * n_u), (n_y, n_u))
                .into_owned()
        })
        .collect();
    VelocityCoefficients { a, b }
}

/// Primal coefficient factorization of a map with `f(0) = 0`: integrating
/// the Jacobian along `lambda -> lambda xi` yields blocks with
/// `sum_i a_i y(k-i) + sum_j b_j u(k-j) = f(xi)` exactly.
pub fn primal_factorization(
    sys: &NlSystem,
    xi: &DVector<f64>,
    quad: &QuadratureSpec,
) -> Result<VelocityCoefficients> {
    let zero = DVector::zeros(sys.regressor_dim());
    let f0 = sys.eval(&zero)?;
    if f0.norm() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "primal factorization requires f(0) = 0, got |f(0)| = {:.3e}",
            f0.norm()
        )));
    }
    ftc_coefficients(sys, &zero, xi, quad)
}

/// Closed-form velocity coefficient of a scalar polynomial
/// `f(u) = sum_i c_i u^i` (`c[i-1]` multiplies `u^i`): the divided
/// difference `(f(u) - f(u_prev)) / (u - u_prev)`, continued across the
/// diagonal `u = u_prev` by the derivative-style limit
/// `sum_i i c_i m^(i-1)` at the midpoint `m = (u + u_prev)/2`.
pub fn poly_coefficient(c: &[f64], u: f64, u_prev: f64) -> f64 {
    let tol = 1e-9 * u.abs().max(u_prev.abs()).max(1.0);
    if (u - u_prev).abs() <= tol {
        let m = 0.5 * (u + u_prev);
        let mut acc = 0.0;
        let mut pow = 1.0; // m^(i-1)
        for (idx, ci) in c.iter().enumerate() {
            acc += (idx as f64 + 1.0) * ci * pow;
            pow *= m;
        }
        acc
    } else {
        let eval = |x: f64| {
            let mut acc = 0.0;
            let mut pow = x;
            for ci in c {
                acc += ci * pow;
                pow *= x;
            }
            acc
        };
        (eval(u) - eval(u_prev)) / (u - u_prev)
    }
}

/// Simulate the primal system over inputs `u` (column `k` = `u(k)`),
/// starting from the given lag history. Returns outputs column-aligned with
/// `u`. Non-finite outputs abort with the failing step index.
pub fn simulate_primal(sys: &NlSystem, u: &DMatrix<f64>, init: &History) -> Result<DMatrix<f64>> {
    if u.nrows() != sys.n_u {
        return Err(Error::InvalidInput(format!(
            "input has {} channels, system expects {}",
            u.nrows(),
            sys.n_u
        )));
    }
    if init.y_past.ncols() < sys.n_a || init.u_past.ncols() < sys.n_b {
        return Err(Error::InsufficientData(format!(
            "history must provide {} output and {} input lags",
            sys.n_a, sys.n_b
        )));
    }
    let t_len = u.ncols();
    let mut y = DMatrix::zeros(sys.n_y, t_len);
    let mut xi = DVector::zeros(sys.regressor_dim());
    for k in 0..t_len {
        let mut row = 0;
        for i in 1..=sys.n_a {
            let col = if k >= i {
                y.column(k - i).into_owned()
            } else {
                init.y_past.column(i - k - 1).into_owned()
            };
            xi.rows_mut(row, sys.n_y).copy_from(&col);
            row += sys.n_y;
        }
        for j in 0..=sys.n_b {
            let col = if k >= j {
                u.column(k - j).into_owned()
            } else {
                init.u_past.column(j - k - 1).into_owned()
            };
            xi.rows_mut(row, sys.n_u).copy_from(&col);
            row += sys.n_u;
        }
        let yk = sys.eval(&xi)?;
        if yk.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged { index: k });
        }
        y.set_column(k, &yk);
    }
    Ok(y)
}

/// Run the velocity-form recursion with externally supplied coefficients.
/// `coeffs(t)` returns the matrices for step `t` (0-based); `du` column `t`
/// is the input difference at step `t`; the histories provide `dy`/`du`
/// lags before step 0 (column `j` = lag `j + 1`).
pub fn simulate_velocity(
    n_a: usize,
    n_b: usize,
    mut coeffs: impl FnMut(usize) -> Result<VelocityCoefficients>,
    du: &DMatrix<f64>,
    init_dy: &DMatrix<f64>,
    init_du: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if init_dy.ncols() < n_a || init_du.ncols() < n_b {
        return Err(Error::InsufficientData(format!(
            "velocity recursion needs {n_a} output and {n_b} input difference lags"
        )));
    }
    let n_u = du.nrows();
    let n_y = init_dy.nrows();
    let t_len = du.ncols();
    let mut dy = DMatrix::zeros(n_y, t_len);
    for t in 0..t_len {
        let c = coeffs(t)?;
        if c.a.len() != n_a || c.b.len() != n_b + 1 {
            return Err(Error::InvalidInput(format!(
                "coefficient provider returned ({}, {}) blocks, expected ({n_a}, {})",
                c.a.len(),
                c.b.len(),
                n_b + 1
            )));
        }
        let mut dy_lags = DMatrix::zeros(n_y, n_a);
        for i in 1..=n_a {
            let col = if t >= i {
                dy.column(t - i).into_owned()
            } else {
                init_dy.column(i - t - 1).into_owned()
            };
            dy_lags.set_column(i - 1, &col);
        }
        let mut du_window = DMatrix::zeros(n_u, n_b + 1);
        for j in 0..=n_b {
            let col = if t >= j {
                du.column(t - j).into_owned()
            } else {
                init_du.column(j - t - 1).into_owned()
            };
            du_window.set_column(j, &col);
        }
        let step = c.apply(&dy_lags, &du_window)?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged { index: t });
        }
        dy.set_column(t, &step);
    }
    Ok(dy)
}

/// A system in shifted form `y(k) = sum_{i=1}^{n} f_i(y(k-i), u(k-i))`:
/// each component depends on a single lagged output/input pair, which makes
/// the velocity coefficients functions of one lagged scheduling vector each.
pub struct ShiftedSystem {
    pub n_u: usize,
    pub n_y: usize,
    components: Vec<ShiftedComponent>,
}

type ShiftedFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type ShiftedJac = dyn Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;

pub struct ShiftedComponent {
    f: Box<ShiftedFn>,
    jac: Option<Box<ShiftedJac>>,
}

impl ShiftedComponent {
    pub fn new(
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            jac: None,
        }
    }

    pub fn with_jacobians(
        mut self,
        jac: impl Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }
}

impl ShiftedSystem {
    pub fn new(n_u: usize, n_y: usize, components: Vec<ShiftedComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput(
                "shifted system needs at least one component".into(),
            ));
        }
        Ok(Self {
            n_u,
            n_y,
            components,
        })
    }

    /// Number of lags `n` (one component per lag).
    pub fn n_lag(&self) -> usize {
        self.components.len()
    }

    pub fn eval_component(&self, i: usize, y: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let comp = self.component(i)?;
        Ok((comp.f)(y, u))
    }

    fn component(&self, i: usize) -> Result<&ShiftedComponent> {
        if i == 0 || i > self.components.len() {
            return Err(Error::InvalidInput(format!(
                "component index {i} outside 1..={}",
                self.components.len()
            )));
        }
        Ok(&self.components[i - 1])
    }

    /// Component Jacobians `(df_i/dy, df_i/du)` at a point, analytic or by
    /// central finite differences.
    pub fn component_jacobians(
        &self,
        i: usize,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let comp = self.component(i)?;
        if let Some(jac) = &comp.jac {
            return Ok(jac(y, u));
        }
        let base = f64::EPSILON.cbrt();
        let mut jy = DMatrix::zeros(self.n_y, self.n_y);
        let mut yv = y.clone();
        for c in 0..self.n_y {
            let h = base * y[c].abs().max(1.0);
            yv[c] = y[c] + h;
            let hiv = (comp.f)(&yv, u);
            yv[c] = y[c] - h;
            let lov = (comp.f)(&yv, u);
            yv[c] = y[c];
            jy.set_column(c, &((hiv - lov) / (2.0 * h)));
        }
        let mut ju = DMatrix::zeros(self.n_y, self.n_u);
        let mut uv = u.clone();
        for c in 0..self.n_u {
            let h = base * u[c].abs().max(1.0);
            uv[c] = u[c] + h;
            let hiv = (comp.f)(y, &uv);
            uv[c] = u[c] - h;
            let lov = (comp.f)(y, &uv);
            uv[c] = u[c];
            ju.set_column(c, &((hiv - lov) / (2.0 * h)));
        }
        Ok((jy, ju))
    }

    /// Simulate `y(k) = sum_i f_i(y(k-i), u(k-i))` over inputs `u`.
    pub fn simulate(&self, u: &DMatrix<f64>, init: &History) -> Result<DMatrix<f64>> {
        let n = self.n_lag();
        if init.y_past.ncols() < n || init.u_past.ncols() < n {
            return Err(Error::InsufficientData(format!(
                "shifted simulation needs {n} output and input lags"
            )));
        }
        let t_len = u.ncols();
        let mut y = DMatrix::zeros(self.n_y, t_len);
        for k in 0..t_len {
            let mut acc = DVector::zeros(self.n_y);
            for i in 1..=n {
                let yl = if k >= i {
                    y.column(k - i).into_owned()
                } else {
                    init.y_past.column(i - k - 1).into_owned()
                };
                let ul = if k >= i {
                    u.column(k - i).into_owned()
                } else {
                    init.u_past.column(i - k - 1).into_owned()
                };
                acc += self.eval_component(i, &yl, &ul)?;
            }
            if acc.iter().any(|v| !v.is_finite()) {
                return Err(Error::SimulationDiverged { index: k });
            }
            y.set_column(k, &acc);
        }
        Ok(y)
    }
}

/// Velocity coefficients of one shifted component between consecutive
/// endpoint pairs: the Jacobians of `f_i` integrated along the segment
/// `((1-lambda) y_prev + lambda y_cur, (1-lambda) u_prev + lambda u_cur)`.
/// Then `f_i(y_cur, u_cur) - f_i(y_prev, u_prev) = a (y_cur - y_prev) + b
/// (u_cur - u_prev)` exactly (up to quadrature error).
pub fn shifted_ftc_coefficients(
    sys: &ShiftedSystem,
    i: usize,
    y_prev: &DVector<f64>,
    y_cur: &DVector<f64>,
    u_prev: &DVector<f64>,
    u_cur: &DVector<f64>,
    quad: &QuadratureSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dy = y_cur - y_prev;
    let du = u_cur - u_prev;
    let mut err: Option<Error> = None;
    let ncols = self_jac_cols(sys); // n_y + n_u stacked side by side
    let stacked = quad.integrate(|lambda| {
        let yl = y_prev + &dy * lambda;
        let ul = u_prev + &du * lambda;
        match sys.component_jacobians(i, &yl, &ul) {
            Ok((jy, ju)) => {
                let mut m = DMatrix::zeros(sys.n_y, ncols);
                m.view_mut((0, 0), (sys.n_y, sys.n_y)).copy_from(&jy);
                m.view_mut((0, sys.n_y), (sys.n_y, sys.n_u)).copy_from(&ju);
                m
            }
            Err(e) => {
                err.get_or_insert(e);
                DMatrix::zeros(sys.n_y, ncols)
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok((
        stacked.view((0, 0), (sys.n_y, sys.n_y)).into_owned(),
        stacked.view((0, sys.n_y), (sys.n_y, sys.n_u)).into_owned(),
    ))
}

fn self_jac_cols(sys: &ShiftedSystem) -> usize {
    sys.n_y + sys.n_u
}
