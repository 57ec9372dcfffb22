//! Explicit basis-function structure of the multi-step velocity predictor.
//!
//! When the velocity coefficients are expanded in a finite basis,
//! `a_i(w) = a_{i,0} + sum_s a_{i,s} psi_s(w)` (and likewise `b_j`), the
//! `L`-step prediction unrolls into a bilinear chain
//!
//! ```text
//! dy[1..L] = Theta * Psi(w[1..L]) * [dphi_0; du[1..L]]
//! ```
//!
//! where `Psi` is a product of block-diagonal factors, one per step, each
//! built from Kronecker products of `[1; psi(w_t)]` with identities, and
//! `Theta` is a lower-block-triangular parameter matrix assembled by a lag
//! recursion. Two lag structures have explicit constructions:
//!
//! * `(n_a, n_b) = (1, 1)` — the general first-order chain, where every
//!   coefficient at step `t` is scheduled by `w_t`;
//! * `(n_a, n_b) = (2, 2)` — the shifted second-order chain, where lag-`i`
//!   coefficients are scheduled by `w_{t-i}` and the initial window is
//!   pre-expanded with basis values at the two pre-window times.
//!
//! The dense factors grow as `(n_psi + 1)^L` and exist for verification at
//! test dimensions only; the kernel path reproduces their Gram products
//! implicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Maximum number of elements a dense expansion may allocate.
pub const DENSE_ELEMENT_CAP: usize = 10_000_000;

type BasisFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// A finite set of scalar basis functions on scheduling vectors. The
/// constant function `psi_0 = 1` is implicit everywhere and never stored.
pub struct BasisSet {
    funcs: Vec<Box<BasisFn>>,
    /// Expected scheduling-vector dimension; 0 means "any" (only valid for
    /// an empty set).
    pub input_dim: usize,
}

impl BasisSet {
    pub fn new(input_dim: usize, funcs: Vec<Box<BasisFn>>) -> Result<Self> {
        if input_dim == 0 && !funcs.is_empty() {
            return Err(Error::InvalidInput(
                "a non-empty basis needs a positive input dimension".into(),
            ));
        }
        Ok(Self { funcs, input_dim })
    }

    /// The empty basis: `psi(w)` has length zero for any `w`. Together with
    /// the implicit constant this models coefficient functions that are
    /// constant in `w` (and a kernel that is identically zero).
    pub fn empty() -> Self {
        Self {
            funcs: Vec::new(),
            input_dim: 0,
        }
    }

    /// Number of non-constant basis functions `n_psi`.
    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    /// Evaluate `psi(w)` (length `n_psi`). Non-finite values are an error.
    pub fn eval(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.is_empty() && w.len() != self.input_dim {
            return Err(Error::InvalidInput(format!(
                "basis expects scheduling dimension {}, got {}",
                self.input_dim,
                w.len()
            )));
        }
        let mut out = DVector::zeros(self.len());
        for (s, f) in self.funcs.iter().enumerate() {
            let v = f(w);
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "basis function {} produced a non-finite value",
                    s + 1
                )));
            }
            out[s] = v;
        }
        Ok(out)
    }

    /// Evaluate `[1; psi(w)]` (length `n_psi + 1`).
    pub fn eval_extended(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let q = self.eval(w)?;
        let mut out = DVector::zeros(q.len() + 1);
        out[0] = 1.0;
        out.rows_mut(1, q.len()).copy_from(&q);
        Ok(out)
    }

    /// A reproducible family of bounded smooth basis functions
    /// `psi_s(w) = sin(alpha_s' w + beta_s)`, for randomized checks.
    pub fn random_smooth(rng: &mut SeededRng, input_dim: usize, n_psi: usize) -> Self {
        let mut funcs: Vec<Box<BasisFn>> = Vec::with_capacity(n_psi);
        let scale = 1.0 / (input_dim as f64).sqrt();
        for _ in 0..n_psi {
            let alpha: Vec<f64> = (0..input_dim)
                .map(|_| scale * rng.uniform_in(-1.5, 1.5))
                .collect();
            let beta = rng.uniform_in(-2.0, 2.0);
            funcs.push(Box::new(move |w: &DVector<f64>| {
                let mut acc = beta;
                for (a, x) in alpha.iter().zip(w.iter()) {
                    acc += a * x;
                }
                acc.sin()
            }));
        }
        Self {
            funcs,
            input_dim,
        }
    }
}

/// Basis-expansion coefficients of the velocity form: `a[i-1][s]` is the
/// `n_y x n_y` matrix multiplying `psi_s(w) dy(k-i)` (with `s = 0` the
/// constant term), `b[j-1][s]` the `n_y x n_u` matrix for `du(k-j)`, and
/// `b0` (when present) the expansion of the direct feedthrough
/// `b_0(w) du(k)` that the general velocity form carries. The shifted
/// second-order structure has no feedthrough and rejects a `b0`.
pub struct ThetaParams {
    pub n_u: usize,
    pub n_y: usize,
    pub a: Vec<Vec<DMatrix<f64>>>,
    pub b: Vec<Vec<DMatrix<f64>>>,
    pub b0: Option<Vec<DMatrix<f64>>>,
}

impl ThetaParams {
    pub fn n_a(&self) -> usize {
        self.a.len()
    }

    pub fn n_b(&self) -> usize {
        self.b.len()
    }

    /// Number of non-constant basis functions the coefficients expand over.
    pub fn n_psi(&self) -> usize {
        self.a.first().map_or(0, |row| row.len().saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.b.is_empty() {
            return Err(Error::InvalidInput(
                "coefficient expansion needs at least one output and one input lag".into(),
            ));
        }
        let n_terms = self.n_psi() + 1;
        for row in &self.a {
            if row.len() != n_terms
                || row.iter().any(|m| m.nrows() != self.n_y || m.ncols() != self.n_y)
            {
                return Err(Error::InvalidInput(
                    "inconsistent a-coefficient blocks".into(),
                ));
            }
        }
        for row in &self.b {
            if row.len() != n_terms
                || row.iter().any(|m| m.nrows() != self.n_y || m.ncols() != self.n_u)
            {
                return Err(Error::InvalidInput(
                    "inconsistent b-coefficient blocks".into(),
                ));
            }
        }
        if let Some(row) = &self.b0 {
            if row.len() != n_terms
                || row.iter().any(|m| m.nrows() != self.n_y || m.ncols() != self.n_u)
            {
                return Err(Error::InvalidInput(
                    "inconsistent feedthrough blocks".into(),
                ));
            }
        }
        Ok(())
    }

    /// Random parameters with entries uniform in `[-scale, scale]`.
    pub fn random(
        rng: &mut SeededRng,
        n_a: usize,
        n_b: usize,
        n_u: usize,
        n_y: usize,
        n_psi: usize,
        scale: f64,
    ) -> Self {
        let mut blocks = |rows: usize, cols: usize, lags: usize| -> Vec<Vec<DMatrix<f64>>> {
            (0..lags)
                .map(|_| {
                    (0..=n_psi)
                        .map(|_| DMatrix::from_fn(rows, cols, |_, _| rng.uniform_in(-scale, scale)))
                        .collect()
                })
                .collect()
        };
        let a = blocks(n_y, n_y, n_a);
        let b = blocks(n_y, n_u, n_b);
        Self {
            n_u,
            n_y,
            a,
            b,
            b0: None,
        }
    }

    /// [`Self::random`] plus a random direct-feedthrough expansion `b_0(w)`.
    pub fn random_with_feedthrough(
        rng: &mut SeededRng,
        n_a: usize,
        n_b: usize,
        n_u: usize,
        n_y: usize,
        n_psi: usize,
        scale: f64,
    ) -> Self {
        let mut p = Self::random(rng, n_a, n_b, n_u, n_y, n_psi, scale);
        p.b0 = Some(
            (0..=n_psi)
                .map(|_| DMatrix::from_fn(n_y, n_u, |_, _| rng.uniform_in(-scale, scale)))
                .collect(),
        );
        p
    }

    /// Evaluate the lag-`i` output coefficient `a_i(w) = a_{i,0} + sum_s
    /// a_{i,s} psi_s(w)` at given basis values.
    pub fn a_at(&self, i: usize, q: &DVector<f64>) -> DMatrix<f64> {
        Self::combine(&self.a[i - 1], q)
    }

    /// Evaluate the lag-`j` input coefficient at given basis values.
    pub fn b_at(&self, j: usize, q: &DVector<f64>) -> DMatrix<f64> {
        Self::combine(&self.b[j - 1], q)
    }

    /// Evaluate the direct-feedthrough coefficient at given basis values;
    /// zero when the structure carries none.
    pub fn b0_at(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match &self.b0 {
            Some(row) => Self::combine(row, q),
            None => DMatrix::zeros(self.n_y, self.n_u),
        }
    }

    fn combine(row: &[DMatrix<f64>], q: &DVector<f64>) -> DMatrix<f64> {
        let mut acc = row[0].clone();
        for (s, m) in row[1..].iter().enumerate() {
            acc += m * q[s];
        }
        acc
    }
}

/// The dense multi-step feature factorization.
#[derive(Debug, Clone)]
pub struct PsiProduct {
    /// Step factors in application order (`factors[0]` acts first).
    pub factors: Vec<DMatrix<f64>>,
    /// Product of all factors.
    pub product: DMatrix<f64>,
    /// Feature-state dimensions along the chain: `chain_dims[0]` is the
    /// head, `chain_dims[t]` the state after step `t`.
    pub chain_dims: Vec<usize>,
}

impl PsiProduct {
    /// Rows of the full feature vector.
    pub fn feature_dim(&self) -> usize {
        self.product.nrows()
    }

    /// Columns: the stacked regressor dimension.
    pub fn regressor_dim(&self) -> usize {
        self.product.ncols()
    }
}

fn check_cap(rows: usize, cols: usize) -> Result<()> {
    if rows.saturating_mul(cols) > DENSE_ELEMENT_CAP {
        return Err(Error::SizeOverflow {
            rows,
            cols,
            cap: DENSE_ELEMENT_CAP,
        });
    }
    Ok(())
}

/// `kron(q, I_n)`: vertical stack of `q[s] * I_n`.
fn kron_identity(q: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(q.len() * n, n);
    for (s, v) in q.iter().enumerate() {
        for r in 0..n {
            m[(s * n + r, r)] = *v;
        }
    }
    m
}

/// Write `block` into `m` at offset `(r0, c0)`.
fn place(m: &mut DMatrix<f64>, r0: usize, c0: usize, block: &DMatrix<f64>) {
    m.view_mut((r0, c0), (block.nrows(), block.ncols()))
        .copy_from(block);
}

/// Build the first-order feature chain over one prediction window.
///
/// `w_window` holds L scheduling vectors (column `t` = step `t+1`);
/// `head_dim` is the length of the initial regressor block `dphi_0`. The
/// regressor it acts on is `[dphi_0; du(1); ...; du(L)]`. The step-`t`
/// factor expands the running feature state (step 1: the head) together
/// with the joining input `du(t)` by `[1; psi(w_t)] (x) I` and passes
/// `du(t+1..L)` through — inputs join at the step they feed through, so
/// every input is consumed by the end of the chain.
pub fn build_psi_product(
    basis: &BasisSet,
    w_window: &DMatrix<f64>,
    head_dim: usize,
    n_u: usize,
) -> Result<PsiProduct> {
    let horizon = w_window.ncols();
    if horizon == 0 || head_dim == 0 || n_u == 0 {
        return Err(Error::InvalidInput(
            "feature chain needs a horizon, a head block, and inputs".into(),
        ));
    }
    let n_ext = basis.len() + 1;
    let mut chain_dims = Vec::with_capacity(horizon + 1);
    chain_dims.push(head_dim);
    let mut factors = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let q_ext = basis.eval_extended(&w_window.column(t - 1).into_owned())?;
        let prev = *chain_dims.last().unwrap();
        let passed = (horizon - t) * n_u; // du(t+1..L) survive this factor
        let next = n_ext * (prev + n_u);
        let rows = next + passed;
        let cols = prev + n_u + passed;
        check_cap(rows, cols)?;
        let mut f = DMatrix::zeros(rows, cols);
        place(&mut f, 0, 0, &kron_identity(&q_ext, prev));
        place(&mut f, n_ext * prev, prev, &kron_identity(&q_ext, n_u));
        for r in 0..passed {
            f[(next + r, prev + n_u + r)] = 1.0;
        }
        chain_dims.push(next);
        factors.push(f);
    }
    let mut product = factors[0].clone();
    for f in &factors[1..] {
        check_cap(f.nrows(), product.ncols())?;
        product = f * &product;
    }
    Ok(PsiProduct {
        factors,
        product,
        chain_dims,
    })
}

/// Feature-state layout of the first-order chain at step `t`:
/// `z_t = [z_{t-1}; psi_1(w_t) z_{t-1}; ...; du(t); psi_1(w_t) du(t); ...]`
/// with `z_0` the raw head. This mirrors [`build_psi_product`] and is what
/// [`build_theta`] indexes into: the raw previous state is always the
/// prefix, the raw joining input sits right after the state expansion.
fn theta_chain_11(params: &ThetaParams, head_dim: usize, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let n_u = params.n_u;
    let n_y = params.n_y;
    let n_psi = params.n_psi();
    let n_ext = n_psi + 1;
    let block = n_y + n_u;
    if head_dim % block != 0 || head_dim == 0 {
        return Err(Error::InvalidInput(format!(
            "initial window length {head_dim} is not a positive multiple of n_y + n_u = {block}"
        )));
    }
    let ell = head_dim / block;
    // dphi_0 stacks [dy(1-ell..0); du(1-ell..0)] oldest first; the lag-1
    // coefficients act on the newest samples of each part.
    let y_off = (ell - 1) * n_y;
    let u_off = ell * n_y + (ell - 1) * n_u;
    let mut thetas: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);
    // Offset of the raw newest input du(t) within z_t.
    let mut raw_du_off = 0usize;
    for t in 1..=horizon {
        let theta = if t == 1 {
            let mut th = DMatrix::zeros(n_y, n_ext * (head_dim + n_u));
            for s in 0..n_ext {
                place(&mut th, 0, s * head_dim + y_off, &params.a[0][s]);
                place(&mut th, 0, s * head_dim + u_off, &params.b[0][s]);
                if let Some(b0) = &params.b0 {
                    place(&mut th, 0, n_ext * head_dim + s * n_u, &b0[s]);
                }
            }
            raw_du_off = n_ext * head_dim;
            th
        } else {
            let prev = &thetas[t - 2];
            let pw = prev.ncols();
            let mut th = DMatrix::zeros(n_y, n_ext * (pw + n_u));
            for s in 0..n_ext {
                place(&mut th, 0, s * pw, &(&params.a[0][s] * prev));
                // Lag-1 input: the raw du(t-1) inside the replicated state.
                add_block(&mut th, s * pw + raw_du_off, &params.b[0][s]);
                if let Some(b0) = &params.b0 {
                    place(&mut th, 0, n_ext * pw + s * n_u, &b0[s]);
                }
            }
            raw_du_off = n_ext * pw;
            th
        };
        check_cap(theta.nrows(), theta.ncols())?;
        thetas.push(theta);
    }
    Ok(thetas)
}

/// Add `src` into `dst` starting at column `c0`.
fn add_block(dst: &mut DMatrix<f64>, c0: usize, src: &DMatrix<f64>) {
    for c in 0..src.ncols() {
        for r in 0..src.nrows() {
            dst[(r, c0 + c)] += src[(r, c)];
        }
    }
}

/// Step parameter rows of the shifted second-order chain; see
/// [`build_shifted_psi_product`] for the matching feature layout. Returns
/// `theta_0 .. theta_{L-1}` with `dy(t) = theta_{t-1} z_{t-1}`.
fn theta_chain_22(params: &ThetaParams, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let n_u = params.n_u;
    let n_y = params.n_y;
    let n_psi = params.n_psi();
    let n_ext = n_psi + 1;
    let e0 = n_ext * 2 * (n_y + n_u);
    // theta_0 = [a1 blocks | a2 blocks | b1 blocks | b2 blocks] against the
    // pre-expanded window [dy(0); q_0 x dy(0); dy(-1); q_{-1} x dy(-1);
    // du(0); q_0 x du(0); du(-1); q_{-1} x du(-1)].
    let mut theta0 = DMatrix::zeros(n_y, e0);
    let mut hat1 = DMatrix::zeros(n_y, e0); // lag-2 terms of step 2 select the step-0 samples
    let mut col = 0;
    for lag in 0..2 {
        for s in 0..n_ext {
            place(&mut theta0, 0, col, &params.a[lag][s]);
            if lag == 1 {
                // In z_1's head (= phi_0), dy(0) and q_0 x dy(0) sit first.
                place(&mut hat1, 0, col - n_ext * n_y, &params.a[1][s]);
            }
            col += n_y;
        }
    }
    for lag in 0..2 {
        for s in 0..n_ext {
            place(&mut theta0, 0, col, &params.b[lag][s]);
            if lag == 1 {
                place(&mut hat1, 0, col - n_ext * n_u, &params.b[1][s]);
            }
            col += n_u;
        }
    }
    let mut thetas = vec![theta0];
    let mut hats = vec![DMatrix::zeros(n_y, 1), hat1]; // hats[t] pairs thetas index t
    for t in 1..horizon {
        let prev = &thetas[t - 1];
        let pw = prev.ncols();
        let mut th = DMatrix::zeros(n_y, n_ext * (pw + n_u));
        for s in 0..n_ext {
            place(&mut th, 0, s * pw, &(&params.a[0][s] * prev));
            place(&mut th, 0, n_ext * pw + s * n_u, &params.b[0][s]);
        }
        // Add the lag-2 selection acting on the copy of z_{t-1} at slot 0.
        let hat = &hats[t];
        place_add(&mut th, hat);
        check_cap(th.nrows(), th.ncols())?;
        // Prepare the next lag-2 selector from theta_{t-1}.
        if t + 1 < horizon {
            let mut nh = DMatrix::zeros(n_y, n_ext * (pw + n_u));
            for s in 0..n_ext {
                place(&mut nh, 0, s * pw, &(&params.a[1][s] * prev));
                place(&mut nh, 0, n_ext * pw + s * n_u, &params.b[1][s]);
            }
            hats.push(nh);
        }
        thetas.push(th);
    }
    Ok(thetas)
}

/// Add `src` into the top-left corner of `dst`.
fn place_add(dst: &mut DMatrix<f64>, src: &DMatrix<f64>) {
    for c in 0..src.ncols().min(dst.ncols()) {
        for r in 0..src.nrows() {
            dst[(r, c)] += src[(r, c)];
        }
    }
}

/// Feature chain of the shifted second-order structure. `w_window` holds
/// `L + 1` scheduling vectors at times `-1, 0, 1, ..., L-1` (the two
/// pre-window times expand the initial window, the rest drive the chain).
/// The product maps `[phi_0_expanded; du(1); ...; du(L)]` to the feature
/// vector `[z_{L-1}; du(L)]`.
pub fn build_shifted_psi_product(
    basis: &BasisSet,
    w_window: &DMatrix<f64>,
    n_y: usize,
    n_u: usize,
) -> Result<PsiProduct> {
    let horizon = w_window.ncols().saturating_sub(1);
    if horizon == 0 {
        return Err(Error::InvalidInput(
            "shifted feature chain needs at least a one-step window".into(),
        ));
    }
    let n_ext = basis.len() + 1;
    let e0 = n_ext * 2 * (n_y + n_u);
    let mut chain_dims = vec![e0];
    let mut factors = Vec::new();
    for t in 1..horizon {
        let q_ext = basis.eval_extended(&w_window.column(t + 1).into_owned())?;
        let prev = *chain_dims.last().unwrap();
        let next = n_ext * (prev + n_u);
        let tail = (horizon - t - 1) * n_u;
        let rows = next + n_u + tail;
        let cols = prev + n_u + n_u + tail;
        check_cap(rows, cols)?;
        let mut f = DMatrix::zeros(rows, cols);
        place(&mut f, 0, 0, &kron_identity(&q_ext, prev));
        place(&mut f, n_ext * prev, prev, &kron_identity(&q_ext, n_u));
        for r in 0..(n_u + tail) {
            f[(next + r, prev + n_u + r)] = 1.0;
        }
        chain_dims.push(next);
        factors.push(f);
    }
    let product = if factors.is_empty() {
        DMatrix::identity(e0 + horizon * n_u, e0 + horizon * n_u)
    } else {
        let mut p = factors[0].clone();
        for f in &factors[1..] {
            check_cap(f.nrows(), p.ncols())?;
            p = f * &p;
        }
        p
    };
    Ok(PsiProduct {
        factors,
        product,
        chain_dims,
    })
}

/// Pre-expanded initial window of the shifted chain. `dphi0` stacks the raw
/// differences `[dy(-1); dy(0); du(-1); du(0)]` (oldest first); `q_m1` and
/// `q_0` are the basis values at the two pre-window times.
pub fn expand_shifted_phi0(
    dphi0: &DVector<f64>,
    q_m1: &DVector<f64>,
    q_0: &DVector<f64>,
    n_y: usize,
    n_u: usize,
) -> Result<DVector<f64>> {
    if dphi0.len() != 2 * (n_y + n_u) {
        return Err(Error::InvalidInput(format!(
            "shifted initial window must stack two (n_y + n_u) samples, got length {}",
            dphi0.len()
        )));
    }
    let n_psi = q_m1.len();
    if q_0.len() != n_psi {
        return Err(Error::InvalidInput(
            "basis values at the two pre-window times differ in length".into(),
        ));
    }
    let n_ext = n_psi + 1;
    let mut out = DVector::zeros(n_ext * 2 * (n_y + n_u));
    let dy_m1 = dphi0.rows(0, n_y).into_owned();
    let dy_0 = dphi0.rows(n_y, n_y).into_owned();
    let du_m1 = dphi0.rows(2 * n_y, n_u).into_owned();
    let du_0 = dphi0.rows(2 * n_y + n_u, n_u).into_owned();
    let mut row = 0;
    for (sample, q) in [(&dy_0, q_0), (&dy_m1, q_m1)] {
        out.rows_mut(row, sample.len()).copy_from(sample);
        row += sample.len();
        for s in 0..n_psi {
            out.rows_mut(row, sample.len()).copy_from(&(sample * q[s]));
            row += sample.len();
        }
    }
    for (sample, q) in [(&du_0, q_0), (&du_m1, q_m1)] {
        out.rows_mut(row, sample.len()).copy_from(sample);
        row += sample.len();
        for s in 0..n_psi {
            out.rows_mut(row, sample.len()).copy_from(&(sample * q[s]));
            row += sample.len();
        }
    }
    Ok(out)
}

/// Assemble the full parameter matrix `Theta` (rows `L n_y`, columns
/// matching the feature dimension of the corresponding chain). Row block
/// `t` is `theta_t` zero-padded on the right, so `Theta` is lower block
/// triangular with respect to the growing feature chain.
pub fn build_theta(params: &ThetaParams, head_dim: usize, horizon: usize) -> Result<DMatrix<f64>> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let n_u = params.n_u;
    let n_y = params.n_y;
    // The first-order chain consumes every input; the shifted chain leaves
    // the final input raw (its structure has no feedthrough), so its
    // feature vector carries one trailing input block.
    let (thetas, trailing) = match (params.n_a(), params.n_b()) {
        (1, 1) => (theta_chain_11(params, head_dim, horizon)?, 0),
        (2, 2) => {
            if params.b0.is_some() {
                return Err(Error::InvalidInput(
                    "the shifted second-order structure has no direct feedthrough".into(),
                ));
            }
            if head_dim != 2 * (n_y + n_u) {
                return Err(Error::InvalidInput(format!(
                    "the shifted second-order chain uses an initial window of two samples \
                     (length {}), got {head_dim}",
                    2 * (n_y + n_u)
                )));
            }
            (theta_chain_22(params, horizon)?, n_u)
        }
        (n_a, n_b) => {
            return Err(Error::UnsupportedLags {
                n_a,
                n_b,
                reason: "explicit parameter recursions exist for lag structures (1,1) and (2,2)"
                    .into(),
            })
        }
    };
    let total = thetas.last().unwrap().ncols() + trailing;
    check_cap(horizon * n_y, total)?;
    let mut theta = DMatrix::zeros(horizon * n_y, total);
    for (t, th) in thetas.iter().enumerate() {
        place(&mut theta, t * n_y, 0, th);
    }
    Ok(theta)
}

/// Multi-step prediction through the dense factorization:
/// `dy[1..L] = Theta * Psi * [dphi_0; du]`, dispatched on the lag
/// structure of `params`. For lags (1,1), `w_window` holds `L` scheduling
/// vectors (steps `1..L`) and `dphi0` any whole number of past sample
/// pairs; for lags (2,2), `w_window` holds `L + 1` vectors (times `-1..L-1`)
/// and `dphi0` exactly two pairs.
pub fn explicit_multistep(
    params: &ThetaParams,
    basis: &BasisSet,
    w_window: &DMatrix<f64>,
    dphi0: &DVector<f64>,
    du: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    params.validate()?;
    if du.nrows() != params.n_u {
        return Err(Error::InvalidInput(format!(
            "input differences have {} rows, expected {}",
            du.nrows(),
            params.n_u
        )));
    }
    let horizon = du.ncols();
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let (theta, psi, reg) = match (params.n_a(), params.n_b()) {
        (1, 1) => {
            if w_window.ncols() != horizon {
                return Err(Error::InvalidInput(format!(
                    "lag (1,1) expects {horizon} scheduling vectors, got {}",
                    w_window.ncols()
                )));
            }
            let theta = build_theta(params, dphi0.len(), horizon)?;
            let psi = build_psi_product(basis, w_window, dphi0.len(), params.n_u)?;
            let mut reg = DVector::zeros(dphi0.len() + horizon * params.n_u);
            reg.rows_mut(0, dphi0.len()).copy_from(dphi0);
            for t in 0..horizon {
                reg.rows_mut(dphi0.len() + t * params.n_u, params.n_u)
                    .copy_from(&du.column(t));
            }
            (theta, psi, reg)
        }
        (2, 2) => {
            if w_window.ncols() != horizon + 1 {
                return Err(Error::InvalidInput(format!(
                    "lag (2,2) expects {} scheduling vectors (times -1..L-1), got {}",
                    horizon + 1,
                    w_window.ncols()
                )));
            }
            let theta = build_theta(params, 2 * (params.n_y + params.n_u), horizon)?;
            let psi = build_shifted_psi_product(basis, w_window, params.n_y, params.n_u)?;
            let q_m1 = basis.eval(&w_window.column(0).into_owned())?;
            let q_0 = basis.eval(&w_window.column(1).into_owned())?;
            let phi0 = expand_shifted_phi0(dphi0, &q_m1, &q_0, params.n_y, params.n_u)?;
            let mut reg = DVector::zeros(phi0.len() + horizon * params.n_u);
            reg.rows_mut(0, phi0.len()).copy_from(&phi0);
            for t in 0..horizon {
                reg.rows_mut(phi0.len() + t * params.n_u, params.n_u)
                    .copy_from(&du.column(t));
            }
            (theta, psi, reg)
        }
        (n_a, n_b) => {
            return Err(Error::UnsupportedLags {
                n_a,
                n_b,
                reason: "explicit multi-step prediction exists for lag structures (1,1) and (2,2)"
                    .into(),
            })
        }
    };
    if theta.ncols() != psi.feature_dim() || psi.regressor_dim() != reg.len() {
        return Err(Error::Numerical(format!(
            "internal chain mismatch: Theta {}x{}, Psi {}x{}, regressor {}",
            theta.nrows(),
            theta.ncols(),
            psi.feature_dim(),
            psi.regressor_dim(),
            reg.len()
        )));
    }
    Ok(&theta * (&psi.product * reg))
}

/// Step-by-step simulation of the scheduled coefficient recursion — the
/// quantity the chained factorization of [`explicit_multistep`] must
/// reproduce. Lag structure (1,1) runs
/// `dy(t) = a_1(w_t) dy(t-1) + b_0(w_t) du(t) + b_1(w_t) du(t-1)` (the
/// feedthrough term only when the parameters carry one); lag structure
/// (2,2) runs the shifted form `dy(t) = sum_{i=1,2} a_i(w_{t-i}) dy(t-i) +
/// b_i(w_{t-i}) du(t-i)`. Window and initial-condition conventions match
/// [`explicit_multistep`] exactly.
pub fn reference_multistep(
    params: &ThetaParams,
    basis: &BasisSet,
    w_window: &DMatrix<f64>,
    dphi0: &DVector<f64>,
    du: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    params.validate()?;
    let n_y = params.n_y;
    let n_u = params.n_u;
    let horizon = du.ncols();
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    match (params.n_a(), params.n_b()) {
        (1, 1) => {
            if w_window.ncols() != horizon {
                return Err(Error::InvalidInput(format!(
                    "lag (1,1) expects {horizon} scheduling vectors, got {}",
                    w_window.ncols()
                )));
            }
            let sample = n_y + n_u;
            if dphi0.len() == 0 || dphi0.len() % sample != 0 {
                return Err(Error::InvalidInput(format!(
                    "initial window of length {} is not a whole number of samples",
                    dphi0.len()
                )));
            }
            let ell = dphi0.len() / sample;
            let mut dy_prev = dphi0.rows((ell - 1) * n_y, n_y).into_owned();
            let mut out = DVector::zeros(horizon * n_y);
            for t in 1..=horizon {
                let q = basis.eval(&w_window.column(t - 1).into_owned())?;
                let du_prev = if t == 1 {
                    dphi0.rows(ell * n_y + (ell - 1) * n_u, n_u).into_owned()
                } else {
                    du.column(t - 2).into_owned()
                };
                let mut dy = params.a_at(1, &q) * &dy_prev + params.b_at(1, &q) * du_prev;
                if params.b0.is_some() {
                    dy += params.b0_at(&q) * du.column(t - 1);
                }
                out.rows_mut((t - 1) * n_y, n_y).copy_from(&dy);
                dy_prev = dy;
            }
            Ok(out)
        }
        (2, 2) => {
            if params.b0.is_some() {
                return Err(Error::InvalidInput(
                    "the shifted second-order structure has no direct feedthrough".into(),
                ));
            }
            if w_window.ncols() != horizon + 1 {
                return Err(Error::InvalidInput(format!(
                    "lag (2,2) expects {} scheduling vectors (times -1..L-1), got {}",
                    horizon + 1,
                    w_window.ncols()
                )));
            }
            if dphi0.len() != 2 * (n_y + n_u) {
                return Err(Error::InvalidInput(format!(
                    "the shifted second-order recursion expects an initial window \
                     [dy(-1); dy(0); du(-1); du(0)] of length {}, got {}",
                    2 * (n_y + n_u),
                    dphi0.len()
                )));
            }
            // Window column `tau + 1` is the scheduling vector at time `tau`.
            let q_at = |time: i64| basis.eval(&w_window.column((time + 1) as usize).into_owned());
            let mut dy_hist: Vec<DVector<f64>> = vec![
                dphi0.rows(0, n_y).into_owned(),   // dy(-1)
                dphi0.rows(n_y, n_y).into_owned(), // dy(0)
            ];
            let du_at = |time: i64| -> DVector<f64> {
                if time == -1 {
                    dphi0.rows(2 * n_y, n_u).into_owned()
                } else if time == 0 {
                    dphi0.rows(2 * n_y + n_u, n_u).into_owned()
                } else {
                    du.column(time as usize - 1).into_owned()
                }
            };
            let mut out = DVector::zeros(horizon * n_y);
            for t in 1..=horizon as i64 {
                let mut dy = DVector::zeros(n_y);
                for i in 1..=2i64 {
                    let q = q_at(t - i)?;
                    let dy_lag = dy_hist[(t - i + 1) as usize].clone();
                    dy += params.a_at(i as usize, &q) * dy_lag
                        + params.b_at(i as usize, &q) * du_at(t - i);
                }
                out.rows_mut(((t - 1) as usize) * n_y, n_y).copy_from(&dy);
                dy_hist.push(dy);
            }
            Ok(out)
        }
        (n_a, n_b) => Err(Error::UnsupportedLags {
            n_a,
            n_b,
            reason: "the reference recursion exists for lag structures (1,1) and (2,2)".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_window(rng: &mut SeededRng, dim: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(dim, cols, |_, _| rng.uniform_in(-2.0, 2.0))
    }

    #[test]
    fn chain_dimensions_follow_the_size_recursion() {
        let mut rng = SeededRng::new(41);
        let basis = BasisSet::random_smooth(&mut rng, 3, 2);
        let (n_u, head) = (2, 6);
        let horizon = 4;
        let w = random_window(&mut rng, 3, horizon);
        let p = build_psi_product(&basis, &w, head, n_u).unwrap();
        assert_eq!(p.chain_dims[0], head);
        for t in 1..=horizon {
            assert_eq!(p.chain_dims[t], 3 * (p.chain_dims[t - 1] + n_u));
        }
        assert_eq!(p.feature_dim(), p.chain_dims[horizon]);
        assert_eq!(p.regressor_dim(), head + horizon * n_u);
    }

    #[test]
    fn cross_window_gram_is_block_diagonal_with_suffix_products() {
        // Psi(W_i)' Psi(W_j) must be block diagonal with scalar blocks
        // s_m = prod_{t >= m} (1 + psi(w_t^i)' psi(w_t^j)): the input
        // joining at step m is expanded by that step and every later one.
        let mut rng = SeededRng::new(42);
        for _ in 0..20 {
            let n_u = 1 + rng.index(2);
            let n_y = 1 + rng.index(2);
            let n_psi = rng.index(4);
            let ell = 1 + rng.index(3);
            let horizon = 1 + rng.index(4);
            let n_w = 3;
            let basis = BasisSet::random_smooth(&mut rng, n_w, n_psi);
            let head = ell * (n_y + n_u);
            let wi = random_window(&mut rng, n_w, horizon);
            let wj = random_window(&mut rng, n_w, horizon);
            let pi = build_psi_product(&basis, &wi, head, n_u).unwrap();
            let pj = build_psi_product(&basis, &wj, head, n_u).unwrap();
            let gram = pi.product.transpose() * &pj.product;

            // Independent suffix products.
            let mut s = vec![1.0; horizon + 1];
            for t in (0..horizon).rev() {
                let qi = basis.eval(&wi.column(t).into_owned()).unwrap();
                let qj = basis.eval(&wj.column(t).into_owned()).unwrap();
                s[t] = s[t + 1] * (1.0 + qi.dot(&qj));
            }
            let mut expected = DMatrix::zeros(gram.nrows(), gram.ncols());
            for r in 0..head {
                expected[(r, r)] = s[0];
            }
            for m in 1..=horizon {
                for r in 0..n_u {
                    let idx = head + (m - 1) * n_u + r;
                    expected[(idx, idx)] = s[m - 1];
                }
            }
            assert_abs_diff_eq!(gram, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn first_order_prediction_matches_direct_recursion() {
        let mut rng = SeededRng::new(43);
        for draw in 0..50 {
            let n_u = 1 + rng.index(2);
            let n_y = 1 + rng.index(2);
            let n_psi = rng.index(3);
            let ell = 1 + rng.index(2);
            let horizon = 1 + rng.index(5);
            let n_w = 4;
            let basis = BasisSet::random_smooth(&mut rng, n_w, n_psi);
            // Alternate between pure-lag coefficients and ones with a
            // direct feedthrough block so both code paths are covered.
            let params = if draw % 2 == 0 {
                ThetaParams::random(&mut rng, 1, 1, n_u, n_y, n_psi, 0.8)
            } else {
                ThetaParams::random_with_feedthrough(&mut rng, 1, 1, n_u, n_y, n_psi, 0.8)
            };
            let w = random_window(&mut rng, n_w, horizon);
            let head = ell * (n_y + n_u);
            let dphi0 = DVector::from_fn(head, |_, _| rng.uniform_in(-1.0, 1.0));
            let du = DMatrix::from_fn(n_u, horizon, |_, _| rng.uniform_in(-1.0, 1.0));
            let got = explicit_multistep(&params, &basis, &w, &dphi0, &du).unwrap();
            let want = reference_multistep(&params, &basis, &w, &dphi0, &du).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn shifted_second_order_prediction_matches_direct_recursion() {
        let mut rng = SeededRng::new(44);
        for _ in 0..50 {
            let n_u = 1 + rng.index(2);
            let n_y = 1 + rng.index(2);
            let n_psi = rng.index(3);
            let horizon = 1 + rng.index(5);
            let n_w = 4;
            let basis = BasisSet::random_smooth(&mut rng, n_w, n_psi);
            let params = ThetaParams::random(&mut rng, 2, 2, n_u, n_y, n_psi, 0.6);
            let w = random_window(&mut rng, n_w, horizon + 1);
            let dphi0 = DVector::from_fn(2 * (n_y + n_u), |_, _| rng.uniform_in(-1.0, 1.0));
            let du = DMatrix::from_fn(n_u, horizon, |_, _| rng.uniform_in(-1.0, 1.0));
            let got = explicit_multistep(&params, &basis, &w, &dphi0, &du).unwrap();
            let want = reference_multistep(&params, &basis, &w, &dphi0, &du).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn scalar_three_step_case_matches_the_hand_expansion() {
        // SISO, one basis function, L = 3: the prediction at step 3 written
        // out in full as nested products of scheduled coefficients.
        let mut rng = SeededRng::new(45);
        let basis = BasisSet::random_smooth(&mut rng, 2, 1);
        let params = ThetaParams::random(&mut rng, 1, 1, 1, 1, 1, 1.0);
        let w = random_window(&mut rng, 2, 3);
        let dphi0 = DVector::from_column_slice(&[0.7, -0.4]);
        let du = DMatrix::from_row_slice(1, 3, &[0.3, -0.9, 0.5]);
        let got = explicit_multistep(&params, &basis, &w, &dphi0, &du).unwrap();

        let psi = |t: usize| basis.eval(&w.column(t - 1).into_owned()).unwrap()[0];
        let (a1, a2) = (params.a[0][0][(0, 0)], params.a[0][1][(0, 0)]);
        let (b1, b2) = (params.b[0][0][(0, 0)], params.b[0][1][(0, 0)]);
        let a = |t: usize| a1 + a2 * psi(t);
        let b = |t: usize| b1 + b2 * psi(t);
        let (y0, u0) = (dphi0[0], dphi0[1]);
        let y1 = a(1) * y0 + b(1) * u0;
        let y2 = a(2) * y1 + b(2) * du[(0, 0)];
        let y3_expanded = a(3) * a(2) * a(1) * y0
            + a(3) * a(2) * b(1) * u0
            + a(3) * b(2) * du[(0, 0)]
            + b(3) * du[(0, 1)];
        assert_abs_diff_eq!(got[0], y1, epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], y2, epsilon = 1e-12);
        assert_abs_diff_eq!(got[2], y3_expanded, epsilon = 1e-12);
    }

    #[test]
    fn scalar_feedthrough_case_matches_the_hand_expansion() {
        // SISO with direct feedthrough, L = 2:
        // dy(t) = a(t) dy(t-1) + b(t) du(t-1) + c(t) du(t).
        let mut rng = SeededRng::new(52);
        let basis = BasisSet::random_smooth(&mut rng, 2, 1);
        let params = ThetaParams::random_with_feedthrough(&mut rng, 1, 1, 1, 1, 1, 1.0);
        let w = random_window(&mut rng, 2, 2);
        let dphi0 = DVector::from_column_slice(&[0.7, -0.4]);
        let du = DMatrix::from_row_slice(1, 2, &[0.3, -0.9]);
        let got = explicit_multistep(&params, &basis, &w, &dphi0, &du).unwrap();

        let psi = |t: usize| basis.eval(&w.column(t - 1).into_owned()).unwrap()[0];
        let (a1, a2) = (params.a[0][0][(0, 0)], params.a[0][1][(0, 0)]);
        let (b1, b2) = (params.b[0][0][(0, 0)], params.b[0][1][(0, 0)]);
        let ft = params.b0.as_ref().unwrap();
        let (c1, c2) = (ft[0][(0, 0)], ft[1][(0, 0)]);
        let a = |t: usize| a1 + a2 * psi(t);
        let b = |t: usize| b1 + b2 * psi(t);
        let c = |t: usize| c1 + c2 * psi(t);
        let (y0, u0) = (dphi0[0], dphi0[1]);
        let y1 = a(1) * y0 + b(1) * u0 + c(1) * du[(0, 0)];
        let y2 = a(2) * y1 + b(2) * du[(0, 0)] + c(2) * du[(0, 1)];
        assert_abs_diff_eq!(got[0], y1, epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], y2, epsilon = 1e-12);
    }

    #[test]
    fn empty_basis_reduces_to_constant_coefficient_recursion() {
        let mut rng = SeededRng::new(46);
        let basis = BasisSet::empty();
        let params = ThetaParams::random(&mut rng, 1, 1, 1, 1, 0, 0.9);
        let horizon = 4;
        let w = DMatrix::zeros(0, horizon); // scheduling unused
        let dphi0 = DVector::from_column_slice(&[0.5, -0.2]);
        let du = DMatrix::from_fn(1, horizon, |_, _| rng.gaussian());
        let got = explicit_multistep(&params, &basis, &w, &dphi0, &du).unwrap();
        let (a, b) = (params.a[0][0][(0, 0)], params.b[0][0][(0, 0)]);
        let mut dy_prev = dphi0[0];
        let mut du_prev = dphi0[1];
        for t in 0..horizon {
            let dy = a * dy_prev + b * du_prev;
            assert_abs_diff_eq!(got[t], dy, epsilon = 1e-12);
            dy_prev = dy;
            du_prev = du[(0, t)];
        }
    }

    #[test]
    fn theta_is_lower_block_triangular() {
        let mut rng = SeededRng::new(47);
        let params = ThetaParams::random(&mut rng, 1, 1, 1, 2, 2, 0.5);
        let head = 3; // ell = 1, n_y + n_u = 3
        let horizon = 3;
        let theta = build_theta(&params, head, horizon).unwrap();
        // Column widths of the chain: c_1 = 3*(3+1) = 12, c_2 = 3*(12+1) = 39,
        // c_3 = 3*(39+1) = 120; every input block is folded into the chain.
        assert_eq!(theta.ncols(), 120);
        for (t, width) in [12usize, 39, 120].iter().enumerate() {
            for r in 0..2 {
                for c in *width..theta.ncols() {
                    assert_eq!(theta[(t * 2 + r, c)], 0.0, "row block {t} leaks past {width}");
                }
            }
        }
    }

    #[test]
    fn unsupported_lags_are_rejected() {
        let mut rng = SeededRng::new(48);
        let params = ThetaParams::random(&mut rng, 3, 3, 1, 1, 1, 0.5);
        let basis = BasisSet::random_smooth(&mut rng, 2, 1);
        let w = random_window(&mut rng, 2, 3);
        let dphi0 = DVector::zeros(6);
        let du = DMatrix::zeros(1, 3);
        assert!(matches!(
            explicit_multistep(&params, &basis, &w, &dphi0, &du),
            Err(Error::UnsupportedLags { n_a: 3, n_b: 3, .. })
        ));
        let params12 = ThetaParams::random(&mut rng, 1, 2, 1, 1, 1, 0.5);
        assert!(matches!(
            build_theta(&params12, 2, 3),
            Err(Error::UnsupportedLags { .. })
        ));
    }

    #[test]
    fn window_count_mismatches_are_rejected() {
        let mut rng = SeededRng::new(49);
        let basis = BasisSet::random_smooth(&mut rng, 2, 1);
        let params = ThetaParams::random(&mut rng, 1, 1, 1, 1, 1, 0.5);
        let w = random_window(&mut rng, 2, 2); // horizon 3 needs 3 columns
        let dphi0 = DVector::zeros(2);
        let du = DMatrix::zeros(1, 3);
        assert!(explicit_multistep(&params, &basis, &w, &dphi0, &du).is_err());
        let params22 = ThetaParams::random(&mut rng, 2, 2, 1, 1, 1, 0.5);
        let w22 = random_window(&mut rng, 2, 3); // (2,2) horizon 3 needs 4
        let dphi022 = DVector::zeros(4);
        assert!(explicit_multistep(&params22, &basis, &w22, &dphi022, &du).is_err());
    }

    #[test]
    fn oversized_expansions_hit_the_element_cap() {
        let mut rng = SeededRng::new(50);
        let basis = BasisSet::random_smooth(&mut rng, 2, 6);
        let w = random_window(&mut rng, 2, 9);
        match build_psi_product(&basis, &w, 4, 2) {
            Err(Error::SizeOverflow { cap, .. }) => assert_eq!(cap, DENSE_ELEMENT_CAP),
            other => panic!("expected size overflow, got {other:?}"),
        }
    }

    #[test]
    fn basis_set_checks_dimensions_and_finiteness() {
        let mut rng = SeededRng::new(51);
        let basis = BasisSet::random_smooth(&mut rng, 3, 2);
        assert!(basis.eval(&DVector::zeros(2)).is_err());
        assert_eq!(basis.eval(&DVector::zeros(3)).unwrap().len(), 2);
        assert_eq!(basis.eval_extended(&DVector::zeros(3)).unwrap()[0], 1.0);
        let bad = BasisSet::new(
            1,
            vec![Box::new(|w: &DVector<f64>| 1.0 / w[0])],
        )
        .unwrap();
        assert!(matches!(
            bad.eval(&DVector::zeros(1)),
            Err(Error::Numerical(_))
        ));
        let empty = BasisSet::empty();
        assert_eq!(empty.eval(&DVector::zeros(5)).unwrap().len(), 0);
    }
}
