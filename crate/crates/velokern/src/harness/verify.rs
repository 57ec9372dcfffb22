//! Self-contained property verification: fixed-seed spot checks of the
//! identities the predictor stack rests on, with optional fault injection
//! to prove the checks can actually fail.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{effective_gram, KernelSpec, StructuredBlock};
use crate::lpv::{build_lpv_data, lpv_membership, simulate_shifted_affine};
use crate::regression::{FittedPredictor, QueryWindow};
use crate::rng::SeededRng;
use crate::signals::{build_data_matrices, Dims, Trajectory};
use crate::structure::{
    build_psi_product, explicit_multistep, reference_multistep, BasisSet, ThetaParams,
};
use crate::velocity::{ftc_coefficients, NlSystem, QuadratureSpec};

use super::config::InputSpec;
use super::systems::{generate_trajectory, linear_benchmark_system};

/// Deliberate defects that must make a verification check fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scale one suffix-product weight of a structured kernel block,
    /// breaking the equality with the explicit feature Gram.
    CorruptKernelScalar,
}

impl Fault {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "corrupt-kernel-scalar" => Ok(Self::CorruptKernelScalar),
            other => Err(Error::InvalidInput(format!(
                "unknown fault '{other}'; expected corrupt-kernel-scalar"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CorruptKernelScalar => "corrupt-kernel-scalar",
        }
    }
}

/// One verified property.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    pub tol: f64,
    pub measured: f64,
}

impl PropertyResult {
    fn from_measure(name: &str, tol: f64, measured: f64) -> Self {
        Self {
            name: name.into(),
            pass: measured <= tol,
            tol,
            measured,
        }
    }
}

/// The full verification report, serialized as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub all_pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injected_fault: Option<String>,
    pub results: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| {
            Error::Config(format!("cannot serialize verification report: {e}"))
        })?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn linear_dictionary(n_data: usize, seed: u64) -> Result<(Trajectory, Dims)> {
    let sys = linear_benchmark_system();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let traj = generate_trajectory(&sys, n_data, &input, 0.05, seed)?;
    let dims = Dims::uniform(1, 1, 2, 4, n_data)?;
    Ok((traj, dims))
}

/// Structured block weights match the explicit feature Gram: for basis
/// kernels, the dense form of the suffix-product block equals
/// `Psi(W_i)' Psi(W_j)` entry for entry.
fn check_kernel_trick(fault: Option<Fault>) -> Result<PropertyResult> {
    let mut rng = SeededRng::new(101);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let n_u = 1 + rng.index(2);
        let n_y = 1 + rng.index(2);
        let ell = 1 + rng.index(2);
        let horizon = 1 + rng.index(4);
        let n_w = 3;
        let n_psi = rng.index(3);
        let head = ell * (n_y + n_u);
        let basis = BasisSet::random_smooth(&mut rng, n_w, n_psi);
        let wi = DMatrix::from_fn(n_w, horizon, |_, _| rng.uniform_in(-2.0, 2.0));
        let wj = DMatrix::from_fn(n_w, horizon, |_, _| rng.uniform_in(-2.0, 2.0));
        let pi = build_psi_product(&basis, &wi, head, n_u)?;
        let pj = build_psi_product(&basis, &wj, head, n_u)?;
        let expected = pi.product.transpose() * &pj.product;
        let kernel = KernelSpec::ExplicitBasis(std::sync::Arc::new(basis));
        let mut block = StructuredBlock::from_windows(&kernel, &wi, &wj, head, n_u)?;
        if fault == Some(Fault::CorruptKernelScalar) {
            block.scalars[0] *= 1.0 + 1e-3;
        }
        let dense = block.densify();
        worst = worst.max((dense - expected).abs().max());
    }
    Ok(PropertyResult::from_measure("kernel_trick", 1e-9, worst))
}

/// The chained parameter factorization reproduces the step-by-step
/// scheduled recursion for both supported lag structures.
fn check_theta_oracle() -> Result<PropertyResult> {
    let mut rng = SeededRng::new(102);
    let mut worst = 0.0_f64;
    for &(n_a, n_b) in &[(1usize, 1usize), (2, 2)] {
        for _ in 0..10 {
            let n_u = 1 + rng.index(2);
            let n_y = 1 + rng.index(2);
            let n_psi = rng.index(3);
            let horizon = 1 + rng.index(4);
            let n_w = 4;
            let basis = BasisSet::random_smooth(&mut rng, n_w, n_psi);
            let params = ThetaParams::random(&mut rng, n_a, n_b, n_u, n_y, n_psi, 0.7);
            let (w_cols, head) = if n_a == 1 {
                (horizon, (1 + rng.index(2)) * (n_y + n_u))
            } else {
                (horizon + 1, 2 * (n_y + n_u))
            };
            let w = DMatrix::from_fn(n_w, w_cols, |_, _| rng.uniform_in(-2.0, 2.0));
            let dphi0 = DVector::from_fn(head, |_, _| rng.uniform_in(-1.0, 1.0));
            let du = DMatrix::from_fn(n_u, horizon, |_, _| rng.uniform_in(-1.0, 1.0));
            let got = explicit_multistep(&params, &basis, &w, &dphi0, &du)?;
            let want = reference_multistep(&params, &basis, &w, &dphi0, &du)?;
            worst = worst.max((got - want).abs().max());
        }
    }
    Ok(PropertyResult::from_measure("theta_oracle", 1e-9, worst))
}

/// Path-integrated Jacobians turn regressor increments into exact output
/// increments on the nonlinear benchmark system.
fn check_ftc_exactness() -> Result<PropertyResult> {
    let sys = NlSystem::example();
    let quad = QuadratureSpec::default();
    let mut rng = SeededRng::new(103);
    let mut worst = 0.0_f64;
    for _ in 0..25 {
        let xi_prev = DVector::from_fn(5, |_, _| rng.uniform_in(-1.5, 1.5));
        let xi_cur = DVector::from_fn(5, |_, _| rng.uniform_in(-1.5, 1.5));
        let c = ftc_coefficients(&sys, &xi_prev, &xi_cur, &quad)?;
        let d = &xi_cur - &xi_prev;
        let dy_lags = DMatrix::from_column_slice(1, 2, &[d[0], d[1]]);
        let du_win = DMatrix::from_column_slice(1, 3, &[d[2], d[3], d[4]]);
        let inc = c.apply(&dy_lags, &du_win)?;
        let truth = sys.eval(&xi_cur)? - sys.eval(&xi_prev)?;
        worst = worst.max((inc[0] - truth[0]).abs());
    }
    Ok(PropertyResult::from_measure("ftc_exactness", 1e-8, worst))
}

/// The regularized effective Gram is symmetric and its smallest eigenvalue
/// stays above the ridge floor `1/gamma`.
fn check_spd() -> Result<PropertyResult> {
    let (traj, dims) = linear_dictionary(60, 104)?;
    let data = build_data_matrices(&traj, &dims)?;
    let kernel = KernelSpec::rbf(10.0)?;
    let gamma = 100.0;
    let gram = effective_gram(&kernel, &data)?;
    let asym = (&gram - gram.transpose()).abs().max();
    let n = gram.nrows();
    let mut m = gram;
    for i in 0..n {
        m[(i, i)] += 1.0 / gamma;
    }
    let eigen = nalgebra::SymmetricEigen::new(m);
    let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let measured = asym.max(1.0 / gamma - lambda_min);
    Ok(PropertyResult::from_measure("spd", 1e-8, measured))
}

/// Solving first and combining targets afterwards gives the same prediction
/// as the precomputed dual coefficients.
fn check_implicit_explicit() -> Result<PropertyResult> {
    let (traj, dims) = linear_dictionary(60, 105)?;
    let data = build_data_matrices(&traj, &dims)?;
    let pred = FittedPredictor::fit(&data, KernelSpec::rbf(8.0)?, 50.0)?;
    let mut worst = 0.0_f64;
    for anchor in QueryWindow::feasible_anchors(&traj, &dims).into_iter().step_by(7) {
        let q = QueryWindow::from_trajectory(&traj, anchor, &dims)?;
        let explicit = pred.predict(&q)?;
        let implicit = pred.implicit_predict(&q)?.dy;
        let scale = 1.0 + explicit.abs().max();
        worst = worst.max((explicit - implicit).abs().max() / scale);
    }
    Ok(PropertyResult::from_measure(
        "implicit_explicit",
        1e-12,
        worst,
    ))
}

/// Windows generated by a scheduled system pass the lifted membership test
/// while perturbed windows are rejected.
fn check_lpv_membership() -> Result<PropertyResult> {
    let mut rng = SeededRng::new(106);
    let ell = 1;
    let basis = BasisSet::random_smooth(&mut rng, (ell + 1) + (ell + 2), 1);
    let coeffs = (0.35, vec![0.15], 0.7, vec![-0.1]);
    let dict = simulate_shifted_affine(&mut rng, &basis, coeffs.clone(), ell, 140)?;
    let data = build_lpv_data(&dict, &basis, ell)?;
    let query_traj = simulate_shifted_affine(&mut rng, &basis, coeffs, ell, 60)?;
    let query = build_lpv_data(&query_traj, &basis, ell)?;
    let horizon = 5;
    let from = 30;
    let du_q = query.du.columns(from, horizon).into_owned();
    let dy_q = query.dy.columns(from, horizon).into_owned();
    let p_q = query.p.columns(from, horizon).into_owned();
    let genuine = lpv_membership(&data, &du_q, &dy_q, &p_q)?;
    let mut dy_bad = dy_q.clone();
    dy_bad[(0, 2)] += 0.1;
    let perturbed = lpv_membership(&data, &du_q, &dy_bad, &p_q)?;
    let tol = 1e-6;
    let measured = genuine.relative_residual();
    Ok(PropertyResult {
        name: "lpv_membership".into(),
        pass: measured <= tol && perturbed.residual > 1e-3,
        tol,
        measured,
    })
}

/// Run all verification checks. A fault, when given, is injected into the
/// check it targets, which must then fail.
pub fn run_verify(fault: Option<Fault>) -> Result<VerifyReport> {
    let results = vec![
        check_kernel_trick(fault)?,
        check_theta_oracle()?,
        check_ftc_exactness()?,
        check_spd()?,
        check_implicit_explicit()?,
        check_lpv_membership()?,
    ];
    Ok(VerifyReport {
        all_pass: results.iter().all(|r| r.pass),
        injected_fault: fault.map(|f| f.as_str().to_owned()),
        results,
    })
}
