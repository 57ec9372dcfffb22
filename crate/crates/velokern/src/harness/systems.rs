//! Built-in data-generating systems and trajectory synthesis.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::rng::SeededRng;
use crate::signals::Trajectory;
use crate::velocity::{simulate_primal, History, NlSystem};

use super::config::{BenchmarkConfig, InputSpec, SystemSpec};

/// Evaluate a polynomial whose coefficients start at degree one:
/// `c[d-1]` multiplies `x^d`, so the origin is always a root.
fn poly_eval(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = x;
    for coeff in c {
        acc += coeff * pow;
        pow *= x;
    }
    acc
}

fn poly_deriv(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for (d, coeff) in c.iter().enumerate() {
        acc += (d + 1) as f64 * coeff * pow;
        pow *= x;
    }
    acc
}

/// Single-input single-output system with additively separable polynomial
/// lag terms and no feedthrough:
/// `y(k) = sum_i P_i(y(k-i)) + sum_j Q_j(u(k-j))` where `P_i` has the
/// coefficients `poly_y[i-1]` and `Q_j` the coefficients `poly_u[j-1]`
/// (both starting at degree one). The Jacobian is analytic.
pub fn polynomial_system(poly_y: &[Vec<f64>], poly_u: &[Vec<f64>]) -> NlSystem {
    let n_a = poly_y.len().max(1);
    let n_b = poly_u.len().max(1);
    let (py, pu) = (poly_y.to_vec(), poly_u.to_vec());
    let (py_j, pu_j) = (py.clone(), pu.clone());
    NlSystem::new(1, 1, n_a, n_b, move |xi: &DVector<f64>| {
        let mut acc = 0.0;
        for (i, c) in py.iter().enumerate() {
            acc += poly_eval(c, xi[i]);
        }
        for (j, c) in pu.iter().enumerate() {
            acc += poly_eval(c, xi[n_a + 1 + j]);
        }
        DVector::from_element(1, acc)
    })
    .with_jacobian(move |xi: &DVector<f64>| {
        let mut jac = DMatrix::zeros(1, n_a + 1 + n_b);
        for (i, c) in py_j.iter().enumerate() {
            jac[(0, i)] = poly_deriv(c, xi[i]);
        }
        for (j, c) in pu_j.iter().enumerate() {
            jac[(0, n_a + 1 + j)] = poly_deriv(c, xi[n_a + 1 + j]);
        }
        jac
    })
}

/// A fixed stable second-order linear benchmark system with poles at 0.3
/// and 0.4 and no feedthrough.
pub fn linear_benchmark_system() -> NlSystem {
    let a = vec![
        DMatrix::from_element(1, 1, 0.7),
        DMatrix::from_element(1, 1, -0.12),
    ];
    let b = vec![
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 0.3),
    ];
    NlSystem::linear(a, b).expect("fixed benchmark blocks are consistent")
}

/// Instantiate the data-generating system named by the configuration.
pub fn build_system(spec: &SystemSpec) -> NlSystem {
    match spec {
        SystemSpec::Example => NlSystem::example(),
        SystemSpec::Linear => linear_benchmark_system(),
        SystemSpec::Polynomial { poly_y, poly_u } => polynomial_system(poly_y, poly_u),
    }
}

/// Draw a random excitation, simulate the system from rest, and add white
/// measurement noise to the outputs. The trajectory holds `n_data + 1`
/// samples at times `0..=n_data`. The input stream is drawn before the
/// noise stream, so two runs with the same seed share the excitation even
/// when one of them is noiseless.
pub fn generate_trajectory(
    sys: &NlSystem,
    n_data: usize,
    input: &InputSpec,
    noise_variance: f64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = SeededRng::new(seed);
    let t_len = n_data + 1;
    let input_std = input.variance.sqrt();
    let mut u = DMatrix::zeros(sys.n_u, t_len);
    for k in 0..t_len {
        for r in 0..sys.n_u {
            u[(r, k)] = input.mean + input_std * rng.gaussian();
        }
    }
    let init = History::zeros(sys.n_u, sys.n_y, sys.n_a, sys.n_b);
    let mut y = simulate_primal(sys, &u, &init)?;
    if noise_variance > 0.0 {
        let noise_std = noise_variance.sqrt();
        for k in 0..t_len {
            for r in 0..sys.n_y {
                y[(r, k)] += noise_std * rng.gaussian();
            }
        }
    }
    Trajectory::new(u, y, 0)
}

/// Generate the dictionary trajectory described by a configuration.
pub fn generate_from_config(config: &BenchmarkConfig, seed: u64) -> Result<Trajectory> {
    let sys = build_system(&config.system);
    generate_trajectory(&sys, config.n_data, &config.input, config.noise_variance, seed)
}
