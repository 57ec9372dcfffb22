//! Scratch diagnostic: simulation floor and damped self-scheduling (temporary).

use nalgebra::DMatrix;
use velokern::harness::{generate_trajectory, InputSpec};
use velokern::kernels::{effective_gram, KernelSpec};
use velokern::regression::{
    plain_gram, unstructured_query, FittedPredictor, QueryWindow, UnstructuredData,
    UnstructuredPredictor, UnstructuredVariant,
};
use velokern::signals::{build_data_matrices, Dims, Trajectory};
use velokern::velocity::{simulate_primal, History, NlSystem};

fn anchors_for(test: &Trajectory, dims: &Dims) -> Vec<i64> {
    let all = QueryWindow::feasible_anchors(test, dims);
    (0..100).map(|i| all[i * all.len() / 100]).collect()
}

fn truth_at(clean: &Trajectory, a: i64, t: usize) -> f64 {
    (clean.y_at(a + t as i64 - 1).unwrap() - clean.y_at(a + t as i64 - 2).unwrap())[0]
}

/// Damped fixed-point rollout; returns (dy, iterations, converged).
fn damped<F: FnMut(&Trajectory) -> Vec<f64>>(
    meas: &Trajectory,
    a: i64,
    dims: &Dims,
    theta: f64,
    max_iter: usize,
    mut predict: F,
) -> (Vec<f64>, usize, bool) {
    let ell = dims.ell as i64;
    let lh = dims.horizon;
    let past = meas.slice(a - ell - 1, a - 1).unwrap();
    let fut = meas.slice(a - ell - 1, a + lh as i64 - 1).unwrap();
    let y_last = past.y[(0, dims.ell)];
    let mut y_future = vec![y_last; lh];
    let mut dy = vec![0.0; lh];
    let mut iterations = 0;
    let mut converged = false;
    let mut prev: Option<Vec<f64>> = None;
    while iterations < max_iter {
        iterations += 1;
        let mut y_full = DMatrix::zeros(1, dims.ell + 1 + lh);
        y_full.view_mut((0, 0), (1, dims.ell + 1)).copy_from(&past.y);
        for t in 0..lh {
            y_full[(0, dims.ell + 1 + t)] = y_future[t];
        }
        let traj = Trajectory::new(fut.u.clone(), y_full, 0).unwrap();
        dy = predict(&traj);
        let mut level = y_last;
        for t in 0..lh {
            level += dy[t];
            y_future[t] = theta * level + (1.0 - theta) * y_future[t];
        }
        if let Some(p) = &prev {
            let step = dy
                .iter()
                .zip(p.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            if step <= 1e-7 {
                converged = true;
                break;
            }
        }
        prev = Some(dy.clone());
    }
    (dy, iterations, converged)
}

fn main() {
    let sys = NlSystem::example();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let dims = Dims::uniform(1, 1, 2, 10, 899).unwrap();

    for seed in [1u64, 2, 3] {
        let train = generate_trajectory(&sys, 899, &input, 0.1, seed).unwrap();
        let test_meas = generate_trajectory(&sys, 899, &input, 0.1, seed + 1000).unwrap();
        let test_clean = generate_trajectory(&sys, 899, &input, 0.0, seed + 1000).unwrap();
        let data = build_data_matrices(&train, &dims).unwrap();
        let udata = UnstructuredData::velocity(&data).unwrap();
        let anchors = anchors_for(&test_meas, &dims);
        println!("== seed {seed} ==");

        // True-system rollout floors from noisy and clean initial levels.
        for (label, src) in [("floor-noisy", &test_meas), ("floor-clean", &test_clean)] {
            let (mut sq, mut n) = (0.0, 0);
            for &a in &anchors {
                let y_past = DMatrix::from_row_slice(
                    1,
                    2,
                    &[src.y_at(a - 1).unwrap()[0], src.y_at(a - 2).unwrap()[0]],
                );
                let u_past = DMatrix::from_row_slice(
                    1,
                    2,
                    &[src.u_at(a - 1).unwrap()[0], src.u_at(a - 2).unwrap()[0]],
                );
                let fut = test_meas.slice(a, a + dims.horizon as i64 - 1).unwrap();
                let sim = simulate_primal(&sys, &fut.u, &History { y_past, u_past }).unwrap();
                let mut prev_level = src.y_at(a - 1).unwrap()[0];
                for t in 1..=dims.horizon {
                    let pred_dy = sim[(0, t - 1)] - prev_level;
                    prev_level = sim[(0, t - 1)];
                    sq += (pred_dy - truth_at(&test_clean, a, t)).powi(2);
                    n += 1;
                }
            }
            println!("  {label}: {:.4}", (sq / n as f64).sqrt());
        }

        let kernel_s = KernelSpec::rbf(10.0).unwrap();
        let gram_s = effective_gram(&kernel_s, &data).unwrap();
        let ps = FittedPredictor::fit_with_gram(&data, kernel_s, 1e-3, &gram_s).unwrap();
        let kernel_u = KernelSpec::rbf(40.11).unwrap();
        let gram_u = plain_gram(&kernel_u, &udata.z).unwrap();
        let pu = UnstructuredPredictor::fit_with_gram(&udata, kernel_u, 10.0, &gram_u).unwrap();

        for theta in [1.0, 0.5, 0.25] {
            let (mut sq_s, mut sq_u, mut n) = (0.0, 0.0, 0);
            let (mut it_s, mut cv_s, mut it_u, mut cv_u) = (0, 0, 0, 0);
            for &a in &anchors {
                let (dy_s, i_s, c_s) = damped(&test_meas, a, &dims, theta, 60, |traj| {
                    let q = QueryWindow::from_trajectory(traj, dims.ell as i64 + 1, &dims)
                        .unwrap();
                    ps.predict(&q).unwrap().iter().copied().collect()
                });
                let (dy_u, i_u, c_u) = damped(&test_meas, a, &dims, theta, 60, |traj| {
                    let zq = unstructured_query(
                        UnstructuredVariant::Velocity,
                        &dims,
                        traj,
                        dims.ell as i64 + 1,
                    )
                    .unwrap();
                    pu.predict(&zq).unwrap().iter().copied().collect()
                });
                it_s += i_s;
                cv_s += c_s as usize;
                it_u += i_u;
                cv_u += c_u as usize;
                for t in 1..=dims.horizon {
                    let truth = truth_at(&test_clean, a, t);
                    sq_s += (dy_s[t - 1] - truth).powi(2);
                    sq_u += (dy_u[t - 1] - truth).powi(2);
                    n += 1;
                }
            }
            let m = n as f64;
            println!(
                "  theta {theta:>4.2}: structured {:.4} (it {:.1} conv {}%)  unstructured {:.4} (it {:.1} conv {}%)",
                (sq_s / m).sqrt(),
                it_s as f64 / 100.0,
                cv_s,
                (sq_u / m).sqrt(),
                it_u as f64 / 100.0,
                cv_u
            );
        }
    }
}
