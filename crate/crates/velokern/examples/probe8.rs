//! Scratch diagnostic: causal sweep scheduling refinement (temporary).

use nalgebra::DMatrix;
use velokern::harness::{generate_trajectory, InputSpec};
use velokern::kernels::{effective_gram, KernelSpec};
use velokern::regression::{
    plain_gram, unstructured_query, FittedPredictor, QueryWindow, UnstructuredData,
    UnstructuredPredictor, UnstructuredVariant,
};
use velokern::signals::{build_data_matrices, Dims, Trajectory};
use velokern::velocity::NlSystem;

fn anchors_for(test: &Trajectory, dims: &Dims) -> Vec<i64> {
    let all = QueryWindow::feasible_anchors(test, dims);
    (0..100).map(|i| all[i * all.len() / 100]).collect()
}

fn truth_at(clean: &Trajectory, a: i64, t: usize) -> f64 {
    (clean.y_at(a + t as i64 - 1).unwrap() - clean.y_at(a + t as i64 - 2).unwrap())[0]
}

/// L passes; pass p re-predicts all steps from the current level estimates
/// and accepts step p's difference, pinning its level for later passes.
fn causal_sweep<F: FnMut(&Trajectory) -> Vec<f64>>(
    meas: &Trajectory,
    a: i64,
    dims: &Dims,
    mut predict: F,
) -> Vec<f64> {
    let ell = dims.ell as i64;
    let lh = dims.horizon;
    let past = meas.slice(a - ell - 1, a - 1).unwrap();
    let fut = meas.slice(a - ell - 1, a + lh as i64 - 1).unwrap();
    let y_last = past.y[(0, dims.ell)];
    let mut y_future = vec![y_last; lh];
    let mut accepted = vec![0.0; lh];
    for p in 0..lh {
        let mut y_full = DMatrix::zeros(1, dims.ell + 1 + lh);
        y_full.view_mut((0, 0), (1, dims.ell + 1)).copy_from(&past.y);
        for t in 0..lh {
            y_full[(0, dims.ell + 1 + t)] = y_future[t];
        }
        let traj = Trajectory::new(fut.u.clone(), y_full, 0).unwrap();
        let dy = predict(&traj);
        accepted[p] = dy[p];
        let base = if p == 0 { y_last } else { y_future[p - 1] };
        let level = base + dy[p];
        // Pin the accepted level; hold later levels at the new frontier.
        for t in p..lh {
            y_future[t] = level;
        }
    }
    accepted
}

fn main() {
    let sys = NlSystem::example();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let dims = Dims::uniform(1, 1, 2, 10, 899).unwrap();
    let sigmas = [2.5, 4.0, 6.0, 10.0, 16.0, 25.97, 40.11];
    let gammas = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 123.3, 1474.5];

    for seed in [1u64, 2, 3] {
        let train = generate_trajectory(&sys, 899, &input, 0.1, seed).unwrap();
        let test = generate_trajectory(&sys, 899, &input, 0.0, seed + 1000).unwrap();
        let data = build_data_matrices(&train, &dims).unwrap();
        let udata = UnstructuredData::velocity(&data).unwrap();
        let anchors = anchors_for(&test, &dims);
        println!("== seed {seed} ==");

        let mut rows_s: Vec<(f64, f64, f64)> = Vec::new();
        for &s in &sigmas {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = effective_gram(&kernel, &data).unwrap();
            for &g in &gammas {
                let p =
                    FittedPredictor::fit_with_gram(&data, kernel.clone(), g, &gram).unwrap();
                let (mut sq, mut n) = (0.0, 0);
                for &a in &anchors {
                    let dy = causal_sweep(&test, a, &dims, |traj| {
                        let q = QueryWindow::from_trajectory(traj, dims.ell as i64 + 1, &dims)
                            .unwrap();
                        p.predict(&q).unwrap().iter().copied().collect()
                    });
                    for t in 1..=dims.horizon {
                        sq += (dy[t - 1] - truth_at(&test, a, t)).powi(2);
                        n += 1;
                    }
                }
                rows_s.push((s, g, (sq / n as f64).sqrt()));
            }
        }
        rows_s.sort_by(|a, b| a.2.total_cmp(&b.2));
        println!("structured top-5 by causal-sweep RMSE:");
        for r in rows_s.iter().take(5) {
            println!("  {:>6.2} {:>8.1e}  {:.4}", r.0, r.1, r.2);
        }

        let mut rows_u: Vec<(f64, f64, f64)> = Vec::new();
        for &s in &sigmas {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = plain_gram(&kernel, &udata.z).unwrap();
            for &g in &gammas {
                let p =
                    UnstructuredPredictor::fit_with_gram(&udata, kernel.clone(), g, &gram)
                        .unwrap();
                let (mut sq, mut n) = (0.0, 0);
                for &a in &anchors {
                    let dy = causal_sweep(&test, a, &dims, |traj| {
                        let zq = unstructured_query(
                            UnstructuredVariant::Velocity,
                            &dims,
                            traj,
                            dims.ell as i64 + 1,
                        )
                        .unwrap();
                        p.predict(&zq).unwrap().iter().copied().collect()
                    });
                    for t in 1..=dims.horizon {
                        sq += (dy[t - 1] - truth_at(&test, a, t)).powi(2);
                        n += 1;
                    }
                }
                rows_u.push((s, g, (sq / n as f64).sqrt()));
            }
        }
        rows_u.sort_by(|a, b| a.2.total_cmp(&b.2));
        println!("unstructured top-5 by causal-sweep RMSE:");
        for r in rows_u.iter().take(5) {
            println!("  {:>6.2} {:>8.1e}  {:.4}", r.0, r.1, r.2);
        }
    }
}
