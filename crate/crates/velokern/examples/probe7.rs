//! Scratch diagnostic: frozen-pass rollout on a clean held-out trajectory,
//! per-method hyperparameter grids (temporary).

use velokern::harness::{generate_trajectory, InputSpec};
use velokern::kernels::{effective_gram, KernelSpec};
use velokern::regression::{
    iterative_w_predict, iterative_w_predict_unstructured, plain_gram, unstructured_query,
    FittedPredictor, IterativeOptions, PrimalQueryContext, QueryWindow, UnstructuredData,
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

fn main() {
    let sys = NlSystem::example();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let dims = Dims::uniform(1, 1, 2, 10, 899).unwrap();
    let frozen = IterativeOptions {
        tol: 1e-9,
        max_iter: 1,
    };
    let sigmas = [2.5, 4.0, 6.0, 10.0, 16.0, 25.97, 40.11];
    let gammas = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 123.3, 1474.5];

    for seed in [1u64, 2, 3] {
        let train = generate_trajectory(&sys, 899, &input, 0.1, seed).unwrap();
        let test = generate_trajectory(&sys, 899, &input, 0.0, seed + 1000).unwrap();
        let data = build_data_matrices(&train, &dims).unwrap();
        let udata = UnstructuredData::velocity(&data).unwrap();
        let anchors = anchors_for(&test, &dims);
        println!("== seed {seed} ==");

        let mut rows_s: Vec<(f64, f64, f64, f64)> = Vec::new();
        for &s in &sigmas {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = effective_gram(&kernel, &data).unwrap();
            for &g in &gammas {
                let p =
                    FittedPredictor::fit_with_gram(&data, kernel.clone(), g, &gram).unwrap();
                let (mut sq_fr, mut sq_tf, mut n) = (0.0, 0.0, 0);
                for &a in &anchors {
                    let ctx = PrimalQueryContext::from_trajectory(&test, a, &dims).unwrap();
                    let fr = iterative_w_predict(&p, &ctx, frozen).unwrap();
                    let q = QueryWindow::from_trajectory(&test, a, &dims).unwrap();
                    let tf = p.predict(&q).unwrap();
                    for t in 1..=dims.horizon {
                        let truth = truth_at(&test, a, t);
                        sq_fr += (fr.dy[t - 1] - truth).powi(2);
                        sq_tf += (tf[t - 1] - truth).powi(2);
                        n += 1;
                    }
                }
                let m = n as f64;
                rows_s.push((s, g, (sq_fr / m).sqrt(), (sq_tf / m).sqrt()));
            }
        }
        rows_s.sort_by(|a, b| a.2.total_cmp(&b.2));
        println!("structured top-5 by frozen RMSE (sigma gamma frozen tf):");
        for r in rows_s.iter().take(5) {
            println!("  {:>6.2} {:>8.1e}  {:.4}  {:.4}", r.0, r.1, r.2, r.3);
        }

        let mut rows_u: Vec<(f64, f64, f64, f64)> = Vec::new();
        for &s in &sigmas {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = plain_gram(&kernel, &udata.z).unwrap();
            for &g in &gammas {
                let p =
                    UnstructuredPredictor::fit_with_gram(&udata, kernel.clone(), g, &gram)
                        .unwrap();
                let (mut sq_fr, mut sq_tf, mut n) = (0.0, 0.0, 0);
                for &a in &anchors {
                    let ctx = PrimalQueryContext::from_trajectory(&test, a, &dims).unwrap();
                    let fr = iterative_w_predict_unstructured(&p, &ctx, frozen).unwrap();
                    let zq =
                        unstructured_query(UnstructuredVariant::Velocity, &dims, &test, a)
                            .unwrap();
                    let tf = p.predict(&zq).unwrap();
                    for t in 1..=dims.horizon {
                        let truth = truth_at(&test, a, t);
                        sq_fr += (fr.dy[t - 1] - truth).powi(2);
                        sq_tf += (tf[t - 1] - truth).powi(2);
                        n += 1;
                    }
                }
                let m = n as f64;
                rows_u.push((s, g, (sq_fr / m).sqrt(), (sq_tf / m).sqrt()));
            }
        }
        rows_u.sort_by(|a, b| a.2.total_cmp(&b.2));
        println!("unstructured top-5 by frozen RMSE (sigma gamma frozen tf):");
        for r in rows_u.iter().take(5) {
            println!("  {:>6.2} {:>8.1e}  {:.4}  {:.4}", r.0, r.1, r.2, r.3);
        }
    }
}
