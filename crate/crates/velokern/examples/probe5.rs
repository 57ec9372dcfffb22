//! Scratch diagnostic: teacher-forced vs self-scheduled held-out error
//! for both predictor families (temporary).

use velokern::harness::{generate_trajectory, InputSpec};
use velokern::kernels::{effective_gram, KernelSpec};
use velokern::regression::{
    iterative_w_predict, iterative_w_predict_unstructured, plain_gram, unstructured_query,
    FittedPredictor, IterativeOptions, PrimalQueryContext, QueryWindow, UnstructuredData,
    UnstructuredPredictor, UnstructuredVariant,
};
use velokern::signals::{build_data_matrices, Dims};
use velokern::velocity::NlSystem;

fn anchors_for(test: &velokern::signals::Trajectory, dims: &Dims) -> Vec<i64> {
    let all = QueryWindow::feasible_anchors(test, dims);
    (0..100).map(|i| all[i * all.len() / 100]).collect()
}

fn truth_at(clean: &velokern::signals::Trajectory, a: i64, t: usize) -> f64 {
    (clean.y_at(a + t as i64 - 1).unwrap() - clean.y_at(a + t as i64 - 2).unwrap())[0]
}

fn main() {
    let sys = NlSystem::example();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let dims = Dims::uniform(1, 1, 2, 10, 899).unwrap();
    let opts_one = IterativeOptions {
        tol: 1e-9,
        max_iter: 1,
    };
    let opts_full = IterativeOptions {
        tol: 1e-7,
        max_iter: 30,
    };

    for seed in [1u64, 2, 3] {
        let train = generate_trajectory(&sys, 899, &input, 0.1, seed).unwrap();
        let test_meas = generate_trajectory(&sys, 899, &input, 0.1, seed + 1000).unwrap();
        let test_clean = generate_trajectory(&sys, 899, &input, 0.0, seed + 1000).unwrap();
        let data = build_data_matrices(&train, &dims).unwrap();
        let udata = UnstructuredData::velocity(&data).unwrap();
        let anchors = anchors_for(&test_meas, &dims);
        println!("== seed {seed} ==");

        println!("structured (sigma gamma | tf | frozen | selfsched iters conv%):");
        for (s, g) in [(40.11, 123.3), (25.97, 123.3), (10.0, 1e-3), (6.0, 1e-2)] {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = effective_gram(&kernel, &data).unwrap();
            let p = FittedPredictor::fit_with_gram(&data, kernel, g, &gram).unwrap();
            let (mut sq_tf, mut sq_fr, mut sq_ss, mut n) = (0.0, 0.0, 0.0, 0);
            let (mut iters, mut conv) = (0usize, 0usize);
            for &a in &anchors {
                let q = QueryWindow::from_trajectory(&test_meas, a, &dims).unwrap();
                let dy_tf = p.predict(&q).unwrap();
                let ctx = PrimalQueryContext::from_trajectory(&test_meas, a, &dims).unwrap();
                let fr = iterative_w_predict(&p, &ctx, opts_one).unwrap();
                let ss = iterative_w_predict(&p, &ctx, opts_full).unwrap();
                iters += ss.iterations;
                conv += ss.converged as usize;
                for t in 1..=dims.horizon {
                    let truth = truth_at(&test_clean, a, t);
                    sq_tf += (dy_tf[t - 1] - truth).powi(2);
                    sq_fr += (fr.dy[t - 1] - truth).powi(2);
                    sq_ss += (ss.dy[t - 1] - truth).powi(2);
                    n += 1;
                }
            }
            let m = n as f64;
            println!(
                "  {s:>6.2} {g:>8.1e} | {:.4} | {:.4} | {:.4}  it {:.1} conv {}%",
                (sq_tf / m).sqrt(),
                (sq_fr / m).sqrt(),
                (sq_ss / m).sqrt(),
                iters as f64 / anchors.len() as f64,
                conv
            );
        }

        println!("unstructured (sigma gamma | tf | frozen | selfsched iters conv%):");
        for (s, g) in [(25.97, 1474.5), (40.11, 10.0), (40.11, 123.3)] {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = plain_gram(&kernel, &udata.z).unwrap();
            let p = UnstructuredPredictor::fit_with_gram(&udata, kernel, g, &gram).unwrap();
            let (mut sq_tf, mut sq_fr, mut sq_ss, mut n) = (0.0, 0.0, 0.0, 0);
            let (mut iters, mut conv) = (0usize, 0usize);
            for &a in &anchors {
                let zq =
                    unstructured_query(UnstructuredVariant::Velocity, &dims, &test_meas, a)
                        .unwrap();
                let dy_tf = p.predict(&zq).unwrap();
                let ctx = PrimalQueryContext::from_trajectory(&test_meas, a, &dims).unwrap();
                let fr = iterative_w_predict_unstructured(&p, &ctx, opts_one).unwrap();
                let ss = iterative_w_predict_unstructured(&p, &ctx, opts_full).unwrap();
                iters += ss.iterations;
                conv += ss.converged as usize;
                for t in 1..=dims.horizon {
                    let truth = truth_at(&test_clean, a, t);
                    sq_tf += (dy_tf[t - 1] - truth).powi(2);
                    sq_fr += (fr.dy[t - 1] - truth).powi(2);
                    sq_ss += (ss.dy[t - 1] - truth).powi(2);
                    n += 1;
                }
            }
            let m = n as f64;
            println!(
                "  {s:>6.2} {g:>8.1e} | {:.4} | {:.4} | {:.4}  it {:.1} conv {}%",
                (sq_tf / m).sqrt(),
                (sq_fr / m).sqrt(),
                (sq_ss / m).sqrt(),
                iters as f64 / anchors.len() as f64,
                conv
            );
        }
    }
}
