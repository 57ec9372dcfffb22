//! Scratch diagnostic: refined-vs-known RMSE ratio across kernel widths and
//! ridge strengths (temporary).

use velokern::harness::{generate_trajectory, InputSpec};
use velokern::kernels::KernelSpec;
use velokern::regression::{
    iterative_w_predict, FittedPredictor, IterativeOptions, PrimalQueryContext, QueryWindow,
};
use velokern::signals::{build_data_matrices, Dims};
use velokern::velocity::NlSystem;

fn main() {
    let sys = NlSystem::example();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let dims = Dims::uniform(1, 1, 2, 10, 899).unwrap();
    let opts = IterativeOptions::default();
    for &noise in &[0.02f64, 0.05] {
        for &sigma in &[10.0f64, 17.78, 31.62, 56.23] {
            for &gamma in &[0.1f64, 1.0] {
                let mut ratios = Vec::new();
                for seed in 1u64..=6 {
                    let train = generate_trajectory(&sys, 899, &input, noise, seed).unwrap();
                    let test =
                        generate_trajectory(&sys, 899, &input, noise, seed + 2000).unwrap();
                    let clean =
                        generate_trajectory(&sys, 899, &input, 0.0, seed + 2000).unwrap();
                    let data = build_data_matrices(&train, &dims).unwrap();
                    let pred =
                        FittedPredictor::fit(&data, KernelSpec::rbf(sigma).unwrap(), gamma)
                            .unwrap();
                    let anchors = QueryWindow::feasible_anchors(&test, &dims);
                    let n_eval = 50;
                    let (mut sq_k, mut sq_r, mut n) = (0.0, 0.0, 0usize);
                    for i in 0..n_eval {
                        let a = anchors[i * anchors.len() / n_eval];
                        let q = QueryWindow::from_trajectory(&test, a, &dims).unwrap();
                        let known = pred.predict(&q).unwrap();
                        let ctx = PrimalQueryContext::from_trajectory(&test, a, &dims).unwrap();
                        let r = iterative_w_predict(&pred, &ctx, opts).unwrap();
                        for t in 1..=dims.horizon {
                            let truth = (clean.y_at(a + t as i64 - 1).unwrap()
                                - clean.y_at(a + t as i64 - 2).unwrap())[0];
                            sq_k += (known[t - 1] - truth).powi(2);
                            sq_r += (r.dy[t - 1] - truth).powi(2);
                            n += 1;
                        }
                    }
                    ratios.push(((sq_r / n as f64).sqrt()) / ((sq_k / n as f64).sqrt()));
                }
                let good = ratios.iter().filter(|r| **r <= 2.0).count();
                let line: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
                println!(
                    "noise {noise:.2} sigma {sigma:>6.2} gamma {gamma:>4.1}: ratios [{}] within2x {good}/6",
                    line.join(", ")
                );
            }
        }
    }
}
