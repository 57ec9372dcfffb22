//! Scratch diagnostic for the benchmark comparison (temporary).

use velokern::harness::{generate_trajectory, InputSpec};
use velokern::kernels::{effective_gram, KernelSpec};
use velokern::regression::{
    plain_gram, unstructured_query, FittedPredictor, QueryWindow, UnstructuredData,
    UnstructuredPredictor, UnstructuredVariant,
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
    let sigmas = [1.5, 2.5, 4.0, 6.0, 10.0, 16.0, 25.97, 40.11];
    let gammas = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 123.3, 1474.5];

    for seed in [1u64, 2u64] {
        let train = generate_trajectory(&sys, 899, &input, 0.1, seed).unwrap();
        let test = generate_trajectory(&sys, 899, &input, 0.0, seed + 1000).unwrap();
        let data = build_data_matrices(&train, &dims).unwrap();
        let anchors = QueryWindow::feasible_anchors(&test, &dims);

        println!("== seed {seed} structured grid (rows sigma, cols gamma {gammas:?}):");
        for &s in &sigmas {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = effective_gram(&kernel, &data).unwrap();
            let row: Vec<String> = gammas
                .iter()
                .map(|&g| {
                    let p =
                        FittedPredictor::fit_with_gram(&data, kernel.clone(), g, &gram).unwrap();
                    let (mut sq, mut n) = (0.0, 0);
                    for i in 0..100 {
                        let a = anchors[i * anchors.len() / 100];
                        let q = QueryWindow::from_trajectory(&test, a, &dims).unwrap();
                        let dy = p.predict(&q).unwrap();
                        for t in 1..=dims.horizon {
                            let truth = (test.y_at(a + t as i64 - 1).unwrap()
                                - test.y_at(a + t as i64 - 2).unwrap())[0];
                            sq += (dy[t - 1] - truth).powi(2);
                            n += 1;
                        }
                    }
                    format!("{:.4}", (sq / n as f64).sqrt())
                })
                .collect();
            println!("  sigma {s:>6.2}: {}", row.join("  "));
        }

        let udata = UnstructuredData::velocity(&data).unwrap();
        println!("== seed {seed} unstructured grid:");
        for &s in &sigmas {
            let kernel = KernelSpec::rbf(s).unwrap();
            let gram = plain_gram(&kernel, &udata.z).unwrap();
            let row: Vec<String> = gammas
                .iter()
                .map(|&g| {
                    let p = UnstructuredPredictor::fit_with_gram(&udata, kernel.clone(), g, &gram)
                        .unwrap();
                    let (mut sq, mut n) = (0.0, 0);
                    for i in 0..100 {
                        let a = anchors[i * anchors.len() / 100];
                        let zq =
                            unstructured_query(UnstructuredVariant::Velocity, &dims, &test, a)
                                .unwrap();
                        let dy = p.predict(&zq).unwrap();
                        for t in 1..=dims.horizon {
                            let truth = (test.y_at(a + t as i64 - 1).unwrap()
                                - test.y_at(a + t as i64 - 2).unwrap())[0];
                            sq += (dy[t - 1] - truth).powi(2);
                            n += 1;
                        }
                    }
                    format!("{:.4}", (sq / n as f64).sqrt())
                })
                .collect();
            println!("  sigma {s:>6.2}: {}", row.join("  "));
        }
    }
}
