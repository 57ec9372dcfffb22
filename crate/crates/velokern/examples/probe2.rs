//! Scratch diagnostic: noiseless-train generalization (temporary).

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
    let train = generate_trajectory(&sys, 899, &input, 0.0, 77).unwrap();
    let test = generate_trajectory(&sys, 899, &input, 0.0, 1077).unwrap();
    let data = build_data_matrices(&train, &dims).unwrap();
    let anchors = QueryWindow::feasible_anchors(&test, &dims);

    let sigmas = [2.5, 4.0, 6.0, 10.0, 16.0];
    let gammas = [1e-2, 1.0, 1e3, 1e6];
    println!("structured noiseless train->fresh test (train_rmse | test_rmse):");
    for &s in &sigmas {
        let kernel = KernelSpec::rbf(s).unwrap();
        let gram = effective_gram(&kernel, &data).unwrap();
        let row: Vec<String> = gammas
            .iter()
            .map(|&g| {
                let p = FittedPredictor::fit_with_gram(&data, kernel.clone(), g, &gram).unwrap();
                let tr = p.training_rmse().unwrap();
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
                format!("{tr:.2e}|{:.4}", (sq / n as f64).sqrt())
            })
            .collect();
        println!("  sigma {s:>6.2}: {}", row.join("  "));
    }
    let udata = UnstructuredData::velocity(&data).unwrap();
    println!("unstructured noiseless train->fresh test (test_rmse):");
    for &s in &sigmas {
        let kernel = KernelSpec::rbf(s).unwrap();
        let gram = plain_gram(&kernel, &udata.z).unwrap();
        let row: Vec<String> = gammas
            .iter()
            .map(|&g| {
                let p =
                    UnstructuredPredictor::fit_with_gram(&udata, kernel.clone(), g, &gram).unwrap();
                let (mut sq, mut n) = (0.0, 0);
                for i in 0..100 {
                    let a = anchors[i * anchors.len() / 100];
                    let zq = unstructured_query(UnstructuredVariant::Velocity, &dims, &test, a)
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
