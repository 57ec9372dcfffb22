//! Scratch diagnostic: per-step test RMSE (temporary).

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

    // y-range diagnostics.
    let ymax = train.y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut wmax: f64 = 0.0;
    for i in 0..data.w_l.width() {
        let w = data.w_l.entries.column(i);
        wmax = wmax.max(w.amax());
    }
    println!("train |y|_max = {ymax:.2}, |w|_max = {wmax:.2}");

    for (s, g) in [(6.0, 1e3), (10.0, 1e3), (40.11, 123.3)] {
        let kernel = KernelSpec::rbf(s).unwrap();
        let gram = effective_gram(&kernel, &data).unwrap();
        let p = FittedPredictor::fit_with_gram(&data, kernel.clone(), g, &gram).unwrap();
        let mut sq = vec![0.0; dims.horizon];
        let mut n = 0usize;
        for i in 0..100 {
            let a = anchors[i * anchors.len() / 100];
            let q = QueryWindow::from_trajectory(&test, a, &dims).unwrap();
            let dy = p.predict(&q).unwrap();
            for t in 1..=dims.horizon {
                let truth = (test.y_at(a + t as i64 - 1).unwrap()
                    - test.y_at(a + t as i64 - 2).unwrap())[0];
                sq[t - 1] += (dy[t - 1] - truth).powi(2);
            }
            n += 1;
        }
        let per: Vec<String> = sq.iter().map(|v| format!("{:.3}", (v / n as f64).sqrt())).collect();
        println!("structured sigma={s} gamma={g}: per-step rmse {}", per.join(" "));
    }
    let udata = UnstructuredData::velocity(&data).unwrap();
    for (s, g) in [(16.0, 1e3), (25.97, 1474.5)] {
        let kernel = KernelSpec::rbf(s).unwrap();
        let gram = plain_gram(&kernel, &udata.z).unwrap();
        let p = UnstructuredPredictor::fit_with_gram(&udata, kernel.clone(), g, &gram).unwrap();
        let mut sq = vec![0.0; dims.horizon];
        let mut n = 0usize;
        for i in 0..100 {
            let a = anchors[i * anchors.len() / 100];
            let zq = unstructured_query(UnstructuredVariant::Velocity, &dims, &test, a).unwrap();
            let dy = p.predict(&zq).unwrap();
            for t in 1..=dims.horizon {
                let truth = (test.y_at(a + t as i64 - 1).unwrap()
                    - test.y_at(a + t as i64 - 2).unwrap())[0];
                sq[t - 1] += (dy[t - 1] - truth).powi(2);
            }
            n += 1;
        }
        let per: Vec<String> = sq.iter().map(|v| format!("{:.3}", (v / n as f64).sqrt())).collect();
        println!("unstructured sigma={s} gamma={g}: per-step rmse {}", per.join(" "));
    }
}
