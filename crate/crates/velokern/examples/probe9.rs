//! Scratch diagnostic: full benchmark pipeline, spec-native ops only
//! (grid search defaults + fixed-point rollout defaults), 10 seeds (temporary).

use velokern::harness::{generate_trajectory, InputSpec};
use velokern::hyperopt::{grid_search_structured, grid_search_unstructured, GridSpec};
use velokern::kernels::KernelSpec;
use velokern::regression::{
    iterative_w_predict, iterative_w_predict_unstructured, unstructured_query, FittedPredictor,
    IterativeOptions, PrimalQueryContext, QueryWindow, UnstructuredData, UnstructuredPredictor,
    UnstructuredVariant,
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
    let opts = IterativeOptions::default();
    let grid = GridSpec::default();

    let (mut wins, mut sum_s, mut sum_u) = (0usize, 0.0f64, 0.0f64);
    for seed in 1u64..=10 {
        let t0 = std::time::Instant::now();
        let train = generate_trajectory(&sys, 899, &input, 0.1, seed).unwrap();
        let test_meas = generate_trajectory(&sys, 899, &input, 0.1, seed + 1000).unwrap();
        let test_clean = generate_trajectory(&sys, 899, &input, 0.0, seed + 1000).unwrap();
        let data = build_data_matrices(&train, &dims).unwrap();
        let udata = UnstructuredData::velocity(&data).unwrap();
        let anchors = anchors_for(&test_meas, &dims);

        let gs = grid_search_structured(&data, &KernelSpec::rbf(1.0).unwrap(), &grid).unwrap();
        let bs = gs.best.unwrap();
        let gu =
            grid_search_unstructured(&udata, &KernelSpec::rbf(1.0).unwrap(), &grid).unwrap();
        let bu = gu.best.unwrap();

        let ks = KernelSpec::rbf(bs.sigma).unwrap();
        let ps = FittedPredictor::fit(&data, ks, bs.gamma).unwrap();
        let ku = KernelSpec::rbf(bu.sigma).unwrap();
        let pu = UnstructuredPredictor::fit(&udata, ku, bu.gamma).unwrap();

        let (mut sq_s, mut sq_u, mut sq_s_tf, mut sq_u_tf, mut n) = (0.0, 0.0, 0.0, 0.0, 0);
        let (mut cv_s, mut cv_u) = (0, 0);
        for &a in &anchors {
            let ctx = PrimalQueryContext::from_trajectory(&test_meas, a, &dims).unwrap();
            let rs = iterative_w_predict(&ps, &ctx, opts).unwrap();
            let ru = iterative_w_predict_unstructured(&pu, &ctx, opts).unwrap();
            cv_s += rs.converged as usize;
            cv_u += ru.converged as usize;
            let q = QueryWindow::from_trajectory(&test_meas, a, &dims).unwrap();
            let tf_s = ps.predict(&q).unwrap();
            let zq =
                unstructured_query(UnstructuredVariant::Velocity, &dims, &test_meas, a).unwrap();
            let tf_u = pu.predict(&zq).unwrap();
            for t in 1..=dims.horizon {
                let truth = truth_at(&test_clean, a, t);
                sq_s += (rs.dy[t - 1] - truth).powi(2);
                sq_u += (ru.dy[t - 1] - truth).powi(2);
                sq_s_tf += (tf_s[t - 1] - truth).powi(2);
                sq_u_tf += (tf_u[t - 1] - truth).powi(2);
                n += 1;
            }
        }
        let m = n as f64;
        let (r_s, r_u) = ((sq_s / m).sqrt(), (sq_u / m).sqrt());
        sum_s += r_s;
        sum_u += r_u;
        if r_s < r_u {
            wins += 1;
        }
        println!(
            "seed {seed:>2}: S sel ({:>6.2},{:>8.1}) it {:.4} tf {:.4} cv {cv_s}% | U sel ({:>6.2},{:>8.1}) it {:.4} tf {:.4} cv {cv_u}% | {} [{:.1}s]",
            bs.sigma,
            bs.gamma,
            r_s,
            (sq_s_tf / m).sqrt(),
            bu.sigma,
            bu.gamma,
            r_u,
            (sq_u_tf / m).sqrt(),
            if r_s < r_u { "S" } else { "U" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "wins {wins}/10  mean S {:.4}  mean U {:.4}  margin {:.1}%",
        sum_s / 10.0,
        sum_u / 10.0,
        100.0 * (1.0 - sum_s / sum_u)
    );
}
