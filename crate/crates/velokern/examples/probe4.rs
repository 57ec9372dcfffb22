//! Scratch diagnostic: from-first-principles structured Gram (temporary).

use nalgebra::{DMatrix, DVector};
use velokern::harness::{generate_trajectory, InputSpec};
use velokern::velocity::NlSystem;

const ELL: usize = 2;
const L: usize = 10;

struct Cols {
    head: Vec<DVector<f64>>, // 4: dy(a-2), dy(a-1), du(a-2), du(a-1)
    du: Vec<DVector<f64>>,   // L
    y: Vec<DVector<f64>>,    // L targets
    w: Vec<DMatrix<f64>>,    // 7 x L
}

fn build(u: &[f64], y: &[f64], anchors: &[usize]) -> Cols {
    let dy = |k: usize| y[k] - y[k - 1];
    let du = |k: usize| u[k] - u[k - 1];
    let w_at = |k: usize| {
        DVector::from_column_slice(&[
            y[k - 1], y[k - 2], y[k - 3], u[k], u[k - 1], u[k - 2], u[k - 3],
        ])
    };
    let mut c = Cols {
        head: vec![],
        du: vec![],
        y: vec![],
        w: vec![],
    };
    for &a in anchors {
        c.head.push(DVector::from_column_slice(&[
            dy(a - 2), dy(a - 1), du(a - 2), du(a - 1),
        ]));
        c.du.push(DVector::from_fn(L, |t, _| du(a + t)));
        c.y.push(DVector::from_fn(L, |t, _| dy(a + t)));
        let mut wm = DMatrix::zeros(7, L);
        for t in 0..L {
            wm.set_column(t, &w_at(a + t));
        }
        c.w.push(wm);
    }
    c
}

/// Block scalars for one pair of windows; `first_full` selects the variant
/// where du(1) shares the head product (true) vs skips step 1 (false).
fn scalars(wi: &DMatrix<f64>, wj: &DMatrix<f64>, sigma: f64, first_full: bool) -> [f64; L + 1] {
    let mut suffix = [1.0; L + 1];
    for t in (0..L).rev() {
        let d2 = (wi.column(t) - wj.column(t)).norm_squared();
        suffix[t] = suffix[t + 1] * (1.0 + (-d2 / (sigma * sigma)).exp());
    }
    let mut s = [0.0; L + 1];
    s[0] = suffix[0];
    s[1] = if first_full { suffix[0] } else { suffix[1] };
    for m in 2..=L {
        s[m] = suffix[m - 1];
    }
    s
}

fn gram_entry(c: &Cols, d: &Cols, i: usize, j: usize, sigma: f64, first_full: bool) -> f64 {
    let s = scalars(&c.w[i], &d.w[j], sigma, first_full);
    let mut g = s[0] * c.head[i].dot(&d.head[j]);
    for m in 1..=L {
        g += s[m] * c.du[i][m - 1] * d.du[j][m - 1];
    }
    g
}

fn main() {
    let sys = NlSystem::example();
    let input = InputSpec {
        mean: 0.0,
        variance: 1.0,
    };
    let train = generate_trajectory(&sys, 899, &input, 0.0, 77).unwrap();
    let test = generate_trajectory(&sys, 899, &input, 0.0, 1077).unwrap();
    let ut: Vec<f64> = train.u.row(0).iter().cloned().collect();
    let yt: Vec<f64> = train.y.row(0).iter().cloned().collect();
    let us: Vec<f64> = test.u.row(0).iter().cloned().collect();
    let ys: Vec<f64> = test.y.row(0).iter().cloned().collect();

    let n = 899;
    let anchors_train: Vec<usize> = (ELL + 1..=n - L + 1 - 1 + 1).collect(); // a..a+L-1 <= n
    let nc = anchors_train.len();
    println!("scratch N_c = {nc}");
    let tcols = build(&ut, &yt, &anchors_train);
    let qall: Vec<usize> = (ELL + 1..=n - L + 1).collect();
    let anchors_q: Vec<usize> = (0..100).map(|i| qall[i * qall.len() / 100]).collect();
    let qcols = build(&us, &ys, &anchors_q);

    for first_full in [true, false] {
        println!("-- du(1) shares head product: {first_full}");
        for sigma in [6.0, 10.0, 16.0, 25.97, 40.11] {
            let mut g = DMatrix::zeros(nc, nc);
            for i in 0..nc {
                for j in i..nc {
                    let v = gram_entry(&tcols, &tcols, i, j, sigma, first_full);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            let ymat = {
                let mut m = DMatrix::zeros(L, nc);
                for i in 0..nc {
                    m.set_column(i, &tcols.y[i]);
                }
                m
            };
            let row: Vec<String> = [1e-3, 1e-2, 1.0, 123.3]
                .iter()
                .map(|&gamma| {
                    let m = &g + DMatrix::identity(nc, nc) / gamma;
                    let chol = nalgebra::linalg::Cholesky::new(m).unwrap();
                    let a_dual = chol.solve(&ymat.transpose()).transpose();
                    let (mut sq, mut cnt) = (0.0, 0usize);
                    for q in 0..anchors_q.len() {
                        let mut k = DVector::zeros(nc);
                        for i in 0..nc {
                            k[i] = gram_entry(&tcols, &qcols, i, q, sigma, first_full);
                        }
                        let pred = &a_dual * k;
                        for t in 0..L {
                            sq += (pred[t] - qcols.y[q][t]).powi(2);
                            cnt += 1;
                        }
                    }
                    format!("{:.4}", (sq / cnt as f64).sqrt())
                })
                .collect();
            println!("  sigma {sigma:>6.2}: {}", row.join("  "));
        }
    }
}
