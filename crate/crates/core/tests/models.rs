mod common;

use ccasched_core::models::linear::median_squared_residual;
use ccasched_core::models::*;
use ccasched_core::{dataset::TrainTable, Algorithm};
use common::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn linear_data(n: usize, coef: &[f64], noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = uniform_matrix(n, coef.len() - 1, seed);
    let mut r = rng(seed + 1000);
    let y = x
        .iter()
        .map(|row| {
            let z: f64 = r.sample(StandardNormal);
            coef[0] + row.iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>() + noise * z
        })
        .collect();
    (x, y)
}

#[test]
fn ols_matches_normal_equations_solved_by_elimination() {
    let (x, y) = linear_data(50, &[0.5, 1.0, -2.0, 3.0, 0.25, -0.75], 0.3, 7);
    let m = fit_ols(&rows(&x), &y).unwrap();
    let want = ols_oracle(&x, &y);
    assert!((m.intercept - want[0]).abs() < 1e-8);
    for (w, o) in m.weights.iter().zip(&want[1..]) {
        assert!((w - o).abs() < 1e-8, "{w} vs {o}");
    }
}

#[test]
fn ols_residuals_are_orthogonal_to_every_column() {
    let (x, y) = linear_data(50, &[1.0, 2.0, 0.0, -1.0, 4.0, 0.5], 1.0, 11);
    let m = fit_ols(&rows(&x), &y).unwrap();
    let resid: Vec<f64> = x.iter().zip(&y).map(|(r, t)| t - m.predict(r)).collect();
    assert!(resid.iter().sum::<f64>().abs() < 1e-9);
    for j in 0..5 {
        let dot: f64 = resid.iter().zip(&x).map(|(e, r)| e * r[j]).sum();
        assert!(dot.abs() < 1e-9, "column {j}: {dot}");
    }
}

#[test]
fn ols_recovers_noiseless_coefficients() {
    let coef = [-3.0, 1.5, 2.5, -0.5];
    let (x, y) = linear_data(40, &coef, 0.0, 3);
    let m = fit_ols(&rows(&x), &y).unwrap();
    assert!((m.intercept - coef[0]).abs() < 1e-9);
    for (w, c) in m.weights.iter().zip(&coef[1..]) {
        assert!((w - c).abs() < 1e-9);
    }
}

#[test]
fn lms_ignores_gross_outliers_that_drag_ols() {
    let mut r = rng(5);
    let n = 100;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64 * 10.0]).collect();
    let mut y: Vec<f64> = x
        .iter()
        .map(|v| 2.0 * v[0] + 1.0 + 0.1 * r.sample::<f64, _>(StandardNormal))
        .collect();
    // 30% of the points, all at the high end, pulled far down
    for t in y.iter_mut().skip(70) {
        *t -= 40.0;
    }
    let lms = fit_lms(&rows(&x), &y, &LmsParams::default()).unwrap();
    let ols = fit_ols(&rows(&x), &y).unwrap();
    assert!(
        (lms.weights[0] - 2.0).abs() < 0.05,
        "LMS slope {}",
        lms.weights[0]
    );
    assert!(
        (ols.weights[0] - 2.0).abs() > 0.5,
        "OLS slope {}",
        ols.weights[0]
    );
}

#[test]
fn lms_on_six_points_matches_a_scan_of_every_pair() {
    let x = vec![
        vec![0.0],
        vec![1.0],
        vec![2.0],
        vec![3.0],
        vec![4.0],
        vec![5.0],
    ];
    let y = [0.1, 1.0, 2.2, 2.9, 9.0, -4.0];
    let fit = fit_lms(&rows(&x), &y, &LmsParams::default()).unwrap();

    let median_sq = |a: f64, b: f64| {
        let mut r: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(v, t)| (t - a - b * v[0]).powi(2))
            .collect();
        r.sort_by(f64::total_cmp);
        (r[2] + r[3]) / 2.0
    };
    let ols = ols_oracle(&x, &y);
    let mut best = median_sq(ols[0], ols[1]);
    for i in 0..6 {
        for j in i + 1..6 {
            let b = (y[j] - y[i]) / (x[j][0] - x[i][0]);
            best = best.min(median_sq(y[i] - b * x[i][0], b));
        }
    }
    let got = median_squared_residual(&fit, &rows(&x), &y);
    assert!((got - best).abs() < 1e-12, "{got} vs {best}");
}

#[test]
fn mlp_gradient_matches_central_differences() {
    let x = vec![vec![0.1, 0.9], vec![0.5, 0.3], vec![0.8, 0.2]];
    let y = [0.3, 0.7, 0.1];
    let net = Mlp::random(2, 3, 9);
    let (_, grad) = net.loss_and_gradient(&rows(&x), &y);
    let theta = net.params();
    let h = 1e-5;
    for k in 0..theta.len() {
        let mut probe = net.clone();
        let mut t = theta.clone();
        t[k] += h;
        probe.set_params(&t);
        let up = probe.loss_and_gradient(&rows(&x), &y).0;
        t[k] -= 2.0 * h;
        probe.set_params(&t);
        let down = probe.loss_and_gradient(&rows(&x), &y).0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-8);
        assert!(
            rel <= 1e-4,
            "parameter {k}: analytic {} numeric {numeric}",
            grad[k]
        );
    }
}

#[test]
fn mlp_fits_a_product_surface() {
    let x = uniform_matrix(200, 2, 21);
    let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
    let (net, history) = fit_mlp(&rows(&x), &y, &MlpParams::default()).unwrap();
    assert!(history.last().unwrap() <= &history[0]);
    let test = uniform_matrix(200, 2, 22);
    let mse = test
        .iter()
        .map(|r| (net.forward(r) - r[0] * r[1]).powi(2))
        .sum::<f64>()
        / 200.0;
    assert!(mse < 0.01, "test MSE {mse}");
}

#[test]
fn m5_root_split_matches_exhaustive_scan() {
    let x = uniform_matrix(200, 1, 31);
    let y: Vec<f64> = x
        .iter()
        .map(|r| {
            if r[0] < 0.5 {
                10.0 * r[0]
            } else {
                100.0 - 10.0 * r[0]
            }
        })
        .collect();
    let params = M5Params::default();
    let tree = fit_m5(&rows(&x), &y, &params).unwrap();
    let (attr, threshold) = tree.root_split().expect("split");
    let xs: Vec<f64> = x.iter().map(|r| r[0]).collect();
    assert_eq!(attr, 0);
    assert!((threshold - sdr_split_oracle(&xs, &y, params.min_leaf)).abs() < 1e-12);
    assert!((threshold - 0.5).abs() <= max_gap(&xs));
    assert_eq!(tree.n_leaves(), 2);
}

#[test]
fn m5_on_a_linear_target_is_one_least_squares_leaf() {
    let (x, y) = linear_data(120, &[1.0, 3.0, -2.0], 0.0, 41);
    let tree = fit_m5(&rows(&x), &y, &M5Params::default()).unwrap();
    assert_eq!(tree.n_leaves(), 1);
    let ols = fit_ols(&rows(&x), &y).unwrap();
    for r in uniform_matrix(50, 2, 42) {
        assert!((tree.predict(&r) - ols.predict(&r)).abs() < 1e-6);
    }
}

#[test]
fn reptree_step_split_matches_exhaustive_scan() {
    let x = uniform_matrix(150, 1, 51);
    let y: Vec<f64> = x
        .iter()
        .map(|r| if r[0] < 0.3 { 1.0 } else { 5.0 })
        .collect();
    let xs: Vec<f64> = x.iter().map(|r| r[0]).collect();
    let unpruned = RepParams {
        prune: false,
        ..Default::default()
    };
    let tree = fit_reptree(&rows(&x), &y, &unpruned).unwrap();
    let (_, threshold) = tree.root_split().unwrap();
    assert!((threshold - variance_split_oracle(&xs, &y, unpruned.min_leaf)).abs() < 1e-12);
    assert!((threshold - 0.3).abs() <= max_gap(&xs));
    assert_eq!(tree.n_leaves(), 2);

    let pruned = fit_reptree(&rows(&x), &y, &RepParams::default()).unwrap();
    assert_eq!(pruned.n_leaves(), 2);
    assert_eq!(pruned.predict(&[0.1]), 1.0);
    assert_eq!(pruned.predict(&[0.9]), 5.0);
}

#[test]
fn reptree_prunes_pure_noise_to_a_stump() {
    let x = uniform_matrix(300, 3, 61);
    let mut r = rng(62);
    let y: Vec<f64> = (0..300).map(|_| r.sample(StandardNormal)).collect();
    let tree = fit_reptree(&rows(&x), &y, &RepParams::default()).unwrap();
    assert!(tree.depth() <= 1, "depth {}", tree.depth());
}

#[test]
fn every_model_round_trips_with_bit_identical_predictions() {
    let x = uniform_matrix(80, 4, 71);
    let y: Vec<f64> = x
        .iter()
        .map(|r| 1.0 + r[0] * r[1] + (3.0 * r[2]).sin().abs() + r[3])
        .collect();
    let table = TrainTable::from_matrix(x, y).unwrap();
    let probes = uniform_matrix(1000, 4, 72);
    for alg in Algorithm::ALL {
        let p = train(&table, &Hyperparams::default_for(alg)).unwrap();
        let back = Predictor::from_json(&p.to_json()).unwrap();
        for row in &probes {
            let a = p.predict_row(row).unwrap();
            let b = back.predict_row(row).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "{alg}");
        }
    }
}
