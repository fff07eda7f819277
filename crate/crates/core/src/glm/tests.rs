use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn random_design(n: usize, m: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n)
        .map(|i| {
            let signal: f64 = (0..m).map(|j| z[(i, j)] * (j as f64 + 1.0) * 0.3).sum();
            signal + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (z, y)
}

fn with_intercept(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = DMatrix::from_element(z.nrows(), z.ncols() + 1, 1.0);
    x.view_mut((0, 1), z.shape()).copy_from(z);
    x
}

fn drop_row(z: &DMatrix<f64>, y: &[f64], i: usize) -> (DMatrix<f64>, Vec<f64>) {
    let keep: Vec<usize> = (0..z.nrows()).filter(|&r| r != i).collect();
    (z.select_rows(&keep), keep.iter().map(|&r| y[r]).collect())
}

/// Ridge with an unpenalized intercept from the augmented normal equations.
fn ridge_oracle(z: &DMatrix<f64>, y: &[f64], lambda: f64) -> DVector<f64> {
    let x = with_intercept(z);
    let mut a = x.transpose() * &x;
    for j in 1..a.nrows() {
        a[(j, j)] += lambda;
    }
    a.lu().solve(&(x.transpose() * DVector::from_column_slice(y))).unwrap()
}

/// Plain Newton for l2 logistic regression, written independently of the library solver.
fn logistic_oracle(z: &DMatrix<f64>, y: &[f64], lambda: f64) -> DVector<f64> {
    let x = with_intercept(z);
    let yv = DVector::from_column_slice(y);
    let mut theta = DVector::zeros(x.ncols());
    for _ in 0..200 {
        let p = (&x * &theta).map(|e| 1.0 / (1.0 + (-e).exp()));
        let mut g = x.transpose() * (&p - &yv);
        let w = p.map(|v| v * (1.0 - v));
        let mut h = x.transpose() * DMatrix::from_diagonal(&w) * &x;
        for j in 1..h.nrows() {
            g[j] += lambda * theta[j];
            h[(j, j)] += lambda;
        }
        if g.norm() < 1e-12 {
            break;
        }
        theta -= h.lu().solve(&g).unwrap();
    }
    theta
}

fn theta_of(fit: &GlmFit) -> Vec<f64> {
    std::iter::once(fit.alpha()).chain(fit.beta().iter().copied()).collect()
}

fn objective(z: &DMatrix<f64>, y: &[f64], beta: &[f64], alpha: f64, lambda: f64, loss: Loss) -> f64 {
    let eta = z * DVector::from_column_slice(beta);
    let data: f64 = y.iter().zip(eta.iter()).map(|(&yi, &e)| loss.value(yi, e + alpha)).sum();
    data + 0.5 * lambda * beta.iter().map(|b| b * b).sum::<f64>()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn ols_on_toy_stump_column() {
    let z = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, -1.0, -1.0]);
    let y = [0.0, 0.0, 1.0, 1.0];
    let fit = fit_ols(&z, &y).unwrap();
    assert!((fit.alpha() - 0.5).abs() < 1e-12);
    assert!((fit.beta()[0] + 0.5).abs() < 1e-12);
    assert!(max_abs_diff(&fit.predict(&z).unwrap(), &y) < 1e-12);
}

#[test]
fn ols_without_columns_is_the_mean() {
    let z = DMatrix::zeros(3, 0);
    let fit = fit_ols(&z, &[1.0, 2.0, 6.0]).unwrap();
    assert!((fit.alpha() - 3.0).abs() < 1e-12);
    assert!(fit.beta().is_empty());
}

#[test]
fn duplicated_column_keeps_fitted_values() {
    let (z, y) = random_design(15, 2, 1);
    let mut dup = DMatrix::zeros(15, 3);
    dup.view_mut((0, 0), (15, 2)).copy_from(&z);
    dup.set_column(2, &z.column(1));
    let single = fit_ols(&z, &y).unwrap().predict(&z).unwrap();
    let double_fit = fit_ols(&dup, &y).unwrap();
    assert!(max_abs_diff(&single, &double_fit.predict(&dup).unwrap()) < 1e-9);
    // minimum norm splits the shared coefficient evenly
    assert!((double_fit.beta()[1] - double_fit.beta()[2]).abs() < 1e-9);
}

#[test]
fn ridge_loo_matches_refit() {
    let (z, y) = random_design(20, 5, 2);
    let spec = GlmSpec::ridge().with_lambdas(vec![0.7]);
    let fit = fit_regularized(&z, &y, &spec).unwrap();
    for i in 0..20 {
        let (zi, yi) = drop_row(&z, &y, i);
        let oracle = ridge_oracle(&zi, &yi, 0.7);
        let (b, a) = loo_coefficients(&fit, i).unwrap();
        let got: Vec<f64> = std::iter::once(a).chain(b).collect();
        assert!(max_abs_diff(&got, oracle.as_slice()) < 1e-6, "row {i}");
    }
}

#[test]
fn ridge_selection_uses_exact_loo_error() {
    let (z, y) = random_design(25, 4, 3);
    let grid = vec![0.01, 1.0, 30.0, 1000.0];
    let fit = fit_regularized(&z, &y, &GlmSpec::ridge().with_lambdas(grid.clone())).unwrap();
    for (k, &lambda) in grid.iter().enumerate() {
        let brute: f64 = (0..25)
            .map(|i| {
                let (zi, yi) = drop_row(&z, &y, i);
                let t = ridge_oracle(&zi, &yi, lambda);
                let pred = t[0] + (0..4).map(|j| z[(i, j)] * t[j + 1]).sum::<f64>();
                (y[i] - pred).powi(2)
            })
            .sum::<f64>()
            / 25.0;
        assert!((fit.lambda_path()[k].1 - brute).abs() < 1e-8 * brute.max(1.0));
    }
    let best = grid
        .iter()
        .zip(fit.lambda_path())
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .unwrap();
    assert_eq!(fit.lambda(), *best.0);
}

#[test]
fn ridge_limits() {
    let (z, y) = random_design(30, 4, 4);
    let ols = fit_ols(&z, &y).unwrap();
    let tiny = fit_regularized(&z, &y, &GlmSpec::ridge().with_lambdas(vec![1e-8])).unwrap();
    assert!(max_abs_diff(&theta_of(&ols), &theta_of(&tiny)) < 1e-5);
    let huge = fit_regularized(&z, &y, &GlmSpec::ridge().with_lambdas(vec![1e8])).unwrap();
    let ybar = y.iter().sum::<f64>() / 30.0;
    assert!(huge.beta().iter().all(|b| b.abs() < 1e-4));
    assert!((huge.alpha() - ybar).abs() <= 1e-4 * ybar.abs().max(1.0));
}

#[test]
fn ridge_kkt_and_monotone_shrinkage() {
    let (z, y) = random_design(40, 6, 5);
    let x = with_intercept(&z);
    let mut last = f64::INFINITY;
    for lambda in default_lambda_grid(40) {
        let fit = fit_regularized(&z, &y, &GlmSpec::ridge().with_lambdas(vec![lambda])).unwrap();
        let theta = DVector::from_vec(theta_of(&fit));
        let mut g = x.transpose() * (&x * &theta - DVector::from_column_slice(&y));
        for j in 1..g.len() {
            g[j] += lambda * theta[j];
        }
        assert!(g.norm() <= 1e-8, "KKT residual {} at {lambda}", g.norm());
        let norm = DVector::from_column_slice(fit.beta()).norm();
        assert!(norm <= last + 1e-12);
        last = norm;
    }
}

#[test]
fn logistic_separated_data_stays_finite() {
    let z = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
    let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let fit = fit_regularized(&z, &y, &GlmSpec::logistic().with_lambdas(vec![1.0])).unwrap();
    assert!(fit.beta()[0].is_finite() && fit.beta()[0] > 0.0);
    let x = with_intercept(&z);
    let theta = DVector::from_vec(theta_of(&fit));
    let p = (&x * &theta).map(solve::sigmoid);
    let mut g = x.transpose() * (p - DVector::from_column_slice(&y));
    g[1] += theta[1];
    assert!(g.norm() <= 1e-6);
    let base = objective(&z, &y, &[0.0], 0.0, 1.0, Loss::Logistic);
    assert!(objective(&z, &y, fit.beta(), fit.alpha(), 1.0, Loss::Logistic) < base);
}

#[test]
fn logistic_matches_independent_newton_and_one_step_loo_is_close() {
    let (z, lin) = random_design(100, 5, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let y: Vec<f64> = lin
        .iter()
        .map(|&e| if rng.gen::<f64>() < solve::sigmoid(0.5 * e) { 1.0 } else { 0.0 })
        .collect();
    let fit = fit_regularized(&z, &y, &GlmSpec::logistic().with_lambdas(vec![1.0])).unwrap();
    let full = logistic_oracle(&z, &y, 1.0);
    assert!(max_abs_diff(&theta_of(&fit), full.as_slice()) < 1e-8);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (zi, yi) = drop_row(&z, &y, i);
        let oracle = logistic_oracle(&zi, &yi, 1.0);
        let (b, a) = fit.loo_coefficients(i).unwrap();
        let got: Vec<f64> = std::iter::once(a).chain(b).collect();
        worst = worst.max(max_abs_diff(&got, oracle.as_slice()));
    }
    assert!(worst <= 1e-2, "one-step LOO error {worst}");
}

#[test]
fn objective_certificates() {
    let (z, y) = random_design(50, 4, 7);
    let ybar = y.iter().sum::<f64>() / 50.0;
    for (spec, loss) in [
        (GlmSpec::ridge(), Loss::Squared),
        (GlmSpec::huber().with_huber_delta(HuberDelta::Absolute(0.8)), Loss::Huber(0.8)),
    ] {
        let fit = fit_regularized(&z, &y, &spec).unwrap();
        let l = fit.lambda();
        let null = objective(&z, &y, &[0.0; 4], ybar, l, loss);
        assert!(objective(&z, &y, fit.beta(), fit.alpha(), l, loss) <= null);
    }
    let yb: Vec<f64> = y.iter().map(|&v| if v > ybar { 1.0 } else { 0.0 }).collect();
    let fit = fit_regularized(&z, &yb, &GlmSpec::logistic()).unwrap();
    let pbar = yb.iter().sum::<f64>() / 50.0;
    let null = objective(&z, &yb, &[0.0; 4], (pbar / (1.0 - pbar)).ln(), fit.lambda(), Loss::Logistic);
    assert!(objective(&z, &yb, fit.beta(), fit.alpha(), fit.lambda(), Loss::Logistic) <= null);
}

#[test]
fn huber_with_wide_threshold_is_ridge() {
    let (z, y) = random_design(40, 3, 8);
    let grid = vec![0.5, 5.0, 50.0];
    let ridge = fit_regularized(&z, &y, &GlmSpec::ridge().with_lambdas(grid.clone())).unwrap();
    let resid_max = max_abs_diff(&ridge.predict(&z).unwrap(), &y);
    // LOO residuals exceed fitted residuals, so leave room for them too
    let spec = GlmSpec::huber()
        .with_lambdas(grid)
        .with_huber_delta(HuberDelta::Absolute(10.0 * resid_max));
    let huber = fit_regularized(&z, &y, &spec).unwrap();
    assert_eq!(huber.lambda(), ridge.lambda());
    assert!(max_abs_diff(&theta_of(&huber), &theta_of(&ridge)) < 1e-6);
}

#[test]
fn robust_huber_threshold_from_ridge_residuals() {
    let (z, mut y) = random_design(60, 2, 9);
    y[0] += 50.0;
    let fit = fit_regularized(&z, &y, &GlmSpec::huber()).unwrap();
    let delta = fit.huber_delta().unwrap();
    assert!(delta > 0.3 && delta < 5.0, "delta {delta}");
}

#[test]
fn single_row_loo_is_empty_refit() {
    let z = DMatrix::from_column_slice(1, 2, &[0.3, -1.0]);
    let fit = fit_regularized(&z, &[2.0], &GlmSpec::ridge()).unwrap();
    let (b, a) = fit.loo_coefficients(0).unwrap();
    assert_eq!(b, vec![0.0, 0.0]);
    assert_eq!(a, 0.0);
    assert_eq!(fit.loo_predict(&z).unwrap(), vec![0.0]);
}

#[test]
fn degenerate_leverage_is_reported_and_refitted() {
    // Column 1 is non-zero on row 0 only, so OLS interpolates that row.
    let mut z = DMatrix::zeros(6, 2);
    for i in 0..6 {
        z[(i, 0)] = i as f64;
    }
    z[(0, 1)] = 1.0;
    let y = [1.0, 0.5, 2.0, 2.5, 4.5, 5.0];
    let fit = fit_ols(&z, &y).unwrap();
    assert!(matches!(fit.loo_coefficients(0), Err(Error::DegenerateLeverage { row: 0, .. })));
    let (b, a) = fit.loo_coefficients_or_refit(0).unwrap();
    let (zi, yi) = drop_row(&z, &y, 0);
    let first = fit_ols(&zi.columns(0, 1).into_owned(), &yi).unwrap();
    assert!((a - first.alpha()).abs() < 1e-9);
    assert!((b[0] - first.beta()[0]).abs() < 1e-9);
    let loo = fit.loo_predict(&z).unwrap();
    assert!((loo[0] - (a + b[0] * z[(0, 0)] + b[1])).abs() < 1e-9);
}

#[test]
fn loo_predict_agrees_with_coefficients() {
    let (z, y) = random_design(30, 3, 10);
    let fit = fit_glm(&z, &y, &GlmSpec::ridge(), &[true, false, true]).unwrap();
    let (q, _) = random_design(30, 3, 11);
    let fast = fit.loo_predict(&q).unwrap();
    for i in 0..30 {
        let (b, a) = fit.loo_coefficients(i).unwrap();
        let direct = a + (0..3).map(|j| q[(i, j)] * b[j]).sum::<f64>();
        assert!((fast[i] - direct).abs() < 1e-10);
    }
}

#[test]
fn standardization_maps_back_to_original_units() {
    let (mut z, y) = random_design(30, 2, 12);
    for i in 0..30 {
        z[(i, 0)] = 100.0 + 40.0 * z[(i, 0)];
    }
    let fit = fit_glm(&z, &y, &GlmSpec::ridge().with_lambdas(vec![3.0]), &[true, false]).unwrap();
    let (c, s) = (fit.column_centers()[0], fit.column_scales()[0]);
    let mean = z.column(0).mean();
    assert!((c - mean).abs() < 1e-9);
    assert!((s - z.column(0).variance().sqrt()).abs() < 1e-9);
    let mut zs = z.clone();
    for i in 0..30 {
        zs[(i, 0)] = (z[(i, 0)] - c) / s;
    }
    let t = ridge_oracle(&zs, &y, 3.0);
    assert!((fit.beta()[0] - t[1] / s).abs() < 1e-9);
    assert!((fit.beta()[1] - t[2]).abs() < 1e-9);
    assert!(max_abs_diff(&fit.predict(&z).unwrap(), (&with_intercept(&zs) * &t).as_slice()) < 1e-9);
}

#[test]
fn prediction_links() {
    let z = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
    let fit = fit_ols(&z, &[1.0, 3.0, 5.0, 7.0]).unwrap();
    assert!((predict_glm(&fit, &DMatrix::zeros(1, 1)).unwrap()[0] - fit.alpha()).abs() < 1e-15);
    assert!(predict_glm(&fit, &DMatrix::zeros(1, 2)).is_err());
    assert_eq!(Link::Logit.inverse(0.0), 0.5);
    assert_eq!(Link::Logit.inverse(40.0), 1.0 - 1e-12);
    assert_eq!(Link::Logit.inverse(-40.0), 1e-12);
}

#[test]
fn spec_validation() {
    assert!(GlmSpec::ridge().with_lambdas(vec![]).validate().is_err());
    assert!(GlmSpec::ridge().with_lambdas(vec![1.0, 0.0]).validate().is_err());
    assert!(GlmSpec::ols().with_lambdas(vec![]).validate().is_ok());
    assert!(GlmSpec::huber().with_huber_delta(HuberDelta::Absolute(-1.0)).validate().is_err());
    let z = DMatrix::zeros(2, 1);
    assert!(fit_regularized(&z, &[0.0, 2.0], &GlmSpec::logistic()).is_err());
    assert_eq!(default_lambda_grid(10).len(), 20);
    assert!((default_lambda_grid(10)[0] - 1e-3).abs() < 1e-15);
    assert!((default_lambda_grid(10)[19] - 1e5).abs() < 1e-6);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn ridge_loo_is_exact(n in 8usize..50, m in 1usize..10, seed in 0u64..1000, lambda in 0.01f64..50.0) {
            prop_assume!(n > m + 2);
            let (z, y) = random_design(n, m, seed);
            let fit = fit_regularized(&z, &y, &GlmSpec::ridge().with_lambdas(vec![lambda])).unwrap();
            for i in 0..n {
                let (zi, yi) = drop_row(&z, &y, i);
                let oracle = ridge_oracle(&zi, &yi, lambda);
                let (b, a) = fit.loo_coefficients(i).unwrap();
                let got: Vec<f64> = std::iter::once(a).chain(b).collect();
                prop_assert!(max_abs_diff(&got, oracle.as_slice()) < 1e-6);
            }
        }
    }
}
