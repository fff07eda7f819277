//! Solvers behind [`super::fit_glm`]: an eigendecomposition path for squared loss and
//! damped Newton for logistic and Huber losses.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::linalg::{is_positive_definite, psd_inverse, psd_solve, SparseRows};
use crate::error::{Error, Result};

pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_NEWTON_ITER: usize = 100;
/// Eigenvalues below this fraction of the largest are treated as zero by OLS.
const RANK_RTOL: f64 = 1e-10;
/// Rows whose LOO denominator `1 - l''_i h_i` falls below this are refitted exactly.
pub(crate) const DEGENERATE_DENOM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Loss {
    Squared,
    Logistic,
    Huber(f64),
}

impl Loss {
    /// Loss of one observation as a function of the linear predictor.
    pub fn value(self, y: f64, eta: f64) -> f64 {
        match self {
            Loss::Squared => 0.5 * (y - eta).powi(2),
            Loss::Logistic => softplus(eta) - y * eta,
            Loss::Huber(d) => huber_rho(y - eta, d),
        }
    }

    pub fn d1(self, y: f64, eta: f64) -> f64 {
        match self {
            Loss::Squared => eta - y,
            Loss::Logistic => sigmoid(eta) - y,
            Loss::Huber(d) => -(y - eta).clamp(-d, d),
        }
    }

    pub fn d2(self, y: f64, eta: f64) -> f64 {
        match self {
            Loss::Squared => 1.0,
            Loss::Logistic => {
                let p = sigmoid(eta);
                p * (1.0 - p)
            }
            Loss::Huber(d) => {
                if (y - eta).abs() <= d {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Criterion used to rank penalties from LOO linear predictors.
    pub fn criterion(self, y: f64, eta: f64) -> f64 {
        match self {
            Loss::Squared => (y - eta).powi(2),
            Loss::Logistic => {
                let p = super::clamp_probability(sigmoid(eta));
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
            Loss::Huber(d) => huber_rho(y - eta, d),
        }
    }
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub fn huber_rho(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * a - 0.5 * delta * delta
    }
}

/// Penalty matrix `diag(0, lambda, ..., lambda)`.
fn add_penalty(h: &mut DMatrix<f64>, lambda: f64) {
    for j in 1..h.nrows() {
        h[(j, j)] += lambda;
    }
}

pub(crate) fn objective(zs: &SparseRows, y: &[f64], theta: &DVector<f64>, lambda: f64, loss: Loss) -> f64 {
    let eta = zs.linear_predictor(theta);
    let data: f64 = y.iter().zip(&eta).map(|(&yi, &e)| loss.value(yi, e)).sum();
    data + 0.5 * lambda * theta.rows(1, theta.len() - 1).norm_squared()
}

pub(crate) fn gradient(zs: &SparseRows, y: &[f64], theta: &DVector<f64>, lambda: f64, loss: Loss) -> DVector<f64> {
    let eta = zs.linear_predictor(theta);
    let d1: Vec<f64> = y.iter().zip(&eta).map(|(&yi, &e)| loss.d1(yi, e)).collect();
    let mut g = zs.t_mul(&d1);
    for j in 1..g.len() {
        g[j] += lambda * theta[j];
    }
    g
}

/// Outcome of solving for every penalty in a grid.
pub(crate) struct PathResult {
    /// LOO criterion per grid entry, in grid order.
    pub criteria: Vec<f64>,
    pub selected: usize,
    pub theta: DVector<f64>,
    /// Inverse (or pseudo-inverse) Hessian of the penalized objective at `theta`.
    pub hinv: DMatrix<f64>,
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c < v[best] || v[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Squared-loss fits for all penalties from one eigendecomposition of the centered Gram
/// matrix. `lambda = 0` yields the minimum-norm least-squares solution.
pub(crate) fn quadratic_path(zs: &SparseRows, y: &[f64], lambdas: &[f64]) -> PathResult {
    let n = zs.n_rows;
    let m = zs.n_cols;
    let nf = n as f64;
    let ybar = y.iter().sum::<f64>() / nf;
    if m == 0 {
        let shrink = if n == 1 { 0.0 } else { 1.0 / (1.0 - 1.0 / nf) };
        let loo: f64 = if n == 1 {
            y[0] * y[0]
        } else {
            y.iter().map(|v| ((v - ybar) * shrink).powi(2)).sum::<f64>() / nf
        };
        return PathResult {
            criteria: vec![loo; lambdas.len()],
            selected: 0,
            theta: DVector::from_element(1, ybar),
            hinv: DMatrix::from_element(1, 1, 1.0 / nf),
        };
    }
    let gram = zs.weighted_gram(&vec![1.0; n]);
    let zbar: DVector<f64> = gram.view((1, 0), (m, 1)).column(0) / nf;
    let mut g = gram.view((1, 1), (m, m)) - &zbar * zbar.transpose() * nf;
    g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let dmax = eig.eigenvalues.iter().fold(0.0f64, |a, &d| a.max(d));
    let tol = RANK_RTOL * dmax.max(f64::MIN_POSITIVE);
    let d: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let vt = eig.eigenvectors.transpose();
    let shift = &vt * &zbar;

    // Rotated centered design, one column per row: Ut[:, i] = V^T (z_i - zbar).
    let mut ut = DMatrix::zeros(m, n);
    let mut uy = DVector::zeros(m);
    for i in 0..n {
        let mut col = ut.column_mut(i);
        col.copy_from(&shift);
        col.neg_mut();
        let (ix, v) = zs.row(i);
        for (&j, &x) in ix.iter().zip(v) {
            col.axpy(x, &vt.column(j), 1.0);
        }
        uy.axpy(y[i] - ybar, &col, 1.0);
    }

    let inverse_spectrum = |lambda: f64| -> DVector<f64> {
        DVector::from_iterator(
            m,
            d.iter().map(|&dj| {
                if lambda == 0.0 && dj <= tol {
                    0.0
                } else {
                    1.0 / (dj + lambda)
                }
            }),
        )
    };

    let criteria: Vec<f64> = lambdas
        .iter()
        .map(|&lambda| {
            if n == 1 {
                // The only LOO refit is empty and predicts 0.
                return y[0] * y[0];
            }
            let inv = inverse_spectrum(lambda);
            let gamma = uy.component_mul(&inv);
            let total: f64 = (0..n)
                .map(|i| {
                    let u = ut.column(i);
                    let fit = u.dot(&gamma);
                    let h = 1.0 / nf + u.component_mul(&u).dot(&inv);
                    let e = y[i] - ybar - fit;
                    (e / (1.0 - h).max(1e-12)).powi(2)
                })
                .sum();
            total / nf
        })
        .collect();
    let selected = argmin(&criteria);
    let lambda = lambdas[selected];

    let inv = inverse_spectrum(lambda);
    let beta = &eig.eigenvectors * uy.component_mul(&inv);
    let alpha = ybar - zbar.dot(&beta);
    let mut theta = DVector::zeros(m + 1);
    theta[0] = alpha;
    theta.rows_mut(1, m).copy_from(&beta);

    // Block inverse of [[n, n zbar^T], [n zbar, Z^T Z + lambda I]] through its Schur
    // complement S = Zc^T Zc + lambda I.
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&inv);
    let s_inv = &scaled * eig.eigenvectors.transpose();
    let s_zbar = &s_inv * &zbar;
    let mut hinv = DMatrix::zeros(m + 1, m + 1);
    hinv[(0, 0)] = 1.0 / nf + zbar.dot(&s_zbar);
    for j in 0..m {
        hinv[(0, j + 1)] = -s_zbar[j];
        hinv[(j + 1, 0)] = -s_zbar[j];
    }
    hinv.view_mut((1, 1), (m, m)).copy_from(&s_inv);

    PathResult {
        criteria,
        selected,
        theta,
        hinv,
    }
}

/// Direct squared-loss solve at one penalty (used for exact refits).
pub(crate) fn quadratic_solve(zs: &SparseRows, y: &[f64], lambda: f64) -> DVector<f64> {
    let mut h = zs.weighted_gram(&vec![1.0; zs.n_rows]);
    add_penalty(&mut h, lambda);
    psd_solve(&h, &zs.t_mul(y))
}

/// Damped Newton with Armijo backtracking, started from `theta`.
pub(crate) fn newton(
    zs: &SparseRows,
    y: &[f64],
    lambda: f64,
    loss: Loss,
    mut theta: DVector<f64>,
) -> Result<DVector<f64>> {
    let mut f = objective(zs, y, &theta, lambda, loss);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..MAX_NEWTON_ITER {
        let eta = zs.linear_predictor(&theta);
        let d1: Vec<f64> = y.iter().zip(&eta).map(|(&yi, &e)| loss.d1(yi, e)).collect();
        let mut g = zs.t_mul(&d1);
        for j in 1..g.len() {
            g[j] += lambda * theta[j];
        }
        grad_norm = g.norm();
        if grad_norm <= GRAD_TOL {
            return Ok(theta);
        }
        let h = hessian(zs, y, &eta, lambda, loss);
        let step = -psd_solve(&h, &g);
        let slope = g.dot(&step);
        if -slope <= 64.0 * f64::EPSILON * (f.abs() + 1.0) {
            // The predicted decrease is below the objective's rounding noise, so
            // Armijo cannot tell steps apart; take the Newton step if it shrinks the
            // gradient.
            let cand = &theta + &step;
            if gradient(zs, y, &cand, lambda, loss).norm() < grad_norm {
                f = objective(zs, y, &cand, lambda, loss);
                theta = cand;
                continue;
            }
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &theta + &step * t;
            let fc = objective(zs, y, &cand, lambda, loss);
            if fc <= f + 1e-4 * t * slope {
                moved = cand != theta;
                theta = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // No representable descent remains; accept if the gradient is at the
            // rounding floor of the data term.
            let scale: f64 = d1.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
            if grad_norm <= GRAD_TOL.max(1e-10 * scale) {
                return Ok(theta);
            }
            break;
        }
    }
    let g = gradient(zs, y, &theta, lambda, loss);
    if g.norm() <= GRAD_TOL {
        return Ok(theta);
    }
    Err(Error::NonConvergence {
        lambda,
        grad_norm: g.norm().min(grad_norm),
        iterations: MAX_NEWTON_ITER,
    })
}

/// Penalized Hessian at `eta`. Huber curvature vanishes outside the threshold, so when
/// that leaves the system singular the IRLS weights `min(1, delta/|r|)` stand in.
fn hessian(zs: &SparseRows, y: &[f64], eta: &[f64], lambda: f64, loss: Loss) -> DMatrix<f64> {
    let w: Vec<f64> = y.iter().zip(eta).map(|(&yi, &e)| loss.d2(yi, e)).collect();
    let mut h = zs.weighted_gram(&w);
    add_penalty(&mut h, lambda);
    if let Loss::Huber(d) = loss {
        if !is_positive_definite(&h) {
            let w: Vec<f64> = y
                .iter()
                .zip(eta)
                .map(|(&yi, &e)| (d / (yi - e).abs()).min(1.0))
                .collect();
            h = zs.weighted_gram(&w);
            add_penalty(&mut h, lambda);
        }
    }
    h
}

/// Inverse Hessian with the true curvature, as used by the LOO step.
pub(crate) fn loo_hessian_inverse(
    zs: &SparseRows,
    y: &[f64],
    theta: &DVector<f64>,
    lambda: f64,
    loss: Loss,
) -> DMatrix<f64> {
    let eta = zs.linear_predictor(theta);
    let w: Vec<f64> = y.iter().zip(&eta).map(|(&yi, &e)| loss.d2(yi, e)).collect();
    let mut h = zs.weighted_gram(&w);
    add_penalty(&mut h, lambda);
    psd_inverse(&h)
}

/// Approximate-LOO criterion for a converged Newton fit.
fn alo_criterion(zs: &SparseRows, y: &[f64], theta: &DVector<f64>, hinv: &DMatrix<f64>, loss: Loss) -> f64 {
    let n = zs.n_rows;
    if n == 1 {
        return loss.criterion(y[0], 0.0);
    }
    let eta = zs.linear_predictor(theta);
    (0..n)
        .map(|i| {
            let h = zs.quad_form(i, hinv);
            let d1 = loss.d1(y[i], eta[i]);
            let d2 = loss.d2(y[i], eta[i]);
            let eta_loo = eta[i] + h * d1 / (1.0 - d2 * h).max(1e-12);
            loss.criterion(y[i], eta_loo)
        })
        .sum::<f64>()
        / n as f64
}

/// Newton fits over the grid, largest penalty first so each solve warm-starts from a
/// smoother neighbour.
pub(crate) fn newton_path(
    zs: &SparseRows,
    y: &[f64],
    lambdas: &[f64],
    loss: Loss,
    start: DVector<f64>,
) -> Result<PathResult> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut criteria = vec![f64::NAN; lambdas.len()];
    let mut best: Option<(usize, DVector<f64>, DMatrix<f64>)> = None;
    let mut theta = start;
    for &g in &order {
        theta = newton(zs, y, lambdas[g], loss, theta)?;
        let hinv = loo_hessian_inverse(zs, y, &theta, lambdas[g], loss);
        criteria[g] = alo_criterion(zs, y, &theta, &hinv, loss);
        let better = match &best {
            None => true,
            // ties go to the earlier grid entry, as in `argmin`
            Some((b, _, _)) => criteria[g] < criteria[*b] || (criteria[g] == criteria[*b] && g < *b),
        };
        if better {
            best = Some((g, theta.clone(), hinv));
        }
    }
    let (selected, theta, hinv) = best.expect("grid is non-empty");
    Ok(PathResult {
        criteria,
        selected,
        theta,
        hinv,
    })
}
