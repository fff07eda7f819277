//! Generalized linear models on transformed designs: OLS, ridge, l2-regularized logistic
//! and Huberized ridge, with the penalty chosen by leave-one-out and per-row LOO
//! coefficients available without refitting.
//!
//! The objective is `sum_i l(y_i, alpha + z_i . beta) + lambda/2 |beta|^2` with an
//! unpenalized intercept. Columns flagged for standardization are centered and scaled to
//! unit standard deviation before the penalty applies; reported coefficients are always
//! in the original units.

mod linalg;
mod solve;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stump::TransformedMatrix;
use linalg::SparseRows;
use solve::{Loss, DEGENERATE_DENOM};

pub use solve::{huber_rho as huber_loss, GRAD_TOL, MAX_NEWTON_ITER};

/// Probability bounds applied before any log-loss.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ols,
    Ridge,
    #[serde(alias = "logistic")]
    LogisticL2,
    #[serde(alias = "huber")]
    HuberRidge,
}

impl Family {
    pub fn link(self) -> Link {
        match self {
            Family::LogisticL2 => Link::Logit,
            _ => Link::Identity,
        }
    }

    pub fn is_regularized(self) -> bool {
        self != Family::Ols
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Ols => "ols",
            Family::Ridge => "ridge",
            Family::LogisticL2 => "logistic",
            Family::HuberRidge => "huber",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Family::Ols),
            "ridge" => Ok(Family::Ridge),
            "logistic" | "logistic-l2" => Ok(Family::LogisticL2),
            "huber" | "huber-ridge" => Ok(Family::HuberRidge),
            other => Err(Error::InvalidParameter(format!("unknown GLM family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Identity,
    Logit,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Logit => clamp_probability(solve::sigmoid(eta)),
        }
    }
}

/// Huber transition point between the quadratic and linear branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HuberDelta {
    /// A fixed threshold in response units.
    Absolute(f64),
    /// A multiple of the robust residual scale `1.4826 * MAD` of the LOO-tuned ridge fit.
    RobustScaled(f64),
}

impl Default for HuberDelta {
    fn default() -> Self {
        HuberDelta::RobustScaled(1.35)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub family: Family,
    /// Candidate penalties; `None` means 20 log-spaced values in `[1e-4, 1e4] * n`.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub huber_delta: HuberDelta,
}

impl GlmSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            lambda_grid: None,
            huber_delta: HuberDelta::default(),
        }
    }

    pub fn ols() -> Self {
        Self::new(Family::Ols)
    }

    pub fn ridge() -> Self {
        Self::new(Family::Ridge)
    }

    pub fn logistic() -> Self {
        Self::new(Family::LogisticL2)
    }

    pub fn huber() -> Self {
        Self::new(Family::HuberRidge)
    }

    pub fn with_lambdas(mut self, grid: Vec<f64>) -> Self {
        self.lambda_grid = Some(grid);
        self
    }

    pub fn with_huber_delta(mut self, delta: HuberDelta) -> Self {
        self.huber_delta = delta;
        self
    }

    pub fn link(&self) -> Link {
        self.family.link()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(grid) = &self.lambda_grid {
            if self.family.is_regularized() {
                if grid.is_empty() {
                    return Err(Error::InvalidParameter("lambda grid is empty".into()));
                }
                if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
                    return Err(Error::InvalidParameter(format!(
                        "lambda grid entries must be positive and finite, got {bad}"
                    )));
                }
            }
        }
        match self.huber_delta {
            HuberDelta::Absolute(d) | HuberDelta::RobustScaled(d) if !(d.is_finite() && d > 0.0) => {
                Err(Error::InvalidParameter(format!("huber delta must be positive, got {d}")))
            }
            _ => Ok(()),
        }
    }

    /// The penalties this spec searches on `n` fitting rows.
    pub fn lambdas(&self, n: usize) -> Vec<f64> {
        if !self.family.is_regularized() {
            return vec![0.0];
        }
        match &self.lambda_grid {
            Some(g) => g.clone(),
            None => default_lambda_grid(n),
        }
    }
}

/// 20 log-spaced penalties from `1e-4 * n` to `1e4 * n`.
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    let n = n.max(1) as f64;
    (0..20)
        .map(|i| n * 10f64.powf(-4.0 + 8.0 * i as f64 / 19.0))
        .collect()
}

#[derive(Debug)]
struct LooState {
    /// Standardized design of the fitting rows.
    design: SparseRows,
    y: Vec<f64>,
    hinv: DMatrix<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    cache: OnceLock<LooCache>,
}

#[derive(Debug)]
struct LooCache {
    /// Column i holds `H^-1 x~_i`.
    directions: DMatrix<f64>,
    /// `l'_i / (1 - l''_i h_i)`.
    factors: Vec<f64>,
    /// Exactly refitted coefficients for rows whose downdate is degenerate.
    refits: Vec<Option<DVector<f64>>>,
}

/// A fitted GLM. Immutable once built.
#[derive(Debug)]
pub struct GlmFit {
    family: Family,
    lambda: f64,
    huber_delta: Option<f64>,
    /// Intercept first, in standardized coordinates.
    theta: DVector<f64>,
    beta: Vec<f64>,
    alpha: f64,
    centers: Vec<f64>,
    scales: Vec<f64>,
    lambda_path: Vec<(f64, f64)>,
    n_rows: usize,
    loo: Option<LooState>,
}

impl GlmFit {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn link(&self) -> Link {
        self.family.link()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The absolute Huber threshold used by the fit.
    pub fn huber_delta(&self) -> Option<f64> {
        self.huber_delta
    }

    pub fn column_centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn column_scales(&self) -> &[f64] {
        &self.scales
    }

    /// `(lambda, LOO criterion)` for every penalty tried, in grid order.
    pub fn lambda_path(&self) -> &[(f64, f64)] {
        &self.lambda_path
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.centers.len()
    }

    pub fn has_loo_state(&self) -> bool {
        self.loo.is_some()
    }

    /// Drops the per-row state, keeping only what prediction needs.
    pub fn discard_loo_state(mut self) -> Self {
        self.loo = None;
        self
    }

    fn check_cols(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.ncols() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: z.ncols(),
            });
        }
        Ok(())
    }

    pub fn linear_predictor(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_cols(z)?;
        let beta = DVector::from_column_slice(&self.beta);
        Ok((z * beta).iter().map(|v| v + self.alpha).collect())
    }

    /// `g^-1(alpha + z . beta)` for each row; logit probabilities are clamped.
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        let link = self.link();
        Ok(self.linear_predictor(z)?.into_iter().map(|e| link.inverse(e)).collect())
    }

    fn to_original(&self, theta: &DVector<f64>) -> (Vec<f64>, f64) {
        let beta: Vec<f64> = (0..self.n_cols())
            .map(|j| theta[j + 1] / self.scales[j])
            .collect();
        let alpha = theta[0] - beta.iter().zip(&self.centers).map(|(b, c)| b * c).sum::<f64>();
        (beta, alpha)
    }

    fn loo_state(&self) -> Result<&LooState> {
        self.loo
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("LOO state was discarded from this fit".into()))
    }

    fn loo_theta(&self, state: &LooState, i: usize) -> std::result::Result<DVector<f64>, f64> {
        if self.n_rows == 1 {
            return Ok(DVector::zeros(self.theta.len()));
        }
        let w = state.design.apply_row(i, &state.hinv);
        let h = state.design.dot_row(i, &w);
        let denom = 1.0 - state.d2[i] * h;
        if denom <= DEGENERATE_DENOM {
            return Err(state.d2[i] * h);
        }
        Ok(&self.theta + w * (state.d1[i] / denom))
    }

    /// Coefficients `(beta_-i, alpha_-i)` of the fit without row `i`: exact for squared
    /// loss, one Newton step from the full-data optimum otherwise. With a single fitting
    /// row the empty refit is taken to be `beta = 0, alpha = 0`.
    pub fn loo_coefficients(&self, i: usize) -> Result<(Vec<f64>, f64)> {
        let state = self.loo_state()?;
        self.check_row(i)?;
        match self.loo_theta(state, i) {
            Ok(t) => Ok(self.to_original(&t)),
            Err(leverage) => Err(Error::DegenerateLeverage { row: i, leverage }),
        }
    }

    /// Like [`Self::loo_coefficients`], but refits exactly when the downdate is degenerate.
    pub fn loo_coefficients_or_refit(&self, i: usize) -> Result<(Vec<f64>, f64)> {
        match self.loo_coefficients(i) {
            Err(Error::DegenerateLeverage { .. }) => {
                let t = self.exact_refit(self.loo_state()?, i)?;
                Ok(self.to_original(&t))
            }
            other => other,
        }
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.n_rows {
            return Err(Error::InvalidParameter(format!(
                "row {i} out of range for a fit on {} rows",
                self.n_rows
            )));
        }
        Ok(())
    }

    /// Refit without row `i` at the selected penalty, in standardized coordinates.
    fn exact_refit(&self, state: &LooState, i: usize) -> Result<DVector<f64>> {
        let keep: Vec<usize> = (0..self.n_rows).filter(|&r| r != i).collect();
        if keep.is_empty() {
            return Ok(DVector::zeros(self.theta.len()));
        }
        let zs = state.design.select(&keep);
        let y: Vec<f64> = keep.iter().map(|&r| state.y[r]).collect();
        match self.loss() {
            Loss::Squared => Ok(solve::quadratic_solve(&zs, &y, self.lambda)),
            loss => solve::newton(&zs, &y, self.lambda, loss, self.theta.clone()),
        }
    }

    fn loss(&self) -> Loss {
        match self.family {
            Family::Ols | Family::Ridge => Loss::Squared,
            Family::LogisticL2 => Loss::Logistic,
            Family::HuberRidge => Loss::Huber(self.huber_delta.expect("huber fit records delta")),
        }
    }

    fn loo_cache(&self) -> Result<&LooCache> {
        let state = self.loo_state()?;
        if let Some(c) = state.cache.get() {
            return Ok(c);
        }
        let n = self.n_rows;
        let directions = state.design.apply_to_rows(&state.hinv);
        let mut factors = vec![0.0; n];
        let mut refits = vec![None; n];
        for i in 0..n {
            if n == 1 {
                refits[i] = Some(DVector::zeros(self.theta.len()));
                continue;
            }
            let h = state.design.dot_row(i, &directions.column(i).into_owned());
            let denom = 1.0 - state.d2[i] * h;
            if denom <= DEGENERATE_DENOM {
                refits[i] = Some(self.exact_refit(state, i)?);
            } else {
                factors[i] = state.d1[i] / denom;
            }
        }
        Ok(state.cache.get_or_init(|| LooCache {
            directions,
            factors,
            refits,
        }))
    }

    /// Row-wise LOO predictions `g^-1(alpha_-i + r_i . beta_-i)` where `r_i` is row `i`
    /// of `rows` (same column layout as the fitting design, one row per fitting row).
    /// Degenerate downdates fall back to an exact refit for that row.
    pub fn loo_predict(&self, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_cols(rows)?;
        if rows.nrows() != self.n_rows {
            return Err(Error::InvalidParameter(format!(
                "LOO prediction needs one row per fitting row ({}), got {}",
                self.n_rows,
                rows.nrows()
            )));
        }
        let cache = self.loo_cache()?;
        let link = self.link();
        let m = self.n_cols();
        let mut r = DVector::zeros(m + 1);
        Ok((0..self.n_rows)
            .map(|i| {
                r[0] = 1.0;
                for j in 0..m {
                    r[j + 1] = (rows[(i, j)] - self.centers[j]) / self.scales[j];
                }
                let eta = match &cache.refits[i] {
                    Some(t) => r.dot(t),
                    None => r.dot(&self.theta) + cache.factors[i] * r.dot(&cache.directions.column(i)),
                };
                link.inverse(eta)
            })
            .collect())
    }
}

/// Per-column `(center, scale)`; unflagged columns get `(0, 1)`, constant columns scale 1.
fn standardization(z: &DMatrix<f64>, standardize: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let n = z.nrows() as f64;
    let mut centers = vec![0.0; z.ncols()];
    let mut scales = vec![1.0; z.ncols()];
    for (j, &flag) in standardize.iter().enumerate() {
        if !flag {
            continue;
        }
        let col = z.column(j);
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        centers[j] = mean;
        if sd > 1e-12 * mean.abs().max(1.0) {
            scales[j] = sd;
        }
    }
    (centers, scales)
}

fn robust_scale(residuals: &[f64]) -> f64 {
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    };
    let mut r = residuals.to_vec();
    let med = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|x| (x - med).abs()).collect();
    let mad = 1.4826 * median(&mut dev);
    if mad > 0.0 {
        return mad;
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    (residuals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Fits `spec` on `z`, standardizing the flagged columns first.
pub fn fit_glm(z: &DMatrix<f64>, y: &[f64], spec: &GlmSpec, standardize: &[bool]) -> Result<GlmFit> {
    spec.validate()?;
    let (n, m) = z.shape();
    if n == 0 {
        return Err(Error::InvalidData("GLM needs at least one row".into()));
    }
    if y.len() != n {
        return Err(Error::InvalidData(format!(
            "response has {} entries for {n} design rows",
            y.len()
        )));
    }
    if standardize.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: standardize.len(),
        });
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("GLM inputs must be finite".into()));
    }
    if spec.family == Family::LogisticL2 && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData("logistic response must be 0/1".into()));
    }

    let (centers, scales) = standardization(z, standardize);
    let zstd = DMatrix::from_fn(n, m, |i, j| (z[(i, j)] - centers[j]) / scales[j]);
    let design = SparseRows::from_dense(&zstd);
    let lambdas = spec.lambdas(n);

    let (path, loss, huber_delta) = match spec.family {
        Family::Ols | Family::Ridge => (solve::quadratic_path(&design, y, &lambdas), Loss::Squared, None),
        Family::LogisticL2 => {
            let ybar = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            let mut start = DVector::zeros(m + 1);
            start[0] = (ybar / (1.0 - ybar)).ln();
            (solve::newton_path(&design, y, &lambdas, Loss::Logistic, start)?, Loss::Logistic, None)
        }
        Family::HuberRidge => {
            let ridge = solve::quadratic_path(&design, y, &lambdas);
            let delta = match spec.huber_delta {
                HuberDelta::Absolute(d) => d,
                HuberDelta::RobustScaled(c) => {
                    let eta = design.linear_predictor(&ridge.theta);
                    let r: Vec<f64> = y.iter().zip(&eta).map(|(a, b)| a - b).collect();
                    let s = robust_scale(&r);
                    if s > 0.0 {
                        c * s
                    } else {
                        c
                    }
                }
            };
            let loss = Loss::Huber(delta);
            // warm start from the ridge solution at the largest penalty
            let top = lambdas
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let start = solve::quadratic_solve(&design, y, top);
            (solve::newton_path(&design, y, &lambdas, loss, start)?, loss, Some(delta))
        }
    };

    let lambda = lambdas[path.selected];
    let eta = design.linear_predictor(&path.theta);
    let d1 = y.iter().zip(&eta).map(|(&a, &e)| loss.d1(a, e)).collect();
    let d2 = y.iter().zip(&eta).map(|(&a, &e)| loss.d2(a, e)).collect();
    let mut fit = GlmFit {
        family: spec.family,
        lambda,
        huber_delta,
        theta: path.theta,
        beta: Vec::new(),
        alpha: 0.0,
        centers,
        scales,
        lambda_path: lambdas.iter().copied().zip(path.criteria).collect(),
        n_rows: n,
        loo: Some(LooState {
            design,
            y: y.to_vec(),
            hinv: path.hinv,
            d1,
            d2,
            cache: OnceLock::new(),
        }),
    };
    let (beta, alpha) = fit.to_original(&fit.theta);
    fit.beta = beta;
    fit.alpha = alpha;
    Ok(fit)
}

/// Least squares with intercept; rank-deficient designs get the minimum-norm solution.
pub fn fit_ols(z: &DMatrix<f64>, y: &[f64]) -> Result<GlmFit> {
    fit_glm(z, y, &GlmSpec::ols(), &vec![false; z.ncols()])
}

/// Penalized fit with the penalty chosen by LOO, no standardization.
pub fn fit_regularized(z: &DMatrix<f64>, y: &[f64], spec: &GlmSpec) -> Result<GlmFit> {
    fit_glm(z, y, spec, &vec![false; z.ncols()])
}

/// Fit on a transformed design: stump columns as-is, raw columns standardized.
pub fn fit_transformed(tm: &TransformedMatrix, y: &[f64], spec: &GlmSpec) -> Result<GlmFit> {
    fit_glm(tm.values(), y, spec, &tm.raw_mask())
}

pub fn loo_coefficients(fit: &GlmFit, i: usize) -> Result<(Vec<f64>, f64)> {
    fit.loo_coefficients(i)
}

pub fn predict_glm(fit: &GlmFit, z: &DMatrix<f64>) -> Result<Vec<f64>> {
    fit.predict(z)
}

#[cfg(test)]
mod tests;
