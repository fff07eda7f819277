//! Simulation harness: synthetic covariates, the benchmark response functions, noise
//! and corruption models, and replicated importance experiments scored against the
//! known signal features.

mod experiment;
mod presets;

use nalgebra::{Cholesky, DMatrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::SeededRng;
use crate::error::{Error, Result};

pub use experiment::{
    generate_replicate, run_experiment, CovariateSpec, ExperimentConfig, ExperimentResults,
    FeatureGroup, MethodSpec, NoiseSpec, Replicate, ResultRow, SummaryRow,
};
pub use presets::{preset, NamedExperiment, PresetOverrides, PRESETS};
pub(crate) use experiment::format_significant;
pub(crate) use presets::apply_overrides;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseKind {
    /// `sum_{j<s} x_j`
    Linear,
    /// `sum_{m<M} 1(x_{2m} > 0) 1(x_{2m+1} > 0)`
    Lss,
    /// `sum_{m<M} x_{2m} + sum_{m<M} x_{2m} x_{2m+1}`
    PolyInteraction,
    /// `sum_{m<M} x_{2m} + sum_{m<M} 1(x_{2m} > 0) 1(x_{2m+1} > 0)`
    LinearPlusLss,
    /// `x_0` alone; as a classification mean, `P(y = 1) = (1 + x_0) / 3`.
    Entropy,
}

fn default_s_linear() -> usize {
    5
}

fn default_m_interactions() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub kind: ResponseKind,
    #[serde(default = "default_s_linear")]
    pub s_linear: usize,
    #[serde(default = "default_m_interactions")]
    pub m_interactions: usize,
    /// Binary responses drawn with the mean passed through the logistic link.
    #[serde(default)]
    pub logistic_link: bool,
    /// Place the signal terms on randomly chosen columns instead of the leading ones.
    #[serde(default = "default_true")]
    pub permute_signals: bool,
}

impl ResponseSpec {
    pub fn new(kind: ResponseKind) -> Self {
        Self {
            kind,
            s_linear: default_s_linear(),
            m_interactions: default_m_interactions(),
            logistic_link: false,
            permute_signals: true,
        }
    }

    pub fn classification(mut self) -> Self {
        self.logistic_link = true;
        self
    }

    pub fn fixed_signals(mut self) -> Self {
        self.permute_signals = false;
        self
    }

    /// Number of distinct features the response depends on.
    pub fn n_signals(&self) -> usize {
        match self.kind {
            ResponseKind::Linear => self.s_linear,
            ResponseKind::Entropy => 1,
            _ => 2 * self.m_interactions,
        }
    }

    /// Probability of class 1 given the mean function value.
    pub fn class_probability(&self, f: f64) -> f64 {
        match self.kind {
            ResponseKind::Entropy => ((1.0 + f) / 3.0).clamp(0.0, 1.0),
            _ => 1.0 / (1.0 + (-f).exp()),
        }
    }
}

/// Mean function values and the features they depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedResponse {
    pub f: Vec<f64>,
    /// `signal_columns[j]` is the column playing the role of the `j`-th signal term.
    pub signal_columns: Vec<usize>,
    pub signal_mask: Vec<bool>,
}

/// Evaluates the mean function of `spec` on the rows of `x`. With `permute_signals`, the
/// signal terms are assigned to a uniformly random set of distinct columns.
pub fn gen_response(x: &DMatrix<f64>, spec: &ResponseSpec, rng: SeededRng) -> Result<GeneratedResponse> {
    let (n, p) = x.shape();
    let s = spec.n_signals();
    if s == 0 {
        return Err(Error::InvalidParameter("response needs at least one signal term".into()));
    }
    if s > p {
        return Err(Error::InvalidParameter(format!(
            "response needs {s} signal features, covariates have {p}"
        )));
    }
    let signal_columns: Vec<usize> = if spec.permute_signals {
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut rng.generator());
        order.truncate(s);
        order
    } else {
        (0..s).collect()
    };
    let c = &signal_columns;
    let indicator = |i: usize, m: usize| {
        if x[(i, c[2 * m])] > 0.0 && x[(i, c[2 * m + 1])] > 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let m = spec.m_interactions;
    let f = (0..n)
        .map(|i| match spec.kind {
            ResponseKind::Linear => c.iter().map(|&j| x[(i, j)]).sum(),
            ResponseKind::Lss => (0..m).map(|k| indicator(i, k)).sum(),
            ResponseKind::PolyInteraction => (0..m)
                .map(|k| x[(i, c[2 * k])] + x[(i, c[2 * k])] * x[(i, c[2 * k + 1])])
                .sum(),
            ResponseKind::LinearPlusLss => (0..m).map(|k| x[(i, c[2 * k])] + indicator(i, k)).sum(),
            ResponseKind::Entropy => x[(i, c[0])],
        })
        .collect();
    let mut signal_mask = vec![false; p];
    for &j in c {
        signal_mask[j] = true;
    }
    Ok(GeneratedResponse {
        f,
        signal_columns,
        signal_mask,
    })
}

/// Nearest integer with ties to even, after snapping away floating-point noise so that
/// `100 * 0.05 / 2` counts as the tie 2.5.
fn round_count(x: f64) -> usize {
    ((x * 1e9).round() / 1e9).round_ties_even() as usize
}

/// Population variance (divisor `n`).
fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Noise variance giving proportion of variance explained `pve`:
/// `Var(f) * (1 - pve) / pve` with the empirical variance of `f`.
pub fn calibrate_noise(f: &[f64], pve: f64) -> Result<f64> {
    if !(pve > 0.0 && pve < 1.0) {
        return Err(Error::InvalidParameter(format!("pve must lie in (0, 1), got {pve}")));
    }
    if f.is_empty() {
        return Err(Error::InvalidData("no mean-function values".into()));
    }
    let var = variance(f);
    if var <= 0.0 {
        return Err(Error::InvalidData(
            "mean function is constant, so no noise level attains the target pve".into(),
        ));
    }
    Ok(var * (1.0 - pve) / pve)
}

/// `f + N(0, sigma2)` noise.
pub fn add_gaussian_noise(f: &[f64], sigma2: f64, rng: SeededRng) -> Vec<f64> {
    let mut g = rng.generator();
    let sd = sigma2.sqrt();
    f.iter()
        .map(|&v| v + sd * g.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Binary draws with `P(y_i = 1) = prob[i]`.
pub fn draw_bernoulli(prob: &[f64], rng: SeededRng) -> Vec<f64> {
    let mut g = rng.generator();
    prob.iter()
        .map(|&q| if g.gen::<f64>() < q { 1.0 } else { 0.0 })
        .collect()
}

/// Flips the 0/1 labels at `rows`.
pub fn flip_labels(y: &[f64], rows: &[usize]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &i in rows {
        out[i] = 1.0 - out[i];
    }
    out
}

/// Flips exactly `round(fraction * n)` uniformly chosen labels (ties to even). Returns the corrupted
/// labels and the flipped rows in ascending order.
pub fn corrupt_labels(y: &[f64], fraction: f64, rng: SeededRng) -> Result<(Vec<f64>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "label-corruption fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let count = round_count(fraction * y.len() as f64);
    let mut rows: Vec<usize> = (0..y.len()).collect();
    rows.shuffle(&mut rng.generator());
    rows.truncate(count);
    rows.sort_unstable();
    Ok((flip_labels(y, &rows), rows))
}

/// Outcome of [`inject_outliers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outliers {
    pub y: Vec<f64>,
    /// The non-signal feature whose tails were corrupted.
    pub feature: usize,
    /// Rows with the smallest values of `feature`; responses drawn from N(mu, 1).
    pub bottom: Vec<usize>,
    /// Rows with the largest values of `feature`; responses drawn from N(-mu, 1).
    pub top: Vec<usize>,
}

/// Corrupts the responses of the rows in the lower and upper `q/2` tails of a randomly
/// chosen non-signal feature. Each tail holds `round(n q / 2)` rows (ties to even), ordered by value
/// with ties broken by row index.
pub fn inject_outliers(
    x: &DMatrix<f64>,
    y: &[f64],
    signal_mask: &[bool],
    q: f64,
    mu_corrupt: f64,
    rng: SeededRng,
) -> Result<Outliers> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("outlier proportion q must lie in [0, 1), got {q}")));
    }
    let candidates: Vec<usize> = (0..signal_mask.len()).filter(|&j| !signal_mask[j]).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "outlier injection needs at least one non-signal feature".into(),
        ));
    }
    let mut g = rng.generator();
    let feature = candidates[g.gen_range(0..candidates.len())];
    let n = y.len();
    let per_tail = round_count(n as f64 * q / 2.0).min(n / 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[(a, feature)].total_cmp(&x[(b, feature)]).then(a.cmp(&b)));
    let bottom = order[..per_tail].to_vec();
    let top = order[n - per_tail..].to_vec();
    let mut out = y.to_vec();
    for &i in &bottom {
        out[i] = mu_corrupt + g.sample::<f64, _>(StandardNormal);
    }
    for &i in &top {
        out[i] = -mu_corrupt + g.sample::<f64, _>(StandardNormal);
    }
    Ok(Outliers {
        y: out,
        feature,
        bottom,
        top,
    })
}

/// Rows i.i.d. `N(0, Sigma)`: unit variances, pairwise correlation `rho` among the first
/// `block_size` features, every other feature independent.
pub fn gen_correlated_gaussian(n: usize, p: usize, rho: f64, block_size: usize, rng: SeededRng) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!("need n >= 1 and p >= 1, got {n}x{p}")));
    }
    if block_size > p {
        return Err(Error::InvalidParameter(format!(
            "correlated block of {block_size} exceeds p = {p}"
        )));
    }
    let lower = if block_size > 1 {
        -1.0 / (block_size as f64 - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho = {rho} does not give a positive-definite block of size {block_size}"
        )));
    }
    let b = block_size;
    let sigma = DMatrix::from_fn(b, b, |i, j| if i == j { 1.0 } else { rho });
    let l = Cholesky::new(sigma)
        .ok_or_else(|| Error::InvalidParameter(format!("rho = {rho} is not positive definite")))?
        .l();
    let mut g = rng.generator();
    let z = DMatrix::from_fn(p, n, |_, _| g.sample::<f64, _>(StandardNormal));
    let mut x = DMatrix::zeros(n, p);
    let correlated = &l * z.rows(0, b);
    for i in 0..n {
        for j in 0..b {
            x[(i, j)] = correlated[(j, i)];
        }
        for j in b..p {
            x[(i, j)] = z[(j, i)];
        }
    }
    Ok(x)
}

/// Five features of increasing entropy: Bernoulli(1/2), standard normal, and uniform
/// categories `0..C` for C = 4, 10, 20.
pub fn gen_entropy_features(n: usize, rng: SeededRng) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need n >= 1".into()));
    }
    let mut g = rng.generator();
    let mut x = DMatrix::zeros(n, 5);
    for i in 0..n {
        x[(i, 0)] = if g.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
        x[(i, 1)] = g.sample::<f64, _>(StandardNormal);
        x[(i, 2)] = g.gen_range(0..4) as f64;
        x[(i, 3)] = g.gen_range(0..10) as f64;
        x[(i, 4)] = g.gen_range(0..20) as f64;
    }
    Ok(x)
}
