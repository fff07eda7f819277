//! Similarity metrics between responses and predictions, ranking helpers, AUROC and
//! rank-biased overlap.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{clamp_probability, Link};

/// Agreement between `y` and a prediction; larger is always better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimilarityMetric {
    /// `1 - RSS/TSS`.
    RSquared,
    /// `(TSS - RSS)/n`: the R² scaled by the response variance, defined for constant `y`.
    UnnormalizedRSquared,
    NegLogLoss,
    /// Negative mean Huber loss; `delta: None` takes the threshold of the GLM being scored.
    NegHuberLoss { delta: Option<f64> },
}

impl SimilarityMetric {
    pub fn name(&self) -> &'static str {
        match self {
            SimilarityMetric::RSquared => "r2",
            SimilarityMetric::UnnormalizedRSquared => "r2-unnormalized",
            SimilarityMetric::NegLogLoss => "neg-log-loss",
            SimilarityMetric::NegHuberLoss { .. } => "neg-huber",
        }
    }

    /// Whether predictions made through `link` can be scored by this metric.
    pub fn check_link(&self, link: Link) -> Result<()> {
        let ok = match self {
            SimilarityMetric::NegLogLoss => link == Link::Logit,
            SimilarityMetric::NegHuberLoss { .. } => link == Link::Identity,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Incompatible(format!(
                "metric {} cannot score predictions from a {link:?} link",
                self.name()
            )))
        }
    }

    /// Scores `yhat` against `y`. `fit_delta` supplies the Huber threshold when the
    /// metric does not fix one.
    pub fn score(&self, y: &[f64], yhat: &[f64], fit_delta: Option<f64>) -> Result<f64> {
        match *self {
            SimilarityMetric::RSquared => r_squared(y, yhat),
            SimilarityMetric::UnnormalizedRSquared => unnormalized_r_squared(y, yhat),
            SimilarityMetric::NegLogLoss => neg_log_loss(y, yhat),
            SimilarityMetric::NegHuberLoss { delta } => {
                let d = delta.or(fit_delta).ok_or_else(|| {
                    Error::Incompatible("neg-huber needs a threshold when the GLM is not Huber".into())
                })?;
                neg_huber_loss(y, yhat, d)
            }
        }
    }
}

impl std::str::FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r2" | "r-squared" => Ok(SimilarityMetric::RSquared),
            "r2-unnormalized" => Ok(SimilarityMetric::UnnormalizedRSquared),
            "neg-log-loss" => Ok(SimilarityMetric::NegLogLoss),
            "neg-huber" | "neg-huber-loss" => Ok(SimilarityMetric::NegHuberLoss { delta: None }),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Metric("empty input".into()));
    }
    Ok(())
}

fn sums_of_squares(y: &[f64], yhat: &[f64]) -> (f64, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    (tss, rss)
}

pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    let (tss, rss) = sums_of_squares(y, yhat);
    if tss <= 0.0 {
        return Err(Error::Metric("R² undefined for a constant response".into()));
    }
    Ok(1.0 - rss / tss)
}

pub fn unnormalized_r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    let (tss, rss) = sums_of_squares(y, yhat);
    Ok((tss - rss) / y.len() as f64)
}

pub fn neg_log_loss(y: &[f64], p: &[f64]) -> Result<f64> {
    check_lengths(y.len(), p.len())?;
    let total: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let q = clamp_probability(pi);
            yi * q.ln() + (1.0 - yi) * (1.0 - q).ln()
        })
        .sum();
    Ok(total / y.len() as f64)
}

pub fn neg_huber_loss(y: &[f64], yhat: &[f64], delta: f64) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("huber delta must be positive, got {delta}")));
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| crate::glm::huber_loss(a - b, delta))
        .sum();
    Ok(-total / y.len() as f64)
}

/// Order used for rankings: descending score, NaN treated as −∞, ties by lower index.
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    key(scores[b]).total_cmp(&key(scores[a])).then(a.cmp(&b))
}

/// Feature indices from most to least important.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| rank_order(scores, a, b));
    idx
}

/// 1-based rank of each feature under [`ranking`].
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut out = vec![0; scores.len()];
    for (pos, k) in ranking(scores).into_iter().enumerate() {
        out[k] = pos + 1;
    }
    out
}

/// Probability that a signal feature outscores a non-signal one, ties counting ½.
pub fn auroc(scores: &[f64], signal: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), signal.len())?;
    let pos: Vec<f64> = scores.iter().zip(signal).filter(|(_, &s)| s).map(|(&v, _)| v).collect();
    let neg: Vec<f64> = scores.iter().zip(signal).filter(|(_, &s)| !s).map(|(&v, _)| v).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Metric("AUROC needs both signal and non-signal features".into()));
    }
    let mut wins = 0.0;
    for &a in &pos {
        for &b in &neg {
            wins += match a.partial_cmp(&b) {
                Some(Ordering::Greater) => 1.0,
                Some(Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

pub const DEFAULT_RBO_PERSISTENCE: f64 = 0.9;

/// Rank-biased overlap of two complete rankings of the same items, normalized so that
/// identical rankings score exactly 1:
/// `sum_d p^(d-1) |A[..d] ∩ B[..d]| / d  /  sum_d p^(d-1)`.
pub fn rbo(a: &[usize], b: &[usize], persistence: f64) -> Result<f64> {
    if !(persistence > 0.0 && persistence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "RBO persistence must lie in (0, 1), got {persistence}"
        )));
    }
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Metric("RBO needs two non-empty rankings of equal length".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa.windows(2).any(|w| w[0] == w[1]) || sa != sb {
        return Err(Error::Metric("RBO inputs must be permutations of the same items".into()));
    }
    let slot = |v: usize| sa.binary_search(&v).expect("validated above");
    let mut in_a = vec![false; a.len()];
    let mut in_b = vec![false; a.len()];
    let (mut overlap, mut num, mut den, mut w) = (0usize, 0.0, 0.0, 1.0);
    for d in 0..a.len() {
        let (x, y) = (slot(a[d]), slot(b[d]));
        in_a[x] = true;
        if in_b[x] {
            overlap += 1;
        }
        in_b[y] = true;
        if in_a[y] {
            overlap += 1;
        }
        num += w * overlap as f64 / (d + 1) as f64;
        den += w;
        w *= persistence;
    }
    Ok(num / den)
}
