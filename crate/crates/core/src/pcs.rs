//! Model recommendation among MDI+ variants: screen candidates by the test performance
//! of their RF+ predictor, pick the most stable ranking under bootstrap resampling of the
//! trees, and optionally ensemble the screened rankings by median rank.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SeededRng, Task};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::glm::GlmSpec;
use crate::importance::{mdi_plus, split_average, ImportanceReport, MdiPlusConfig, MdiPlusOptions, RfPlus};
use crate::metrics::{r_squared, ranking, rbo, SimilarityMetric, DEFAULT_RBO_PERSISTENCE};

/// Candidates within this margin of the RF baseline still pass the screen.
pub const SCREEN_TOL: f64 = 1e-9;
pub const DEFAULT_BOOTSTRAPS: usize = 10;
pub const SELECTION_SCHEMA_VERSION: u32 = 1;

fn default_true() -> bool {
    true
}

/// One MDI+ model: stump design (with or without raw features), GLM and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub id: String,
    #[serde(default = "default_true")]
    pub augment: bool,
    pub spec: GlmSpec,
    pub metric: SimilarityMetric,
    #[serde(default = "default_true")]
    pub loo: bool,
}

impl CandidateModel {
    pub fn new(id: impl Into<String>, spec: GlmSpec, metric: SimilarityMetric) -> Self {
        Self {
            id: id.into(),
            augment: true,
            spec,
            metric,
            loo: true,
        }
    }

    pub fn config(&self) -> MdiPlusConfig {
        MdiPlusConfig {
            spec: self.spec.clone(),
            metric: self.metric.clone(),
            options: MdiPlusOptions::new(self.augment, self.loo),
        }
    }

    /// MDI+ report of this model on `data`.
    pub fn report(&self, forest: &Forest, data: &Dataset) -> Result<ImportanceReport> {
        let c = self.config();
        let mut r = mdi_plus(forest, data, &c.spec, c.metric, c.options)?;
        r.method = self.id.clone();
        Ok(r)
    }
}

/// Parses a JSON array of candidates and checks ids are unique and non-empty.
pub fn parse_candidates(json: &str) -> Result<Vec<CandidateModel>> {
    let list: Vec<CandidateModel> = serde_json::from_str(json)?;
    if list.is_empty() {
        return Err(Error::InvalidParameter("candidate list is empty".into()));
    }
    for (i, c) in list.iter().enumerate() {
        if c.id.is_empty() {
            return Err(Error::InvalidParameter(format!("candidate {i} has an empty id")));
        }
        if list[..i].iter().any(|d| d.id == c.id) {
            return Err(Error::InvalidParameter(format!("candidate id `{}` is used twice", c.id)));
        }
    }
    Ok(list)
}

/// Test R² for regression, classification accuracy (threshold 0.5) for binary responses.
pub fn test_performance(task: Task, y: &[f64], pred: &[f64]) -> Result<f64> {
    match task {
        Task::Regression => r_squared(y, pred),
        Task::BinaryClassification => {
            let hits = y
                .iter()
                .zip(pred)
                .filter(|(&a, &b)| a == if b > 0.5 { 1.0 } else { 0.0 })
                .count();
            Ok(hits as f64 / y.len() as f64)
        }
    }
}

pub fn performance_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "r2",
        Task::BinaryClassification => "accuracy",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenEntry {
    pub id: String,
    pub test_performance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screening {
    /// Test performance of the forest itself.
    pub baseline: f64,
    pub entries: Vec<ScreenEntry>,
}

impl Screening {
    /// The candidates that passed, in their original order.
    pub fn passed<'a>(&self, candidates: &'a [CandidateModel]) -> Vec<&'a CandidateModel> {
        candidates
            .iter()
            .zip(&self.entries)
            .filter(|(_, e)| e.passed)
            .map(|(c, _)| c)
            .collect()
    }

    /// [`Screening::passed`], or [`Error::EmptyScreen`] if nothing passed.
    pub fn require_passed<'a>(&self, candidates: &'a [CandidateModel]) -> Result<Vec<&'a CandidateModel>> {
        let kept = self.passed(candidates);
        if kept.is_empty() {
            Err(Error::EmptyScreen)
        } else {
            Ok(kept)
        }
    }
}

/// Keeps the candidates whose RF+ predictor (GLM per tree of `forest`, fitted on `train`)
/// does at least as well on `test` as `forest` itself, up to [`SCREEN_TOL`].
pub fn prediction_screen(
    candidates: &[CandidateModel],
    train: &Dataset,
    test: &Dataset,
    forest: &Forest,
) -> Result<Screening> {
    let task = train.task();
    for c in candidates {
        c.config().validate(task)?;
    }
    let baseline = test_performance(task, test.response(), &forest.predict(test.features())?)?;
    let entries = candidates
        .iter()
        .map(|c| {
            let config = c.config();
            let model = RfPlus::fit(forest.clone(), train, &c.spec, c.augment, config.options.sample)?;
            let perf = test_performance(task, test.response(), &model.predict(test.features())?)?;
            Ok(ScreenEntry {
                id: c.id.clone(),
                test_performance: perf,
                passed: perf >= baseline - SCREEN_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Screening { baseline, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Number of bootstrap resamples of the trees.
    pub bootstraps: usize,
    pub persistence: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            bootstraps: DEFAULT_BOOTSTRAPS,
            persistence: DEFAULT_RBO_PERSISTENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateStability {
    pub id: String,
    /// Mean RBO over all pairs of bootstrap rankings.
    pub mean_rbo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityResult {
    pub per_candidate: Vec<CandidateStability>,
    pub chosen: String,
    pub bootstraps: usize,
    pub persistence: f64,
}

/// Forest-level ranking of a resample of trees, from per-tree scores: each feature is
/// averaged over the drawn trees that score it (with multiplicity), `-inf` if none do.
fn resample_ranking(report: &ImportanceReport, trees: &[usize], p: usize) -> Vec<usize> {
    let per_tree = report.per_tree.as_ref().expect("per-tree scores are checked by the caller");
    if let Some(splits) = &report.tree_splits {
        let scores: Vec<Vec<f64>> = per_tree
            .iter()
            .map(|row| row.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
            .collect();
        return ranking(&split_average(&scores, splits, trees.iter().copied(), p));
    }
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for &t in trees {
        for (k, v) in per_tree[t].iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
    }
    let scores: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { f64::NEG_INFINITY } else { s / c as f64 })
        .collect();
    ranking(&scores)
}

/// Stability selection from full-forest reports that keep their per-tree scores.
///
/// Bootstrap `b` draws `T` tree indices with replacement from `rng.derive(b)`; the same
/// draws are used for every candidate. Ties in mean RBO go to the earlier candidate.
pub fn stability_from_reports(
    reports: &[ImportanceReport],
    options: StabilityOptions,
    rng: SeededRng,
) -> Result<StabilityResult> {
    if options.bootstraps < 2 {
        return Err(Error::InvalidParameter(format!(
            "stability selection needs at least 2 bootstraps, got {}",
            options.bootstraps
        )));
    }
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("no candidates to select from".into()))?;
    let n_trees = first.per_tree.as_ref().map_or(0, Vec::len);
    if n_trees < 2 {
        return Err(Error::InvalidParameter(format!(
            "stability selection needs a forest of at least 2 trees, got {n_trees}"
        )));
    }
    for r in reports {
        if r.per_tree.as_ref().map_or(0, Vec::len) != n_trees || r.feature_names != first.feature_names {
            return Err(Error::Incompatible(format!(
                "report `{}` does not come from the same forest and features",
                r.method
            )));
        }
    }
    let draws: Vec<Vec<usize>> = (0..options.bootstraps)
        .map(|b| {
            let mut g = rng.derive(b as u64).generator();
            (0..n_trees).map(|_| g.gen_range(0..n_trees)).collect()
        })
        .collect();
    let p = first.n_features();
    let per_candidate = reports
        .par_iter()
        .map(|r| {
            let rankings: Vec<Vec<usize>> = draws.iter().map(|d| resample_ranking(r, d, p)).collect();
            let mut total = 0.0;
            let mut pairs = 0usize;
            for a in 0..rankings.len() {
                for b in a + 1..rankings.len() {
                    total += rbo(&rankings[a], &rankings[b], options.persistence)?;
                    pairs += 1;
                }
            }
            Ok(CandidateStability {
                id: r.method.clone(),
                mean_rbo: total / pairs as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, c) in per_candidate.iter().enumerate() {
        if c.mean_rbo > per_candidate[best].mean_rbo {
            best = i;
        }
    }
    Ok(StabilityResult {
        chosen: per_candidate[best].id.clone(),
        per_candidate,
        bootstraps: options.bootstraps,
        persistence: options.persistence,
    })
}

/// Bootstrap-of-trees stability selection: each candidate's MDI+ ranking is recomputed on
/// `B` resampled forests, and the candidate with the highest mean pairwise RBO wins.
pub fn stability_select(
    screened: &[CandidateModel],
    forest: &Forest,
    data: &Dataset,
    options: StabilityOptions,
    rng: SeededRng,
) -> Result<(StabilityResult, Vec<ImportanceReport>)> {
    let reports = screened
        .iter()
        .map(|c| c.report(forest, data))
        .collect::<Result<Vec<_>>>()?;
    Ok((stability_from_reports(&reports, options, rng)?, reports))
}

/// Median of `v` (mean of the two middle values for even length).
fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median-rank ensemble: per feature, the median of its ranks across `reports`; the
/// score is the negative median so that higher is better, ties go to the lower index.
pub fn ensemble_rank(reports: &[ImportanceReport]) -> Result<ImportanceReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to ensemble".into()))?;
    for r in reports {
        if r.feature_names != first.feature_names {
            return Err(Error::Incompatible(format!(
                "report `{}` covers different features than `{}`",
                r.method, first.method
            )));
        }
    }
    let ranks: Vec<Vec<usize>> = reports.iter().map(ImportanceReport::ranks).collect();
    let p = first.n_features();
    let per_feature: Vec<f64> = (0..p)
        .map(|k| {
            let mut v: Vec<f64> = ranks.iter().map(|r| r[k] as f64).collect();
            -median(&mut v)
        })
        .collect();
    let n_trees_contributing = (0..p)
        .map(|k| reports.iter().map(|r| r.n_trees_contributing[k]).min().unwrap_or(0))
        .collect();
    Ok(ImportanceReport {
        method: "ensemble".into(),
        feature_names: first.feature_names.clone(),
        ranking: ranking(&per_feature),
        per_feature,
        per_tree: None,
        tree_splits: None,
        n_trees_contributing,
        config: None,
        notes: vec![format!(
            "median rank over {}",
            reports.iter().map(|r| r.method.as_str()).collect::<Vec<_>>().join(", ")
        )],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: String,
    pub test_performance: f64,
    /// `None` for candidates that did not take part in stability selection.
    pub mean_rbo: Option<f64>,
    pub screened: bool,
    pub chosen: bool,
}

/// The selection summary written by the `stability` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub schema_version: u32,
    pub performance_metric: String,
    pub baseline_performance: f64,
    pub bootstraps: usize,
    pub persistence: f64,
    /// True when no candidate passed the screen and all were used instead.
    pub screen_fallback: bool,
    pub chosen: String,
    pub candidates: Vec<CandidateSummary>,
}

impl SelectionSummary {
    pub fn new(task: Task, screening: &Screening, stability: &StabilityResult, screen_fallback: bool) -> Self {
        let candidates = screening
            .entries
            .iter()
            .map(|e| CandidateSummary {
                id: e.id.clone(),
                test_performance: e.test_performance,
                mean_rbo: stability
                    .per_candidate
                    .iter()
                    .find(|c| c.id == e.id)
                    .map(|c| c.mean_rbo),
                screened: e.passed,
                chosen: e.id == stability.chosen,
            })
            .collect();
        Self {
            schema_version: SELECTION_SCHEMA_VERSION,
            performance_metric: performance_name(task).into(),
            baseline_performance: screening.baseline,
            bootstraps: stability.bootstraps,
            persistence: stability.persistence,
            screen_fallback,
            chosen: stability.chosen.clone(),
            candidates,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
