use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    add_gaussian_noise, calibrate_noise, corrupt_labels, draw_bernoulli, gen_correlated_gaussian,
    gen_entropy_features, gen_response, inject_outliers, ResponseSpec,
};
use crate::data::{load_features_csv, Dataset, SeededRng, Task};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestParams};
use crate::glm::{Family, GlmSpec};
use crate::importance::{
    format_score, mda, mdi_classical, mdi_oob, mdi_plus, ImportanceReport, MdaOptions, MdiPlusConfig,
    MdiPlusOptions,
};
use crate::metrics::{auroc, SimilarityMetric};

fn default_p() -> usize {
    100
}

fn default_block() -> usize {
    50
}

fn default_one() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_replicates() -> usize {
    50
}

/// Where each replicate's covariate matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateSpec {
    /// Every column of a headed numeric CSV; `n` rows subsampled per replicate if given.
    Csv {
        path: PathBuf,
        #[serde(default)]
        n: Option<usize>,
    },
    CorrelatedGaussian {
        n: usize,
        #[serde(default = "default_p")]
        p: usize,
        rho: f64,
        #[serde(default = "default_block")]
        block_size: usize,
    },
    EntropyMix { n: usize },
}

impl CovariateSpec {
    fn generate(&self, rng: SeededRng) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
        match self {
            CovariateSpec::Csv { path, n } => {
                let (x, names) = load_features_csv(path)?;
                let Some(n) = *n else {
                    return Ok((x, Some(names)));
                };
                if n == 0 || n > x.nrows() {
                    return Err(Error::InvalidParameter(format!(
                        "cannot subsample {n} of {} covariate rows",
                        x.nrows()
                    )));
                }
                let mut rows: Vec<usize> = (0..x.nrows()).collect();
                rows.shuffle(&mut rng.generator());
                rows.truncate(n);
                rows.sort_unstable();
                Ok((x.select_rows(&rows), Some(names)))
            }
            &CovariateSpec::CorrelatedGaussian {
                n,
                p,
                rho,
                block_size,
            } => Ok((gen_correlated_gaussian(n, p, rho, block_size, rng)?, None)),
            &CovariateSpec::EntropyMix { n } => Ok((gen_entropy_features(n, rng)?, None)),
        }
    }
}

/// Noise applied to the mean function. Regression uses `pve` and outliers; binary
/// responses use label corruption.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Target proportion of variance explained; `None` leaves `y = f`.
    #[serde(default)]
    pub pve: Option<f64>,
    #[serde(default)]
    pub corrupt_fraction: f64,
    #[serde(default)]
    pub outlier_q: f64,
    #[serde(default)]
    pub mu_corrupt: f64,
}

/// One importance method evaluated in every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodSpec {
    Mdi,
    MdiOob,
    Mda {
        #[serde(default = "default_one")]
        repeats: usize,
    },
    MdiPlus {
        /// Column label in the results; defaults to `mdi-plus` or `mdi-plus-<family>`.
        #[serde(default)]
        label: Option<String>,
        /// GLM; defaults to ridge (regression) or l2-logistic (binary).
        #[serde(default)]
        spec: Option<GlmSpec>,
        /// Similarity metric; defaults to the natural one for the GLM family.
        #[serde(default)]
        metric: Option<SimilarityMetric>,
        #[serde(default = "default_true")]
        augment_raw: bool,
        #[serde(default = "default_true")]
        loo: bool,
    },
}

impl MethodSpec {
    pub fn mdi_plus(family: Family) -> Self {
        MethodSpec::MdiPlus {
            label: None,
            spec: Some(GlmSpec::new(family)),
            metric: None,
            augment_raw: true,
            loo: true,
        }
    }

    pub fn mdi_plus_default() -> Self {
        MethodSpec::MdiPlus {
            label: None,
            spec: None,
            metric: None,
            augment_raw: true,
            loo: true,
        }
    }

    pub fn name(&self) -> String {
        match self {
            MethodSpec::Mdi => "mdi".into(),
            MethodSpec::MdiOob => "mdi-oob".into(),
            MethodSpec::Mda { .. } => "mda".into(),
            MethodSpec::MdiPlus { label: Some(l), .. } => l.clone(),
            MethodSpec::MdiPlus { spec: None, .. } => "mdi-plus".into(),
            MethodSpec::MdiPlus { spec: Some(s), .. } => format!("mdi-plus-{}", s.family.name()),
        }
    }

    /// The MDI+ configuration this method runs on a `task` response.
    pub fn mdi_plus_config(&self, task: Task) -> Option<MdiPlusConfig> {
        let MethodSpec::MdiPlus {
            spec,
            metric,
            augment_raw,
            loo,
            ..
        } = self
        else {
            return None;
        };
        let base = MdiPlusConfig::default_for(task);
        let spec = spec.clone().unwrap_or(base.spec);
        let metric = metric.clone().unwrap_or(match spec.family {
            Family::LogisticL2 => SimilarityMetric::NegLogLoss,
            Family::HuberRidge => SimilarityMetric::NegHuberLoss { delta: None },
            Family::Ols | Family::Ridge => SimilarityMetric::RSquared,
        });
        Some(MdiPlusConfig {
            spec,
            metric,
            options: MdiPlusOptions::new(*augment_raw, *loo),
        })
    }

    pub fn compute(&self, forest: &Forest, data: &Dataset, rng: SeededRng) -> Result<ImportanceReport> {
        let mut report = match self {
            MethodSpec::Mdi => mdi_classical(forest, data),
            MethodSpec::MdiOob => mdi_oob(forest, data)?,
            &MethodSpec::Mda { repeats } => mda(forest, data, rng, MdaOptions { repeats })?,
            MethodSpec::MdiPlus { .. } => {
                let c = self.mdi_plus_config(data.task()).expect("mdi-plus method");
                mdi_plus(forest, data, &c.spec, c.metric, c.options)?
            }
        };
        report.method = self.name();
        Ok(report)
    }
}

/// Named feature set whose mean rank is reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGroup {
    pub name: &'static str,
    pub features: Vec<usize>,
}

/// A full experiment: data-generating process, forest, methods and replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub covariates: CovariateSpec,
    pub response: ResponseSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Defaults to the regression or classification forest settings.
    #[serde(default)]
    pub forest_params: Option<ForestParams>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Report every feature's rank, not only AUROC and group ranks.
    #[serde(default)]
    pub feature_ranks: bool,
}

impl ExperimentConfig {
    pub fn task(&self) -> Task {
        if self.response.logistic_link {
            Task::BinaryClassification
        } else {
            Task::Regression
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        self.forest_params
            .clone()
            .unwrap_or_else(|| ForestParams::default_for(self.task()))
    }

    /// The same experiment with every default written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.forest_params = Some(self.forest_params());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no importance methods requested".into());
        }
        let mut seen = HashMap::new();
        for m in &self.methods {
            if seen.insert(m.name(), ()).is_some() {
                return bad(format!("method label `{}` is used twice", m.name()));
            }
            if let Some(c) = m.mdi_plus_config(self.task()) {
                c.validate(self.task())?;
            }
        }
        let noise = &self.noise;
        match self.task() {
            Task::BinaryClassification => {
                if noise.pve.is_some() || noise.outlier_q != 0.0 {
                    return bad("pve and outliers apply to regression responses only".into());
                }
                if !(0.0..1.0).contains(&noise.corrupt_fraction) {
                    return bad(format!("corrupt_fraction must lie in [0, 1), got {}", noise.corrupt_fraction));
                }
            }
            Task::Regression => {
                if noise.corrupt_fraction != 0.0 {
                    return bad("label corruption applies to binary responses only".into());
                }
                if let Some(pve) = noise.pve {
                    if !(pve > 0.0 && pve < 1.0) {
                        return bad(format!("pve must lie in (0, 1), got {pve}"));
                    }
                }
                if !(0.0..1.0).contains(&noise.outlier_q) {
                    return bad(format!("outlier_q must lie in [0, 1), got {}", noise.outlier_q));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub data: Dataset,
    pub signal_columns: Vec<usize>,
    pub signal_mask: Vec<bool>,
    pub groups: Vec<FeatureGroup>,
    /// Noise variance used for regression responses.
    pub sigma2: Option<f64>,
}

fn stage<T>(replicate: usize, name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Replicate {
        replicate,
        stage: name,
        source: Box::new(e),
    })
}

/// Generates replicate `index` of `config` from stream `seed.derive(index)`.
pub fn generate_replicate(config: &ExperimentConfig, index: usize) -> Result<Replicate> {
    let rng = SeededRng::new(config.seed).derive(index as u64);
    let (x, names) = stage(index, "covariates", config.covariates.generate(rng.derive(0)))?;
    let response = stage(index, "response", gen_response(&x, &config.response, rng.derive(1)))?;
    let noise = &config.noise;
    let task = config.task();
    let (y, sigma2) = stage(index, "noise", (|| -> Result<_> {
        match task {
            Task::BinaryClassification => {
                let prob: Vec<f64> = response
                    .f
                    .iter()
                    .map(|&f| config.response.class_probability(f))
                    .collect();
                let y = draw_bernoulli(&prob, rng.derive(2));
                let y = if noise.corrupt_fraction > 0.0 {
                    corrupt_labels(&y, noise.corrupt_fraction, rng.derive(3))?.0
                } else {
                    y
                };
                Ok((y, None))
            }
            Task::Regression => {
                let (mut y, sigma2) = match noise.pve {
                    Some(pve) => {
                        let s2 = calibrate_noise(&response.f, pve)?;
                        (add_gaussian_noise(&response.f, s2, rng.derive(2)), Some(s2))
                    }
                    None => (response.f.clone(), None),
                };
                if noise.outlier_q > 0.0 {
                    y = inject_outliers(&x, &y, &response.signal_mask, noise.outlier_q, noise.mu_corrupt, rng.derive(3))?.y;
                }
                Ok((y, sigma2))
            }
        }
    })())?;
    let groups = match config.covariates {
        CovariateSpec::CorrelatedGaussian { p, block_size, .. } => {
            let mask = &response.signal_mask;
            let pick = |f: &dyn Fn(usize) -> bool| (0..p).filter(|&j| f(j)).collect::<Vec<_>>();
            vec![
                FeatureGroup {
                    name: "Sig",
                    features: pick(&|j| mask[j]),
                },
                FeatureGroup {
                    name: "C-NSig",
                    features: pick(&|j| !mask[j] && j < block_size),
                },
                FeatureGroup {
                    name: "NSig",
                    features: pick(&|j| !mask[j] && j >= block_size),
                },
            ]
        }
        _ => Vec::new(),
    };
    let data = stage(
        index,
        "dataset",
        match names {
            Some(names) => Dataset::new(x, y, task, names),
            None => Dataset::from_matrix(x, y, task),
        },
    )?;
    Ok(Replicate {
        index,
        data,
        signal_columns: response.signal_columns,
        signal_mask: response.signal_mask,
        groups,
        sigma2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub replicate: usize,
    pub method: String,
    pub metric_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub metric_name: String,
    pub mean: f64,
    /// Sample standard deviation over replicates divided by sqrt(replicates).
    pub stderr: f64,
}

/// Per-replicate scores in replicate order, then method order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    /// Columns carrying the signal terms, per replicate.
    pub signal_columns: Vec<Vec<usize>>,
}

fn score_rows(rep: &Replicate, report: &ImportanceReport, feature_ranks: bool) -> Result<Vec<ResultRow>> {
    let row = |metric_name: String, value: f64| ResultRow {
        replicate: rep.index,
        method: report.method.clone(),
        metric_name,
        value,
    };
    let mut out = Vec::new();
    let mask = &rep.signal_mask;
    if mask.iter().any(|&s| s) && mask.iter().any(|&s| !s) {
        out.push(row("auroc".into(), auroc(&report.per_feature, mask)?));
    }
    let ranks = report.ranks();
    for g in &rep.groups {
        if !g.features.is_empty() {
            let mean = g.features.iter().map(|&k| ranks[k] as f64).sum::<f64>() / g.features.len() as f64;
            out.push(row(format!("group_rank:{}", g.name), mean));
        }
    }
    if feature_ranks {
        for (k, name) in report.feature_names.iter().enumerate() {
            out.push(row(format!("rank:{name}"), ranks[k] as f64));
        }
    }
    Ok(out)
}

fn run_replicate(config: &ExperimentConfig, params: &ForestParams, index: usize) -> Result<Vec<ResultRow>> {
    let rep = generate_replicate(config, index)?;
    let rng = SeededRng::new(config.seed).derive(index as u64);
    let forest = stage(index, "forest", fit_forest(&rep.data, params, rng.derive(4)))?;
    let mut rows = Vec::new();
    for (m, method) in config.methods.iter().enumerate() {
        let report = stage(
            index,
            "importance",
            method.compute(&forest, &rep.data, rng.derive(5).derive(m as u64)),
        )?;
        rows.extend(stage(index, "scoring", score_rows(&rep, &report, config.feature_ranks))?);
    }
    Ok(rows)
}

/// Runs every replicate (concurrently, each on its own derived stream) and collects the
/// scores in replicate order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let params = config.forest_params();
    let per_rep = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, &params, r))
        .collect::<Result<Vec<_>>>()?;
    let signal_columns = (0..config.replicates)
        .map(|r| generate_replicate(config, r).map(|rep| rep.signal_columns))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResults {
        config: config.resolved(),
        rows: per_rep.into_iter().flatten().collect(),
        signal_columns,
    })
}

/// `v` rounded to `digits` significant digits, printed in shortest form.
pub(crate) fn format_significant(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return format_score(v);
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .expect("formatted float parses");
    format!("{rounded}")
}

fn csv_string(records: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl ExperimentResults {
    /// Mean and standard error per (method, metric), in order of first appearance.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(String, String)> = Vec::new();
        let mut values: HashMap<(String, String), Vec<f64>> = HashMap::new();
        for r in &self.rows {
            let key = (r.method.clone(), r.metric_name.clone());
            values
                .entry(key.clone())
                .or_insert_with(|| {
                    keys.push(key);
                    Vec::new()
                })
                .push(r.value);
        }
        keys.into_iter()
            .map(|key| {
                let v = &values[&key];
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let stderr = if v.len() < 2 {
                    f64::NAN
                } else {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
                };
                SummaryRow {
                    method: key.0,
                    metric_name: key.1,
                    mean,
                    stderr,
                }
            })
            .collect()
    }

    /// Values of one (method, metric) pair in replicate order.
    pub fn values(&self, method: &str, metric_name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric_name == metric_name)
            .map(|r| r.value)
            .collect()
    }

    /// `replicate,method,metric_name,value` with exact (round-trip) values.
    pub fn results_csv(&self) -> Result<String> {
        let mut records = vec![vec!["replicate".into(), "method".into(), "metric_name".into(), "value".into()]];
        records.extend(self.rows.iter().map(|r| {
            vec![
                r.replicate.to_string(),
                r.method.clone(),
                r.metric_name.clone(),
                format_score(r.value),
            ]
        }));
        csv_string(records)
    }

    /// `method,metric_name,mean,stderr` with 10 significant digits.
    pub fn summary_csv(&self) -> Result<String> {
        let mut records = vec![vec!["method".into(), "metric_name".into(), "mean".into(), "stderr".into()]];
        records.extend(self.summary().into_iter().map(|s| {
            vec![
                s.method,
                s.metric_name,
                format_significant(s.mean, 10),
                format_significant(s.stderr, 10),
            ]
        }));
        csv_string(records)
    }

    /// `replicate,term,column`: the column that carried each signal term.
    pub fn signals_csv(&self) -> Result<String> {
        let mut records = vec![vec!["replicate".into(), "term".into(), "column".into()]];
        for (r, cols) in self.signal_columns.iter().enumerate() {
            for (t, c) in cols.iter().enumerate() {
                records.push(vec![r.to_string(), t.to_string(), c.to_string()]);
            }
        }
        csv_string(records)
    }
}
