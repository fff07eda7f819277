//! The `mdiplus` command line: `fit`, `importance`, `stability`, `simulate`, and `replay`
//! of a manifest written by any of them.
//!
//! Every command resolves its flags into a [`RunConfig`], writes it to `manifest.json`
//! next to its outputs, and produces those outputs from the config alone, so replaying a
//! manifest reproduces the run byte for byte.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, write_file, Dataset, SeededRng, Task};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestParams, MaxFeatures};
use crate::glm::{Family, GlmSpec};
use crate::importance::{
    mda, mdi_classical, mdi_oob, mdi_plus, mdi_via_r2_forest, EvalSample, ImportanceReport, MdaOptions,
    MdiPlusConfig, MdiPlusOptions,
};
use crate::metrics::{SimilarityMetric, DEFAULT_RBO_PERSISTENCE};
use crate::pcs::{
    ensemble_rank, parse_candidates, performance_name, prediction_screen, stability_select, test_performance,
    CandidateModel, SelectionSummary, StabilityOptions, DEFAULT_BOOTSTRAPS,
};
use crate::sim::{apply_overrides, format_significant, preset, run_experiment, ExperimentConfig, PresetOverrides};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const METRICS_SCHEMA_VERSION: u32 = 1;
/// Default worker thread count when `--threads` is not given.
pub const THREADS_ENV: &str = "MDIPLUS_THREADS";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_EMPTY_SCREEN: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mdiplus", version, about = "Random-forest feature importance with MDI+")]
struct Cli {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a random forest on a CSV file.
    Fit(FitArgs),
    /// Feature importances of a trained forest.
    Importance(ImportanceArgs),
    /// Choose among MDI+ candidate models by prediction screening and stability.
    Stability(StabilityArgs),
    /// Run a simulation study from a preset or an experiment config.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct ForestArgs {
    #[arg(long)]
    n_trees: Option<usize>,
    /// auto, third, sqrt, all, or a count.
    #[arg(long)]
    max_features: Option<String>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl ForestArgs {
    fn resolve(&self, task: Task) -> Result<ForestParams> {
        let mut p = ForestParams::default_for(task);
        if let Some(t) = self.n_trees {
            p.n_trees = t;
        }
        if let Some(m) = &self.max_features {
            p.max_features = match m.as_str() {
                "auto" => MaxFeatures::Auto,
                "third" => MaxFeatures::Third,
                "sqrt" => MaxFeatures::Sqrt,
                "all" => MaxFeatures::All,
                other => MaxFeatures::Count(other.parse().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "--max-features: expected auto, third, sqrt, all or a count, got `{other}`"
                    ))
                })?),
            };
        }
        if let Some(m) = self.min_samples_leaf {
            p.min_samples_leaf = m;
        }
        if self.max_depth.is_some() {
            p.max_depth = self.max_depth;
        }
        if p.n_trees == 0 {
            return Err(Error::InvalidParameter("--n-trees must be at least 1".into()));
        }
        if p.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("--min-samples-leaf must be at least 1".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Training CSV.
    #[arg(long)]
    data: PathBuf,
    /// Optional held-out CSV for test metrics.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// regression or binary.
    #[arg(long, default_value = "regression")]
    task: Task,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    forest: ForestArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodName {
    Mdi,
    MdiR2,
    MdiOob,
    Mda,
    MdiPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GlmName {
    Ols,
    Ridge,
    Logistic,
    Huber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricName {
    R2,
    R2Unnormalized,
    NegLogLoss,
    NegHuber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalRows {
    InBag,
    Full,
}

#[derive(Debug, Args)]
struct ImportanceArgs {
    /// Forest JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// The CSV the forest was trained on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mdi,mdi-plus")]
    methods: Vec<MethodName>,
    /// GLM for mdi-plus; defaults to ridge, or logistic for binary responses.
    #[arg(long, value_enum)]
    glm: Option<GlmName>,
    /// Similarity metric for mdi-plus; defaults to the one matching the GLM's loss.
    #[arg(long, value_enum)]
    metric: Option<MetricName>,
    /// Leave raw features out of the mdi-plus design.
    #[arg(long)]
    no_raw: bool,
    /// Score in-sample fits instead of leave-one-out predictions.
    #[arg(long)]
    no_loo: bool,
    /// Rows each tree's GLM is fitted and scored on; defaults to full with LOO, in-bag without.
    #[arg(long, value_enum)]
    eval_rows: Option<EvalRows>,
    #[arg(long, default_value_t = 1)]
    mda_repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    /// JSON array of candidate models.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    response: String,
    /// Used when no --model is given; otherwise the model's task applies.
    #[arg(long, default_value = "regression")]
    task: Task,
    /// Forest trained on --train; one is fitted when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAPS)]
    bootstraps: usize,
    #[arg(long, default_value_t = DEFAULT_RBO_PERSISTENCE)]
    persistence: f64,
    /// Also write the median-rank ensemble of the screened candidates.
    #[arg(long)]
    ensemble: bool,
    /// Select among all candidates when none passes the prediction screen.
    #[arg(long)]
    fallback_all: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in experiment name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    pve: Option<f64>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// A fully resolved command: everything needed to reproduce its outputs except the output
/// directory and the thread count, neither of which affects them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Fit(FitRun),
    Importance(ImportanceRun),
    Stability(StabilityRun),
    Simulate(SimulateRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRun {
    pub data: PathBuf,
    pub test: Option<PathBuf>,
    pub response: String,
    pub task: Task,
    pub seed: u64,
    pub forest: ForestParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ImportanceMethod {
    Mdi,
    MdiR2,
    MdiOob,
    Mda { repeats: usize },
    MdiPlus(MdiPlusConfig),
}

impl ImportanceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ImportanceMethod::Mdi => "mdi",
            ImportanceMethod::MdiR2 => "mdi-r2",
            ImportanceMethod::MdiOob => "mdi-oob",
            ImportanceMethod::Mda { .. } => "mda",
            ImportanceMethod::MdiPlus(_) => "mdi-plus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRun {
    pub model: PathBuf,
    pub data: PathBuf,
    pub response: String,
    pub seed: u64,
    pub methods: Vec<ImportanceMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub train: PathBuf,
    pub test: PathBuf,
    pub response: String,
    pub task: Task,
    /// Either a trained forest or the parameters to fit one with `seed`.
    pub model: Option<PathBuf>,
    pub forest: Option<ForestParams>,
    pub seed: u64,
    pub candidates: Vec<CandidateModel>,
    pub stability: StabilityOptions,
    pub ensemble: bool,
    pub fallback_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRun {
    pub preset: Option<String>,
    pub experiments: Vec<SimulateExperiment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateExperiment {
    /// Subdirectory of the outputs; empty for a single experiment.
    pub name: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(flatten)]
    pub run: RunConfig,
}

impl Manifest {
    pub fn new(run: RunConfig) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            run,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&s)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "{}: manifest schema_version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }
}

fn default_metric(family: Family) -> SimilarityMetric {
    match family {
        Family::LogisticL2 => SimilarityMetric::NegLogLoss,
        Family::HuberRidge => SimilarityMetric::NegHuberLoss { delta: None },
        Family::Ols | Family::Ridge => SimilarityMetric::RSquared,
    }
}

fn resolve_fit(a: FitArgs) -> Result<RunConfig> {
    Ok(RunConfig::Fit(FitRun {
        forest: a.forest.resolve(a.task)?,
        data: a.data,
        test: a.test,
        response: a.response,
        task: a.task,
        seed: a.seed,
    }))
}

fn resolve_importance(a: ImportanceArgs) -> Result<RunConfig> {
    let forest = Forest::load(&a.model)?;
    let task = forest.task();
    let has_plus = a.methods.contains(&MethodName::MdiPlus);
    if !has_plus {
        let stray = [
            (a.glm.is_some(), "--glm"),
            (a.metric.is_some(), "--metric"),
            (a.no_raw, "--no-raw"),
            (a.no_loo, "--no-loo"),
            (a.eval_rows.is_some(), "--eval-rows"),
        ];
        if let Some((_, flag)) = stray.iter().find(|(set, _)| *set) {
            return Err(Error::InvalidParameter(format!("{flag} applies to mdi-plus, which is not in --methods")));
        }
    }
    let mut methods = Vec::new();
    for (i, m) in a.methods.iter().enumerate() {
        if a.methods[..i].contains(m) {
            return Err(Error::InvalidParameter(format!("--methods lists {m:?} twice")));
        }
        methods.push(match m {
            MethodName::Mdi => ImportanceMethod::Mdi,
            MethodName::MdiR2 => ImportanceMethod::MdiR2,
            MethodName::MdiOob => ImportanceMethod::MdiOob,
            MethodName::Mda => {
                if a.mda_repeats == 0 {
                    return Err(Error::InvalidParameter("--mda-repeats must be at least 1".into()));
                }
                ImportanceMethod::Mda { repeats: a.mda_repeats }
            }
            MethodName::MdiPlus => {
                let spec = match a.glm {
                    None => MdiPlusConfig::default_for(task).spec,
                    Some(GlmName::Ols) => GlmSpec::ols(),
                    Some(GlmName::Ridge) => GlmSpec::ridge(),
                    Some(GlmName::Logistic) => GlmSpec::logistic(),
                    Some(GlmName::Huber) => GlmSpec::huber(),
                };
                let metric = match a.metric {
                    None => default_metric(spec.family),
                    Some(MetricName::R2) => SimilarityMetric::RSquared,
                    Some(MetricName::R2Unnormalized) => SimilarityMetric::UnnormalizedRSquared,
                    Some(MetricName::NegLogLoss) => SimilarityMetric::NegLogLoss,
                    Some(MetricName::NegHuber) => SimilarityMetric::NegHuberLoss { delta: None },
                };
                let mut options = MdiPlusOptions::new(!a.no_raw, !a.no_loo);
                match a.eval_rows {
                    Some(EvalRows::InBag) => options.sample = EvalSample::InBag,
                    Some(EvalRows::Full) => options.sample = EvalSample::Full,
                    None => {}
                }
                let config = MdiPlusConfig { spec, metric, options };
                config
                    .validate(task)
                    .map_err(|e| Error::InvalidParameter(format!("--glm/--metric: {e}")))?;
                ImportanceMethod::MdiPlus(config)
            }
        });
    }
    Ok(RunConfig::Importance(ImportanceRun {
        model: a.model,
        data: a.data,
        response: a.response,
        seed: a.seed,
        methods,
    }))
}

fn resolve_stability(a: StabilityArgs) -> Result<RunConfig> {
    let text = fs::read_to_string(&a.candidates).map_err(|e| Error::io(&a.candidates, e))?;
    let candidates = parse_candidates(&text)
        .map_err(|e| Error::InvalidParameter(format!("--candidates {}: {e}", a.candidates.display())))?;
    let (task, forest) = match &a.model {
        Some(path) => {
            let f = &a.forest;
            if f.n_trees.is_some() || f.max_features.is_some() || f.min_samples_leaf.is_some() || f.max_depth.is_some() {
                return Err(Error::InvalidParameter(
                    "forest flags cannot be combined with --model".into(),
                ));
            }
            (Forest::load(path)?.task(), None)
        }
        None => (a.task, Some(a.forest.resolve(a.task)?)),
    };
    for c in &candidates {
        c.config()
            .validate(task)
            .map_err(|e| Error::InvalidParameter(format!("candidate `{}`: {e}", c.id)))?;
    }
    if a.bootstraps < 2 {
        return Err(Error::InvalidParameter("--bootstraps must be at least 2".into()));
    }
    if !(a.persistence > 0.0 && a.persistence < 1.0) {
        return Err(Error::InvalidParameter("--persistence must lie in (0, 1)".into()));
    }
    Ok(RunConfig::Stability(StabilityRun {
        train: a.train,
        test: a.test,
        response: a.response,
        task,
        model: a.model,
        forest,
        seed: a.seed,
        candidates,
        stability: StabilityOptions {
            bootstraps: a.bootstraps,
            persistence: a.persistence,
        },
        ensemble: a.ensemble,
        fallback_all: a.fallback_all,
    }))
}

fn resolve_simulate(a: SimulateArgs) -> Result<RunConfig> {
    let overrides = PresetOverrides {
        replicates: a.replicates,
        seed: a.seed,
        n: a.n,
        rho: a.rho,
        pve: a.pve,
        n_trees: a.n_trees,
    };
    let experiments = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name, &overrides)?
            .into_iter()
            .map(|e| SimulateExperiment {
                name: e.name,
                config: e.config,
            })
            .collect(),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut config = ExperimentConfig::from_json(&text)?;
            if let Some(p) = a.pve {
                config.noise.pve = Some(p);
            }
            apply_overrides(&mut config, &overrides)?;
            vec![SimulateExperiment {
                name: String::new(),
                config,
            }]
        }
        (None, None) => return Err(Error::InvalidParameter("one of --preset or --config is required".into())),
    };
    let experiments: Vec<SimulateExperiment> = experiments
        .into_iter()
        .map(|e| SimulateExperiment {
            config: e.config.resolved(),
            name: e.name,
        })
        .collect();
    for e in &experiments {
        e.config.validate()?;
    }
    Ok(RunConfig::Simulate(SimulateRun {
        preset: a.preset,
        experiments,
    }))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_file(&dir.join(name), text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads `path` and checks it matches the forest it is used with.
fn load_for_forest(path: &Path, response: &str, forest: &Forest) -> Result<Dataset> {
    let data = load_csv(path, response, forest.task())?;
    if data.n_features() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features(),
            got: data.n_features(),
        });
    }
    Ok(data)
}

fn check_training_rows(path: &Path, data: &Dataset, forest: &Forest) -> Result<()> {
    let n = forest.trees()[0].bootstrap.in_bag.len();
    if data.n_rows() != n {
        return Err(Error::InvalidData(format!(
            "{}: the forest was trained on {n} rows but the file has {}",
            path.display(),
            data.n_rows()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct FitMetrics<'a> {
    schema_version: u32,
    task: Task,
    metric: &'a str,
    train: f64,
    test: Option<f64>,
}

fn run_fit(r: &FitRun, out: &Path) -> Result<()> {
    let train = load_csv(&r.data, &r.response, r.task)?;
    let test = r.test.as_ref().map(|p| load_csv(p, &r.response, r.task)).transpose()?;
    let forest = fit_forest(&train, &r.forest, SeededRng::new(r.seed))?;
    let score = |d: &Dataset| test_performance(r.task, d.response(), &forest.predict(d.features())?);
    let metrics = FitMetrics {
        schema_version: METRICS_SCHEMA_VERSION,
        task: r.task,
        metric: performance_name(r.task),
        train: score(&train)?,
        test: match &test {
            Some(d) => {
                if d.n_features() != train.n_features() {
                    return Err(Error::DimensionMismatch {
                        expected: train.n_features(),
                        got: d.n_features(),
                    });
                }
                Some(score(d)?)
            }
            None => None,
        },
    };
    create_dir(out)?;
    forest.save(out.join("forest.json"))?;
    write_text(out, "metrics.json", &(serde_json::to_string_pretty(&metrics)? + "\n"))
}

fn run_importance(r: &ImportanceRun, out: &Path) -> Result<()> {
    let forest = Forest::load(&r.model)?;
    let data = load_for_forest(&r.data, &r.response, &forest)?;
    check_training_rows(&r.data, &data, &forest)?;
    let root = SeededRng::new(r.seed);
    let reports = r
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut report = match m {
                ImportanceMethod::Mdi => mdi_classical(&forest, &data),
                ImportanceMethod::MdiR2 => mdi_via_r2_forest(&forest, &data)?,
                ImportanceMethod::MdiOob => mdi_oob(&forest, &data)?,
                ImportanceMethod::Mda { repeats } => {
                    mda(&forest, &data, root.derive(i as u64), MdaOptions { repeats: *repeats })?
                }
                ImportanceMethod::MdiPlus(c) => mdi_plus(&forest, &data, &c.spec, c.metric, c.options)?,
            };
            report.method = m.name().into();
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    for report in &reports {
        save_report(out, &report.method, report)?;
    }
    Ok(())
}

fn save_report(out: &Path, stem: &str, report: &ImportanceReport) -> Result<()> {
    report.save(out.join(format!("{stem}.json")), out.join(format!("{stem}.csv")))
}

fn selection_csv(summary: &SelectionSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "test_performance", "mean_rbo", "screened", "chosen"])?;
    for c in &summary.candidates {
        w.write_record([
            c.id.clone(),
            format_significant(c.test_performance, 10),
            c.mean_rbo.map(|v| format_significant(v, 10)).unwrap_or_default(),
            c.screened.to_string(),
            c.chosen.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn run_stability(r: &StabilityRun, out: &Path) -> Result<()> {
    let forest = match (&r.model, &r.forest) {
        (Some(path), _) => Forest::load(path)?,
        (None, Some(params)) => {
            let train = load_csv(&r.train, &r.response, r.task)?;
            fit_forest(&train, params, SeededRng::new(r.seed))?
        }
        (None, None) => return Err(Error::InvalidParameter("stability run needs a model or forest parameters".into())),
    };
    let train = load_for_forest(&r.train, &r.response, &forest)?;
    check_training_rows(&r.train, &train, &forest)?;
    let test = load_for_forest(&r.test, &r.response, &forest)?;
    let screening = prediction_screen(&r.candidates, &train, &test, &forest)?;
    let (kept, fallback): (Vec<CandidateModel>, bool) = match screening.require_passed(&r.candidates) {
        Ok(kept) => (kept.into_iter().cloned().collect(), false),
        Err(Error::EmptyScreen) if r.fallback_all => (r.candidates.clone(), true),
        Err(e) => {
            let best = screening
                .entries
                .iter()
                .map(|e| e.test_performance)
                .fold(f64::NEG_INFINITY, f64::max);
            eprintln!(
                "no candidate matched the forest's test {} of {} (best candidate: {}); \
                 add less regularized candidates or pass --fallback-all to select among all of them",
                performance_name(r.task),
                format_significant(screening.baseline, 10),
                format_significant(best, 10),
            );
            return Err(e);
        }
    };
    let (stability, reports) = stability_select(&kept, &forest, &train, r.stability, SeededRng::new(r.seed).derive(1))?;
    let summary = SelectionSummary::new(r.task, &screening, &stability, fallback);
    create_dir(out)?;
    write_text(out, "selection.json", &(summary.to_json()? + "\n"))?;
    write_text(out, "selection.csv", &selection_csv(&summary)?)?;
    let chosen = reports
        .iter()
        .find(|rep| rep.method == stability.chosen)
        .expect("chosen candidate has a report");
    save_report(out, "chosen", chosen)?;
    if r.ensemble {
        save_report(out, "ensemble", &ensemble_rank(&reports)?)?;
    }
    Ok(())
}

fn run_simulate(r: &SimulateRun, out: &Path) -> Result<()> {
    create_dir(out)?;
    for e in &r.experiments {
        let results = run_experiment(&e.config)?;
        let dir = if e.name.is_empty() { out.to_path_buf() } else { out.join(&e.name) };
        create_dir(&dir)?;
        write_text(&dir, "results.csv", &results.results_csv()?)?;
        write_text(&dir, "summary.csv", &results.summary_csv()?)?;
        write_text(&dir, "signals.csv", &results.signals_csv()?)?;
    }
    Ok(())
}

/// Produces the outputs of `run` in `out` and writes its manifest there.
pub fn execute(run: &RunConfig, out: &Path) -> Result<()> {
    match run {
        RunConfig::Fit(r) => run_fit(r, out)?,
        RunConfig::Importance(r) => run_importance(r, out)?,
        RunConfig::Stability(r) => run_stability(r, out)?,
        RunConfig::Simulate(r) => run_simulate(r, out)?,
    }
    write_text(out, "manifest.json", &Manifest::new(run.clone()).to_json()?)
}

/// Exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EmptyScreen => EXIT_EMPTY_SCREEN,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_CONFIG,
    }
}

/// Runs the command line `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --threads: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = pool.install(|| {
        let (run, out) = match cli.command {
            Command::Fit(a) => {
                let out = a.out.clone();
                (resolve_fit(a)?, out)
            }
            Command::Importance(a) => {
                let out = a.out.clone();
                (resolve_importance(a)?, out)
            }
            Command::Stability(a) => {
                let out = a.out.clone();
                (resolve_stability(a)?, out)
            }
            Command::Simulate(a) => {
                let out = a.out.clone();
                (resolve_simulate(a)?, out)
            }
            Command::Replay(a) => (Manifest::load(&a.manifest)?.run, a.out),
        };
        execute(&run, &out)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
