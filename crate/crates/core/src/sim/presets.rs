use serde::{Deserialize, Serialize};

use super::{CovariateSpec, ExperimentConfig, MethodSpec, NoiseSpec, ResponseKind, ResponseSpec};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::glm::Family;

pub const PRESETS: &[&str] = &[
    "entropy-bias-regression",
    "entropy-bias-classification",
    "correlation-bias",
    "linear-pve",
    "lss-pve",
    "poly-pve",
    "linear-lss-pve",
    "lss-outliers",
    "linear-lss-outliers",
    "linear-lss-classification",
];

/// Command-line style adjustments applied to every experiment of a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PresetOverrides {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    /// Sample size of generated covariates.
    pub n: Option<usize>,
    /// Correlation of the correlated block.
    pub rho: Option<f64>,
    /// A single proportion of variance explained instead of the preset's sweep.
    pub pve: Option<f64>,
    pub n_trees: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedExperiment {
    /// Empty for single-experiment presets, otherwise the sweep point (e.g. `pve-0.4`).
    pub name: String,
    pub config: ExperimentConfig,
}

fn regression_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::Mdi,
        MethodSpec::MdiOob,
        MethodSpec::Mda { repeats: 1 },
        MethodSpec::mdi_plus(Family::Ridge),
    ]
}

fn classification_methods() -> Vec<MethodSpec> {
    let mut m = regression_methods();
    m.push(MethodSpec::mdi_plus(Family::LogisticL2));
    m
}

fn robust_methods() -> Vec<MethodSpec> {
    let mut m = regression_methods();
    m.push(MethodSpec::mdi_plus(Family::HuberRidge));
    m
}

fn base(covariates: CovariateSpec, response: ResponseSpec, noise: NoiseSpec, methods: Vec<MethodSpec>) -> ExperimentConfig {
    ExperimentConfig {
        covariates,
        response,
        noise,
        forest_params: None,
        methods,
        replicates: 50,
        seed: 0,
        feature_ranks: false,
    }
}

fn pve(p: f64) -> NoiseSpec {
    NoiseSpec {
        pve: Some(p),
        ..NoiseSpec::default()
    }
}

/// Synthetic stand-in for a real covariate matrix: 50 features, the first 25 pairwise
/// correlated at 0.6.
fn benchmark_covariates() -> CovariateSpec {
    CovariateSpec::CorrelatedGaussian {
        n: 500,
        p: 50,
        rho: 0.6,
        block_size: 25,
    }
}

fn pve_sweep(kind: ResponseKind) -> Vec<NamedExperiment> {
    [0.1, 0.2, 0.4, 0.8]
        .into_iter()
        .map(|p| NamedExperiment {
            name: format!("pve-{p}"),
            config: base(benchmark_covariates(), ResponseSpec::new(kind), pve(p), regression_methods()),
        })
        .collect()
}

fn outlier_sweep(kind: ResponseKind) -> Vec<NamedExperiment> {
    let mut out = Vec::new();
    for mu in [10.0, 25.0] {
        for q in [0.01, 0.025, 0.05] {
            out.push(NamedExperiment {
                name: format!("mu-{mu}-q-{q}"),
                config: base(
                    benchmark_covariates(),
                    ResponseSpec::new(kind),
                    NoiseSpec {
                        pve: Some(0.4),
                        outlier_q: q,
                        mu_corrupt: mu,
                        ..NoiseSpec::default()
                    },
                    robust_methods(),
                ),
            });
        }
    }
    out
}

fn single(config: ExperimentConfig) -> Vec<NamedExperiment> {
    vec![NamedExperiment {
        name: String::new(),
        config,
    }]
}

/// The experiments of a built-in preset, with `overrides` applied.
pub fn preset(name: &str, overrides: &PresetOverrides) -> Result<Vec<NamedExperiment>> {
    let mut experiments = match name {
        "entropy-bias-regression" => single(ExperimentConfig {
            feature_ranks: true,
            ..base(
                CovariateSpec::EntropyMix { n: 1000 },
                ResponseSpec::new(ResponseKind::Entropy).fixed_signals(),
                pve(0.1),
                regression_methods(),
            )
        }),
        "entropy-bias-classification" => single(ExperimentConfig {
            feature_ranks: true,
            ..base(
                CovariateSpec::EntropyMix { n: 1000 },
                ResponseSpec::new(ResponseKind::Entropy).fixed_signals().classification(),
                NoiseSpec::default(),
                classification_methods(),
            )
        }),
        "correlation-bias" => single(base(
            CovariateSpec::CorrelatedGaussian {
                n: 250,
                p: 100,
                rho: 0.99,
                block_size: 50,
            },
            ResponseSpec::new(ResponseKind::LinearPlusLss).fixed_signals(),
            pve(0.1),
            regression_methods(),
        )),
        "linear-pve" => pve_sweep(ResponseKind::Linear),
        "lss-pve" => pve_sweep(ResponseKind::Lss),
        "poly-pve" => pve_sweep(ResponseKind::PolyInteraction),
        "linear-lss-pve" => pve_sweep(ResponseKind::LinearPlusLss),
        "lss-outliers" => outlier_sweep(ResponseKind::Lss),
        "linear-lss-outliers" => outlier_sweep(ResponseKind::LinearPlusLss),
        "linear-lss-classification" => [0.0, 0.05, 0.15, 0.25]
            .into_iter()
            .map(|f| NamedExperiment {
                name: format!("corrupt-{f}"),
                config: base(
                    benchmark_covariates(),
                    ResponseSpec::new(ResponseKind::LinearPlusLss).classification(),
                    NoiseSpec {
                        corrupt_fraction: f,
                        ..NoiseSpec::default()
                    },
                    classification_methods(),
                ),
            })
            .collect(),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset `{other}`; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    if let Some(p) = overrides.pve {
        experiments.retain(|e| e.config.noise.pve.is_some());
        if experiments.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "preset `{name}` has binary responses; pve does not apply"
            )));
        }
        // A sweep over pve collapses to the requested point.
        if experiments.iter().all(|e| e.name.starts_with("pve-")) {
            experiments.truncate(1);
            experiments[0].name = String::new();
        }
        for e in &mut experiments {
            e.config.noise.pve = Some(p);
        }
    }
    for e in &mut experiments {
        apply_overrides(&mut e.config, overrides)?;
    }
    Ok(experiments)
}

/// Applies everything in `o` except `pve`, which only makes sense for a preset's sweep.
pub(crate) fn apply_overrides(c: &mut ExperimentConfig, o: &PresetOverrides) -> Result<()> {
    if let Some(r) = o.replicates {
        c.replicates = r;
    }
    if let Some(s) = o.seed {
        c.seed = s;
    }
    match &mut c.covariates {
        CovariateSpec::CorrelatedGaussian { n, rho, .. } => {
            if let Some(v) = o.n {
                *n = v;
            }
            if let Some(v) = o.rho {
                *rho = v;
            }
        }
        CovariateSpec::EntropyMix { n } => {
            if let Some(v) = o.n {
                *n = v;
            }
            if o.rho.is_some() {
                return Err(Error::InvalidParameter("rho applies to correlated covariates only".into()));
            }
        }
        CovariateSpec::Csv { .. } => {}
    }
    if let Some(t) = o.n_trees {
        let mut params = c.forest_params.clone().unwrap_or_else(|| ForestParams::default_for(c.task()));
        params.n_trees = t;
        c.forest_params = Some(params);
    }
    Ok(())
}
