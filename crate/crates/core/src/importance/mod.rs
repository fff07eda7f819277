//! Feature-importance estimators for fitted forests: classical MDI and its R² form,
//! MDI-oob, MDA, MDI+ with its partial predictions, and the RF+ predictor.

mod mda;
mod mdi;
mod plus;
mod report;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::forest::FittedTree;
use crate::glm::{GlmSpec, Link};
use crate::metrics::SimilarityMetric;

pub use mda::{mda, mda_with_permutation, MdaOptions};
pub use mdi::{mdi_classical, mdi_classical_normalized, mdi_oob, mdi_via_r2, mdi_via_r2_forest};
pub use plus::{
    mdi_plus, mdi_plus_tree, rf_plus_predict, saabas_partial, tree_design, PartialMode, TreeScores,
    PartialPrediction, RfPlus,
};
pub(crate) use report::split_average;
pub use report::{format_score, ImportanceReport, REPORT_SCHEMA_VERSION};

/// Rows a per-tree GLM is fitted and scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSample {
    /// The tree's bootstrap sample, with multiplicity.
    InBag,
    /// Every original row once.
    Full,
}

impl EvalSample {
    pub fn rows(self, tree: &FittedTree, n: usize) -> Vec<usize> {
        match self {
            EvalSample::InBag => tree.bootstrap.in_bag.clone(),
            EvalSample::Full => (0..n).collect(),
        }
    }
}

impl std::str::FromStr for EvalSample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-bag" => Ok(EvalSample::InBag),
            "full" => Ok(EvalSample::Full),
            other => Err(Error::InvalidParameter(format!("unknown evaluation sample `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdiPlusOptions {
    pub augment_raw: bool,
    pub loo: bool,
    pub sample: EvalSample,
}

impl MdiPlusOptions {
    /// LOO runs on the full data; without LOO the in-sample fit is scored in-bag, which
    /// is where OLS on stumps reproduces classical MDI.
    pub fn new(augment_raw: bool, loo: bool) -> Self {
        Self {
            augment_raw,
            loo,
            sample: if loo { EvalSample::Full } else { EvalSample::InBag },
        }
    }
}

impl Default for MdiPlusOptions {
    fn default() -> Self {
        Self::new(true, true)
    }
}

/// The (design, GLM, metric) triple that defines one MDI+ variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdiPlusConfig {
    pub spec: GlmSpec,
    pub metric: SimilarityMetric,
    pub options: MdiPlusOptions,
}

impl MdiPlusConfig {
    /// Ridge with R² for regression, l2-logistic with negative log-loss for classification.
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Regression => Self {
                spec: GlmSpec::ridge(),
                metric: SimilarityMetric::RSquared,
                options: MdiPlusOptions::default(),
            },
            Task::BinaryClassification => Self {
                spec: GlmSpec::logistic(),
                metric: SimilarityMetric::NegLogLoss,
                options: MdiPlusOptions::default(),
            },
        }
    }

    /// Rejects metric/link and link/task combinations that cannot be scored.
    pub fn validate(&self, task: Task) -> Result<()> {
        self.spec.validate()?;
        self.metric.check_link(self.spec.link())?;
        if self.spec.link() == Link::Logit && task != Task::BinaryClassification {
            return Err(Error::Incompatible(
                "a logit-link GLM needs a binary-classification response".into(),
            ));
        }
        Ok(())
    }
}

fn rows_of(data: &Dataset, rows: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let x = data.features().select_rows(rows);
    let y = rows.iter().map(|&i| data.response()[i]).collect();
    (x, y)
}
