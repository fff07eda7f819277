//! Random forests of CART trees, each grown on its own bootstrap sample and RNG stream.

mod serial;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap_sample, BootstrapIndex, Dataset, SeededRng, Task};
use crate::error::{Error, Result};

pub use serial::FOREST_SCHEMA_VERSION;
pub use tree::{
    best_split, grow_tree, impurity_decrease, impurity_decrease_shortcut, Node, Split,
    SplitCandidate, TreeStructure, MIN_GAIN_RTOL,
};

/// Split criterion. On a 0/1 response the gini decrease is exactly twice the variance
/// decrease, so both rank candidate splits identically; gini only adds the 0/1 check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Impurity {
    Variance,
    Gini,
}

/// Number of features tried at each node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    /// ceil(p/3) for regression, ceil(sqrt p) for classification.
    Auto,
    Third,
    Sqrt,
    All,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub impurity: Impurity,
}

impl ForestParams {
    /// 100 trees, p/3 features per node, at least 5 rows per leaf.
    pub fn regression_default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Third,
            min_samples_leaf: 5,
            max_depth: None,
            impurity: Impurity::Variance,
        }
    }

    /// 100 trees, sqrt(p) features per node, leaves grown to purity, gini impurity.
    pub fn classification_default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            max_depth: None,
            impurity: Impurity::Gini,
        }
    }

    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Regression => Self::regression_default(),
            Task::BinaryClassification => Self::classification_default(),
        }
    }

    pub fn resolve_max_features(&self, p: usize, task: Task) -> Result<usize> {
        let third = p.div_ceil(3);
        let sqrt = (p as f64).sqrt().ceil() as usize;
        let m = match self.max_features {
            MaxFeatures::Auto => match task {
                Task::Regression => third,
                Task::BinaryClassification => sqrt,
            },
            MaxFeatures::Third => third,
            MaxFeatures::Sqrt => sqrt,
            MaxFeatures::All => p,
            MaxFeatures::Count(c) => c,
        };
        if m == 0 || m > p {
            return Err(Error::InvalidParameter(format!(
                "max_features resolves to {m}, must lie in 1..={p}"
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    pub structure: TreeStructure,
    pub bootstrap: BootstrapIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<FittedTree>,
    params: ForestParams,
    task: Task,
    seed: u64,
    n_features: usize,
}

impl Forest {
    pub fn new(
        trees: Vec<FittedTree>,
        params: ForestParams,
        task: Task,
        seed: u64,
        n_features: usize,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("forest needs at least one tree".into()));
        }
        if trees.iter().any(|t| t.structure.n_features() != n_features) {
            return Err(Error::InvalidData("trees disagree on feature count".into()));
        }
        Ok(Self {
            trees,
            params,
            task,
            seed,
            n_features,
        })
    }

    pub fn trees(&self) -> &[FittedTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// A forest made of the given trees (repeats allowed), in the given order.
    pub fn subset(&self, tree_indices: &[usize]) -> Result<Self> {
        let trees = tree_indices.iter().map(|&t| self.trees[t].clone()).collect();
        Self::new(trees, self.params.clone(), self.task, self.seed, self.n_features)
    }

    /// Mean of per-tree leaf values: the regression mean, or the class-1 probability.
    pub fn predict(&self, x: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let t = self.trees.len() as f64;
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.trees
                    .iter()
                    .map(|tr| tr.structure.predict_row(&row))
                    .sum::<f64>()
                    / t
            })
            .collect())
    }
}

/// Grows `params.n_trees` trees; tree `t` draws its bootstrap and feature subsets from
/// stream `rng.derive(t)`, so the result does not depend on the thread count.
pub fn fit_forest(data: &Dataset, params: &ForestParams, rng: SeededRng) -> Result<Forest> {
    tree::check_params(params, data)?;
    let n = data.n_rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let stream = rng.derive(t as u64);
            let bootstrap = bootstrap_sample(n, stream.derive(0));
            let structure = grow_tree(data, &bootstrap.in_bag, params, stream.derive(1))
                .map_err(|e| e.in_tree(t))?;
            Ok(FittedTree {
                structure,
                bootstrap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Forest::new(trees, params.clone(), data.task(), rng.seed, data.n_features())
}

/// A single tree on a caller-supplied bootstrap, wrapped as a one-tree forest.
pub fn forest_from_bootstrap(
    data: &Dataset,
    bootstrap: BootstrapIndex,
    params: &ForestParams,
    rng: SeededRng,
) -> Result<Forest> {
    tree::check_params(params, data)?;
    let structure = grow_tree(data, &bootstrap.in_bag, params, rng)?;
    let p = ForestParams {
        n_trees: 1,
        ..params.clone()
    };
    Forest::new(
        vec![FittedTree {
            structure,
            bootstrap,
        }],
        p,
        data.task(),
        rng.seed,
        data.n_features(),
    )
}
