use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{rows_of, EvalSample, ImportanceReport, MdiPlusConfig, MdiPlusOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{FittedTree, Forest, TreeStructure};
use crate::glm::{fit_transformed, GlmFit, GlmSpec};
use crate::metrics::SimilarityMetric;
use crate::stump::{augment, partial_design, transform, TransformedMatrix};

/// Stump design of `tree` on the rows of `x`, with raw features appended if requested.
pub fn tree_design(tree: &TreeStructure, x: &DMatrix<f64>, augment_raw: bool) -> Result<TransformedMatrix> {
    let tm = transform(x, tree)?;
    if augment_raw {
        augment(&tm, x)
    } else {
        Ok(tm)
    }
}

/// MDI+ scores of one tree for every feature, with whether the tree splits on it.
///
/// A feature the tree never splits on has an empty block, so its partial model keeps
/// only the column means and scores as an intercept-only fit.
pub fn mdi_plus_tree(tree: &FittedTree, data: &Dataset, config: &MdiPlusConfig) -> Result<TreeScores> {
    let p = data.n_features();
    let structure = &tree.structure;
    let rows = config.options.sample.rows(tree, data.n_rows());
    let (x, y) = rows_of(data, &rows);
    let tm = tree_design(structure, &x, config.options.augment_raw)?;
    let fit = fit_transformed(&tm, &y, &config.spec)?;
    let scores = (0..p)
        .map(|k| {
            let partial = partial_design(&tm, k)?;
            let pred = if config.options.loo {
                fit.loo_predict(&partial)?
            } else {
                fit.predict(&partial)?
            };
            config.metric.score(&y, &pred, fit.huber_delta())
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = (0..p).map(|k| !structure.splits_on(k).is_empty()).collect();
    Ok(TreeScores { scores, splits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeScores {
    pub scores: Vec<f64>,
    pub splits: Vec<bool>,
}

/// MDI+: per tree, fit the GLM on the (optionally augmented) stump design and score each
/// feature's partial predictions with `metric`, then average over all trees. Trees that
/// do not split on a feature contribute their intercept-only score; features no tree
/// splits on score `-inf`.
pub fn mdi_plus(
    forest: &Forest,
    data: &Dataset,
    spec: &GlmSpec,
    metric: SimilarityMetric,
    options: MdiPlusOptions,
) -> Result<ImportanceReport> {
    let config = MdiPlusConfig {
        spec: spec.clone(),
        metric,
        options,
    };
    config.validate(data.task())?;
    if forest.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features(),
            got: data.n_features(),
        });
    }
    let trees = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(t, tree)| mdi_plus_tree(tree, data, &config).map_err(|e| e.in_tree(t)))
        .collect::<Result<Vec<_>>>()?;
    let (scores, splits) = trees.into_iter().map(|t| (t.scores, t.splits)).unzip();
    let mut report = ImportanceReport::from_split_scores("mdi-plus", data.column_names().to_vec(), scores, splits);
    report.config = Some(config);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialMode {
    /// Predictions from the fitted coefficients.
    InBagOls,
    /// Row-wise leave-one-out coefficients.
    LooGlm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialPrediction {
    pub feature: usize,
    pub values: Vec<f64>,
    pub mode: PartialMode,
}

fn is_augmented_fit(tree: &TreeStructure, fit: &GlmFit) -> bool {
    fit.n_cols() != tree.n_splits()
}

/// Partial predictions `y^(k)` for every feature: block `k` kept, every other column
/// replaced by its mean over the rows of `x`. In OLS on the in-bag rows these are the
/// Saabas contributions: `sum_k (y^(k) - ybar) + ybar` is the fitted value.
pub fn saabas_partial(
    tree: &TreeStructure,
    fit: &GlmFit,
    x: &DMatrix<f64>,
    mode: PartialMode,
) -> Result<Vec<PartialPrediction>> {
    let tm = tree_design(tree, x, is_augmented_fit(tree, fit))?;
    if tm.n_cols() != fit.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: fit.n_cols(),
            got: tm.n_cols(),
        });
    }
    (0..tree.n_features())
        .map(|k| {
            let partial = partial_design(&tm, k)?;
            let values = match mode {
                PartialMode::InBagOls => fit.predict(&partial)?,
                PartialMode::LooGlm => fit.loo_predict(&partial)?,
            };
            Ok(PartialPrediction {
                feature: k,
                values,
                mode,
            })
        })
        .collect()
}

/// Mean over trees of `g^-1(alpha + psi~(x) . beta)`; for a logit link the class-1
/// probabilities are averaged.
pub fn rf_plus_predict(forest: &Forest, fits: &[GlmFit], x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if fits.len() != forest.n_trees() {
        return Err(Error::InvalidParameter(format!(
            "{} GLM fits for {} trees",
            fits.len(),
            forest.n_trees()
        )));
    }
    if x.ncols() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features(),
            got: x.ncols(),
        });
    }
    let per_tree = forest
        .trees()
        .par_iter()
        .zip(fits)
        .map(|(tree, fit)| {
            let tm = tree_design(&tree.structure, x, is_augmented_fit(&tree.structure, fit))?;
            fit.predict(tm.values())
        })
        .collect::<Result<Vec<_>>>()?;
    let t = fits.len() as f64;
    Ok((0..x.nrows())
        .map(|i| per_tree.iter().map(|p| p[i]).sum::<f64>() / t)
        .collect())
}

/// The RF+ predictor: a forest plus one GLM per tree on that tree's stump design.
#[derive(Debug)]
pub struct RfPlus {
    forest: Forest,
    fits: Vec<GlmFit>,
}

impl RfPlus {
    /// Fits each tree's GLM on `sample` rows of `data` (the full data by default use).
    pub fn fit(
        forest: Forest,
        data: &Dataset,
        spec: &GlmSpec,
        augment_raw: bool,
        sample: EvalSample,
    ) -> Result<Self> {
        spec.validate()?;
        let fits = forest
            .trees()
            .par_iter()
            .enumerate()
            .map(|(t, tree)| {
                let (x, y) = rows_of(data, &sample.rows(tree, data.n_rows()));
                let tm = tree_design(&tree.structure, &x, augment_raw)?;
                fit_transformed(&tm, &y, spec)
                    .map(GlmFit::discard_loo_state)
                    .map_err(|e| e.in_tree(t))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { forest, fits })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn fits(&self) -> &[GlmFit] {
        &self.fits
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        rf_plus_predict(&self.forest, &self.fits, x)
    }
}
