use rayon::prelude::*;

use super::{rows_of, ImportanceReport};
use crate::data::Dataset;
use crate::error::Result;
use crate::forest::{FittedTree, Forest};
use crate::glm::fit_ols;
use crate::metrics::unnormalized_r_squared;
use crate::stump::{partial_design, transform};

/// Classical MDI: per tree, `n^-1 sum_{t splits on k} N(t) * decrease(t)`, averaged over
/// all trees. Decreases are variance decreases; on 0/1 responses the gini decrease is
/// twice that, which leaves rankings unchanged.
pub fn mdi_classical(forest: &Forest, data: &Dataset) -> ImportanceReport {
    let p = forest.n_features();
    let per_tree = forest
        .trees()
        .iter()
        .map(|t| {
            let n = t.bootstrap.in_bag.len() as f64;
            let mut row = vec![0.0; p];
            for s in t.structure.splits() {
                row[s.feature_index] += s.n_node as f64 * s.impurity_decrease / n;
            }
            row.into_iter().map(Some).collect()
        })
        .collect();
    ImportanceReport::from_per_tree("mdi", data.column_names().to_vec(), per_tree, 0.0)
}

/// Classical MDI divided per tree by the in-bag response variance: the normalized R²
/// of the stump regression.
pub fn mdi_classical_normalized(forest: &Forest, data: &Dataset) -> ImportanceReport {
    let raw = mdi_classical(forest, data);
    let y = data.response();
    let per_tree = raw
        .per_tree
        .expect("classical MDI keeps per-tree scores")
        .into_iter()
        .zip(forest.trees())
        .map(|(row, t)| {
            let rows = &t.bootstrap.in_bag;
            let n = rows.len() as f64;
            let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n;
            row.into_iter()
                .map(|v| v.map(|s| if var > 0.0 { s / var } else { 0.0 }))
                .collect()
        })
        .collect();
    ImportanceReport::from_per_tree("mdi-normalized", raw.feature_names, per_tree, 0.0)
}

/// MDI of one tree recomputed as the unnormalized R² of partial OLS predictions on the
/// in-bag stump design (features without splits score 0).
pub fn mdi_via_r2(tree: &FittedTree, data: &Dataset) -> Result<Vec<f64>> {
    let (x, y) = rows_of(data, &tree.bootstrap.in_bag);
    let tm = transform(&x, &tree.structure)?;
    let fit = fit_ols(tm.values(), &y)?;
    (0..data.n_features())
        .map(|k| {
            if tm.block(k).is_empty() {
                return Ok(0.0);
            }
            let pred = fit.predict(&partial_design(&tm, k)?)?;
            unnormalized_r_squared(&y, &pred)
        })
        .collect()
}

pub fn mdi_via_r2_forest(forest: &Forest, data: &Dataset) -> Result<ImportanceReport> {
    let per_tree = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            mdi_via_r2(tree, data)
                .map(|r| r.into_iter().map(Some).collect())
                .map_err(|e| e.in_tree(t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceReport::from_per_tree(
        "mdi-r2",
        data.column_names().to_vec(),
        per_tree,
        0.0,
    ))
}

/// MDI-oob: OLS fitted on the in-bag stump design, partial predictions scored on the
/// tree's out-of-bag rows by unnormalized R² (with the OOB response mean). Trees without
/// OOB rows are skipped and listed in the report notes.
pub fn mdi_oob(forest: &Forest, data: &Dataset) -> Result<ImportanceReport> {
    let p = data.n_features();
    let per_tree: Vec<Option<Vec<Option<f64>>>> = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            if tree.bootstrap.oob.is_empty() {
                return Ok(None);
            }
            let inner = || -> Result<Vec<Option<f64>>> {
                let (x, y) = rows_of(data, &tree.bootstrap.in_bag);
                let fit = fit_ols(transform(&x, &tree.structure)?.values(), &y)?;
                let (xo, yo) = rows_of(data, &tree.bootstrap.oob);
                let tm = transform(&xo, &tree.structure)?;
                (0..p)
                    .map(|k| {
                        if tm.block(k).is_empty() {
                            return Ok(Some(0.0));
                        }
                        let pred = fit.predict(&partial_design(&tm, k)?)?;
                        Ok(Some(unnormalized_r_squared(&yo, &pred)?))
                    })
                    .collect()
            };
            inner().map(Some).map_err(|e| e.in_tree(t))
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped: Vec<usize> = per_tree
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(t, _)| t)
        .collect();
    let rows = per_tree
        .into_iter()
        .map(|r| r.unwrap_or_else(|| vec![None; p]))
        .collect();
    let mut report = ImportanceReport::from_per_tree("mdi-oob", data.column_names().to_vec(), rows, 0.0);
    if !skipped.is_empty() {
        report
            .notes
            .push(format!("trees without out-of-bag rows skipped: {skipped:?}"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BootstrapIndex, SeededRng, Task};
    use crate::forest::{fit_forest, forest_from_bootstrap, ForestParams, MaxFeatures};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn toy() -> Dataset {
        let x = DMatrix::from_column_slice(4, 2, &[0.0, 1.0, 2.0, 3.0, 5.0, 5.0, 5.0, 5.0]);
        Dataset::from_matrix(x, vec![0.0, 0.0, 1.0, 1.0], Task::Regression).unwrap()
    }

    fn one_tree(d: &Dataset) -> Forest {
        let params = ForestParams {
            n_trees: 1,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            ..ForestParams::regression_default()
        };
        forest_from_bootstrap(d, BootstrapIndex::identity(d.n_rows()), &params, SeededRng::new(0)).unwrap()
    }

    #[test]
    fn toy_mdi_is_a_quarter() {
        let d = toy();
        let f = one_tree(&d);
        let r = mdi_classical(&f, &d);
        assert_eq!(r.per_feature, vec![0.25, 0.0]);
        let via = mdi_via_r2(&f.trees()[0], &d).unwrap();
        assert!((via[0] - 0.25).abs() < 1e-12);
        assert_eq!(via[1], 0.0);
        let norm = mdi_classical_normalized(&f, &d);
        assert!((norm.per_feature[0] - 1.0).abs() < 1e-12);
    }

    fn random_data(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>());
        let y = (0..n)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + rng.gen::<f64>())
            .collect();
        Dataset::from_matrix(x, y, Task::Regression).unwrap()
    }

    #[test]
    fn per_tree_mdi_sums_to_total_decrease() {
        let d = random_data(1, 60, 4);
        let params = ForestParams {
            n_trees: 5,
            min_samples_leaf: 2,
            ..ForestParams::regression_default()
        };
        let f = fit_forest(&d, &params, SeededRng::new(3)).unwrap();
        let r = mdi_classical(&f, &d);
        for (row, t) in r.per_tree.as_ref().unwrap().iter().zip(f.trees()) {
            let total: f64 = row.iter().map(|v| v.unwrap()).sum();
            let want = t.structure.total_weighted_decrease(60);
            assert!((total - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn r2_path_equals_classical_per_tree() {
        let d = random_data(2, 50, 5);
        let params = ForestParams {
            n_trees: 8,
            min_samples_leaf: 1,
            max_depth: Some(4),
            ..ForestParams::regression_default()
        };
        let f = fit_forest(&d, &params, SeededRng::new(4)).unwrap();
        let classical = mdi_classical(&f, &d);
        let via = mdi_via_r2_forest(&f, &d).unwrap();
        for (a, b) in classical.per_tree.unwrap().iter().zip(via.per_tree.unwrap()) {
            for (x, y) in a.iter().zip(b) {
                let (x, y) = (x.unwrap(), y.unwrap());
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-12), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn oob_unsplit_feature_scores_zero() {
        let mut d = random_data(5, 80, 3);
        let x = d.features().clone();
        let constant = DMatrix::from_fn(80, 3, |i, j| if j == 2 { 1.0 } else { x[(i, j)] });
        d = Dataset::from_matrix(constant, d.response().to_vec(), Task::Regression).unwrap();
        let params = ForestParams {
            n_trees: 4,
            ..ForestParams::regression_default()
        };
        let f = fit_forest(&d, &params, SeededRng::new(9)).unwrap();
        let r = mdi_oob(&f, &d).unwrap();
        assert_eq!(r.per_feature[2], 0.0);
        assert!(r.per_feature[0] > 0.0);
    }

    #[test]
    fn oob_skips_trees_without_oob_rows() {
        let d = toy();
        let f = one_tree(&d);
        let r = mdi_oob(&f, &d).unwrap();
        assert_eq!(r.n_trees_contributing, vec![0, 0]);
        assert_eq!(r.notes.len(), 1);
    }
}
