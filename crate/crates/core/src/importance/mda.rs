use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::ImportanceReport;
use crate::data::{Dataset, SeededRng, Task};
use crate::error::Result;
use crate::forest::{Forest, TreeStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MdaOptions {
    /// Permutations per (tree, feature); their loss increases are averaged.
    pub repeats: usize,
}

impl Default for MdaOptions {
    fn default() -> Self {
        Self { repeats: 1 }
    }
}

fn loss(task: Task, y: &[f64], pred: &[f64]) -> f64 {
    let n = y.len() as f64;
    match task {
        Task::Regression => y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n,
        Task::BinaryClassification => {
            y.iter()
                .zip(pred)
                .filter(|(&a, &b)| a != if b > 0.5 { 1.0 } else { 0.0 })
                .count() as f64
                / n
        }
    }
}

fn predict_rows(tree: &TreeStructure, rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().map(|r| tree.predict_row(r)).collect()
}

/// Mean decrease in accuracy: per tree and feature, the OOB loss after permuting the
/// feature among OOB rows minus the unpermuted OOB loss (MSE for regression,
/// misclassification rate for classification). The permutation for (tree `t`, feature
/// `k`, repeat `r`) comes from stream `rng.derive(t).derive(k).derive(r)`.
pub fn mda(forest: &Forest, data: &Dataset, rng: SeededRng, options: MdaOptions) -> Result<ImportanceReport> {
    mda_with_permutation(forest, data, options, &|t, k, r, perm: &mut [usize]| {
        let mut g = rng.derive(t as u64).derive(k as u64).derive(r as u64).generator();
        perm.shuffle(&mut g);
    })
}

/// [`mda`] with a caller-supplied permutation of OOB positions.
pub fn mda_with_permutation(
    forest: &Forest,
    data: &Dataset,
    options: MdaOptions,
    permute: &(dyn Fn(usize, usize, usize, &mut [usize]) + Sync),
) -> Result<ImportanceReport> {
    let p = data.n_features();
    let y = data.response();
    let repeats = options.repeats.max(1);
    let per_tree: Vec<Vec<Option<f64>>> = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let oob = &tree.bootstrap.oob;
            if oob.is_empty() {
                return vec![None; p];
            }
            let rows: Vec<Vec<f64>> = oob.iter().map(|&i| data.row(i)).collect();
            let yo: Vec<f64> = oob.iter().map(|&i| y[i]).collect();
            let base = loss(data.task(), &yo, &predict_rows(&tree.structure, &rows));
            (0..p)
                .map(|k| {
                    if tree.structure.splits_on(k).is_empty() {
                        // predictions cannot change
                        return Some(0.0);
                    }
                    let mut total = 0.0;
                    for r in 0..repeats {
                        let mut perm: Vec<usize> = (0..oob.len()).collect();
                        permute(t, k, r, &mut perm);
                        let mut shuffled = rows.clone();
                        for (dst, &src) in shuffled.iter_mut().zip(&perm) {
                            dst[k] = rows[src][k];
                        }
                        let l = loss(data.task(), &yo, &predict_rows(&tree.structure, &shuffled));
                        total += l - base;
                    }
                    Some(total / repeats as f64)
                })
                .collect()
        })
        .collect();
    let skipped = per_tree.iter().filter(|r| r.iter().all(Option::is_none)).count();
    let mut report = ImportanceReport::from_per_tree("mda", data.column_names().to_vec(), per_tree, 0.0);
    if skipped > 0 {
        report
            .notes
            .push(format!("{skipped} trees without out-of-bag rows skipped"));
    }
    Ok(report)
}
