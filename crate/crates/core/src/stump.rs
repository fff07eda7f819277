//! Local decision stump features of a fitted tree.
//!
//! Each split `s` of node `t` defines a tri-valued feature
//! `psi(x) = (N_R 1{x in t_L} - N_L 1{x in t_R}) / sqrt(N_L N_R)`, with counts taken from
//! the tree's in-bag sample. Columns are grouped into contiguous per-feature blocks, and
//! each block may be followed by the raw feature it came from.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forest::TreeStructure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StumpColumn {
    /// Index into [`TreeStructure::splits`].
    pub split_ref: usize,
    pub scale_left: f64,
    pub scale_right: f64,
}

impl StumpColumn {
    pub fn for_split(tree: &TreeStructure, split_ref: usize) -> Self {
        let s = &tree.splits()[split_ref];
        let (l, r) = (s.n_left as f64, s.n_right as f64);
        let norm = (l * r).sqrt();
        Self {
            split_ref,
            scale_left: r / norm,
            scale_right: -l / norm,
        }
    }
}

/// Value of one stump at `x`: membership follows the tree's routing from the root.
pub fn stump_value(x: &[f64], column: &StumpColumn, tree: &TreeStructure) -> f64 {
    let target = tree.splits()[column.split_ref].node_id;
    let nodes = tree.nodes();
    let mut id = 0;
    loop {
        let node = &nodes[id];
        let Some(k) = node.feature else { return 0.0 };
        let goes_left = x[k] <= node.threshold;
        if id == target {
            return if goes_left {
                column.scale_left
            } else {
                column.scale_right
            };
        }
        id = if goes_left {
            node.left.unwrap()
        } else {
            node.right.unwrap()
        };
        if id > target {
            // pre-order ids: once past `target` without visiting it, it is unreachable
            return 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnSource {
    Stump { split: usize },
    Raw { feature: usize },
}

/// Stump (and optionally raw-feature) design over a set of evaluation rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    values: DMatrix<f64>,
    columns: Vec<ColumnSource>,
    blocks: Vec<Range<usize>>,
    augmented: bool,
    raw_columns: Vec<Option<usize>>,
}

impl TransformedMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn columns(&self) -> &[ColumnSource] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Column range of feature `k`'s block (possibly empty).
    pub fn block(&self, k: usize) -> Range<usize> {
        self.blocks[k].clone()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn n_features(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn raw_column(&self, k: usize) -> Option<usize> {
        self.raw_columns[k]
    }

    /// Marks which columns hold raw features (the ones a GLM standardizes).
    pub fn raw_mask(&self) -> Vec<bool> {
        self.columns
            .iter()
            .map(|c| matches!(c, ColumnSource::Raw { .. }))
            .collect()
    }

    /// Feature that column `j` is derived from.
    pub fn feature_of_column(&self, j: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&j))
            .expect("column outside every block")
    }
}

/// Evaluates every stump of `tree` on the rows of `x`.
///
/// Scales always come from the tree's in-bag counts, whatever rows are evaluated.
pub fn transform(x: &DMatrix<f64>, tree: &TreeStructure) -> Result<TransformedMatrix> {
    let p = tree.n_features();
    if x.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.ncols(),
        });
    }
    let mut columns = Vec::with_capacity(tree.n_splits());
    let mut blocks = Vec::with_capacity(p);
    for k in 0..p {
        let start = columns.len();
        columns.extend(tree.splits_on(k).iter().map(|&s| ColumnSource::Stump { split: s }));
        blocks.push(start..columns.len());
    }
    let mut col_of_node = vec![usize::MAX; tree.nodes().len()];
    let mut scales = vec![(0.0, 0.0); columns.len()];
    for (j, c) in columns.iter().enumerate() {
        let ColumnSource::Stump { split } = *c else { unreachable!() };
        let sc = StumpColumn::for_split(tree, split);
        col_of_node[tree.splits()[split].node_id] = j;
        scales[j] = (sc.scale_left, sc.scale_right);
    }

    let n = x.nrows();
    let mut values = DMatrix::zeros(n, columns.len());
    let nodes = tree.nodes();
    for i in 0..n {
        let mut id = 0;
        while let Some(k) = nodes[id].feature {
            let node = &nodes[id];
            let j = col_of_node[id];
            if x[(i, k)] <= node.threshold {
                values[(i, j)] = scales[j].0;
                id = node.left.unwrap();
            } else {
                values[(i, j)] = scales[j].1;
                id = node.right.unwrap();
            }
        }
    }
    Ok(TransformedMatrix {
        values,
        columns,
        blocks,
        augmented: false,
        raw_columns: vec![None; p],
    })
}

/// Appends raw feature `X_k` to the end of block `k` for every feature with at least one split.
pub fn augment(tm: &TransformedMatrix, x: &DMatrix<f64>) -> Result<TransformedMatrix> {
    if tm.augmented {
        return Err(Error::InvalidParameter("design is already augmented".into()));
    }
    let p = tm.n_features();
    if x.ncols() != p || x.nrows() != tm.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.ncols(),
        });
    }
    let mut columns = Vec::new();
    let mut blocks = Vec::with_capacity(p);
    let mut raw_columns = vec![None; p];
    let mut source_col: Vec<Option<usize>> = Vec::new();
    for k in 0..p {
        let start = columns.len();
        for j in tm.blocks[k].clone() {
            columns.push(tm.columns[j]);
            source_col.push(Some(j));
        }
        if !tm.blocks[k].is_empty() {
            raw_columns[k] = Some(columns.len());
            columns.push(ColumnSource::Raw { feature: k });
            source_col.push(None);
        }
        blocks.push(start..columns.len());
    }
    let n = tm.n_rows();
    let mut values = DMatrix::zeros(n, columns.len());
    for (j, (src, c)) in source_col.iter().zip(&columns).enumerate() {
        match (src, c) {
            (Some(s), _) => values.set_column(j, &tm.values.column(*s)),
            (None, ColumnSource::Raw { feature }) => values.set_column(j, &x.column(*feature)),
            _ => unreachable!(),
        }
    }
    Ok(TransformedMatrix {
        values,
        columns,
        blocks,
        augmented: true,
        raw_columns,
    })
}

/// Column means over the evaluation rows.
pub fn column_means(values: &DMatrix<f64>) -> Vec<f64> {
    let n = values.nrows() as f64;
    values.column_iter().map(|c| c.sum() / n).collect()
}

/// Design with every column outside block `k` replaced by its mean over the rows.
pub fn partial_design(tm: &TransformedMatrix, k: usize) -> Result<DMatrix<f64>> {
    if k >= tm.n_features() {
        return Err(Error::InvalidParameter(format!(
            "feature {k} out of range (p = {})",
            tm.n_features()
        )));
    }
    let mut out = tm.values.clone();
    let keep = tm.block(k);
    let means = column_means(&tm.values);
    for (j, &m) in means.iter().enumerate() {
        if !keep.contains(&j) {
            out.column_mut(j).fill(m);
        }
    }
    Ok(out)
}
