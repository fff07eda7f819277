//! CART regression/classification trees grown on bootstrap samples.

use rand::seq::index;

use crate::data::{Dataset, SeededRng};
use crate::error::{Error, Result};
use crate::forest::{ForestParams, Impurity};

/// Relative tolerance under which two impurity decreases count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Splits must decrease impurity by more than this multiple of the root variance.
pub const MIN_GAIN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    /// `None` for leaves.
    pub feature: Option<usize>,
    pub threshold: f64,
    /// In-bag count N(t), with bootstrap multiplicity.
    pub n_node: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub mean_node: f64,
    pub mean_left: f64,
    pub mean_right: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Mean in-bag response of the node; the prediction when the node is a leaf.
    pub value: f64,
    /// Variance impurity decrease of the actualized split (0 for leaves).
    pub impurity_decrease: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// One actualized split, as seen by the featurization code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub node_id: usize,
    pub feature_index: usize,
    pub threshold: f64,
    pub n_node: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub mean_node: f64,
    pub mean_left: f64,
    pub mean_right: f64,
    pub impurity_decrease: f64,
}

/// Node table plus the ordered split list and its partition by feature.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStructure {
    nodes: Vec<Node>,
    splits: Vec<Split>,
    by_feature: Vec<Vec<usize>>,
    n_features: usize,
}

impl TreeStructure {
    /// Rebuilds the split list and feature blocks from a node table.
    ///
    /// Splits are listed in node-id order, which is the order they were created in.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidData("tree has no nodes".into()));
        }
        let mut splits = Vec::new();
        let mut by_feature = vec![Vec::new(); n_features];
        for (pos, node) in nodes.iter().enumerate() {
            if node.id != pos {
                return Err(Error::InvalidData(format!(
                    "node ids must be dense and ordered; found id {} at position {pos}",
                    node.id
                )));
            }
            if let Some(k) = node.feature {
                if k >= n_features {
                    return Err(Error::InvalidData(format!(
                        "node {} splits on feature {k} but there are {n_features}",
                        node.id
                    )));
                }
                match (node.left, node.right) {
                    (Some(l), Some(r)) if l < nodes.len() && r < nodes.len() => {}
                    _ => {
                        return Err(Error::InvalidData(format!(
                            "internal node {} has missing children",
                            node.id
                        )))
                    }
                }
                by_feature[k].push(splits.len());
                splits.push(Split {
                    node_id: node.id,
                    feature_index: k,
                    threshold: node.threshold,
                    n_node: node.n_node,
                    n_left: node.n_left,
                    n_right: node.n_right,
                    mean_node: node.mean_node,
                    mean_left: node.mean_left,
                    mean_right: node.mean_right,
                    impurity_decrease: node.impurity_decrease,
                });
            }
        }
        Ok(Self {
            nodes,
            splits,
            by_feature,
            n_features,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Indices into [`splits`](Self::splits) of the splits on feature `k`.
    pub fn splits_on(&self, k: usize) -> &[usize] {
        &self.by_feature[k]
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_splits(&self) -> usize {
        self.splits.len()
    }

    /// Leaf reached by `x`; values equal to a threshold go left.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Some(k) = self.nodes[id].feature {
            let node = &self.nodes[id];
            id = if x[k] <= node.threshold {
                node.left.unwrap()
            } else {
                node.right.unwrap()
            };
        }
        id
    }

    /// Node ids from the root to the leaf reached by `x`.
    pub fn path(&self, x: &[f64]) -> Vec<usize> {
        let mut out = vec![0];
        let mut id = 0;
        while let Some(k) = self.nodes[id].feature {
            let node = &self.nodes[id];
            id = if x[k] <= node.threshold {
                node.left.unwrap()
            } else {
                node.right.unwrap()
            };
            out.push(id);
        }
        out
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_of(x)].value
    }

    /// Sum of split impurity decreases weighted by N(t)/n.
    pub fn total_weighted_decrease(&self, n: usize) -> f64 {
        self.splits
            .iter()
            .map(|s| s.n_node as f64 * s.impurity_decrease)
            .sum::<f64>()
            / n as f64
    }
}

/// Variance impurity decrease of splitting a node into `left` and `right`,
/// evaluated directly from the three within-node sums of squares.
pub fn impurity_decrease(left: &[f64], right: &[f64]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::EmptyChild);
    }
    let ss = |v: &mut dyn Iterator<Item = f64>, mean: f64| v.map(|y| (y - mean).powi(2)).sum::<f64>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let n = (left.len() + right.len()) as f64;
    let (ml, mr) = (mean(left), mean(right));
    let mt = (left.iter().sum::<f64>() + right.iter().sum::<f64>()) / n;
    let total = ss(&mut left.iter().chain(right).copied(), mt);
    let within = ss(&mut left.iter().copied(), ml) + ss(&mut right.iter().copied(), mr);
    Ok((total - within) / n)
}

/// Closed form N_L N_R / N^2 (mean_L - mean_R)^2 of [`impurity_decrease`].
pub fn impurity_decrease_shortcut(n_left: usize, n_right: usize, mean_left: f64, mean_right: f64) -> f64 {
    let (l, r) = (n_left as f64, n_right as f64);
    l * r / ((l + r) * (l + r)) * (mean_left - mean_right).powi(2)
}

/// Best split found by [`best_split`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Variance impurity decrease.
    pub gain: f64,
}

/// Exhaustive scan over midpoints of consecutive distinct values of each candidate feature.
///
/// `samples` are row indices of the node (duplicates allowed). Returns `None` when no
/// threshold leaves at least `min_samples_leaf` rows on each side with gain above `min_gain`.
/// Ties go to the lowest feature index, then the lowest threshold.
pub fn best_split(
    data: &Dataset,
    samples: &[usize],
    candidate_features: &[usize],
    min_samples_leaf: usize,
    min_gain: f64,
) -> Option<SplitCandidate> {
    let n = samples.len();
    let msl = min_samples_leaf.max(1);
    if n < 2 * msl {
        return None;
    }
    let y = data.response();
    let total: f64 = samples.iter().map(|&i| y[i]).sum();
    let nf = n as f64;

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut best: Option<SplitCandidate> = None;
    for &k in &features {
        order.clear();
        order.extend(samples.iter().map(|&i| (data.value(i, k), i)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if order[0].0 == order[n - 1].0 {
            continue;
        }
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            left_sum += y[order[pos].1];
            let nl = pos + 1;
            let (lo, hi) = (order[pos].0, order[pos + 1].0);
            if lo == hi || nl < msl || n - nl < msl {
                continue;
            }
            let (l, r) = (nl as f64, nf - nl as f64);
            let diff = left_sum / l - (total - left_sum) / r;
            let gain = l * r / (nf * nf) * diff * diff;
            if gain <= min_gain {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => gain > b.gain + TIE_RTOL * b.gain.abs(),
            };
            if better {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi || threshold < lo {
                    threshold = lo;
                }
                best = Some(SplitCandidate {
                    feature: k,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn mean_of(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64
}

fn variance_of(y: &[f64], rows: &[usize]) -> f64 {
    let m = mean_of(y, rows);
    rows.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>() / rows.len() as f64
}

/// Grows one tree on the rows `in_bag` (with multiplicity).
///
/// Nodes are expanded depth-first, left child first, so node ids and the split list
/// follow creation order.
pub fn grow_tree(
    data: &Dataset,
    in_bag: &[usize],
    params: &ForestParams,
    rng: SeededRng,
) -> Result<TreeStructure> {
    if in_bag.is_empty() {
        return Err(Error::InvalidData("cannot grow a tree on zero rows".into()));
    }
    let p = data.n_features();
    let mtry = params.resolve_max_features(p, data.task())?;
    let y = data.response();
    let mut gen = rng.generator();
    let min_gain = MIN_GAIN_RTOL * variance_of(y, in_bag);

    let root_mean = mean_of(y, in_bag);
    let mut nodes = vec![Node {
        id: 0,
        depth: 0,
        feature: None,
        threshold: 0.0,
        n_node: in_bag.len(),
        n_left: 0,
        n_right: 0,
        mean_node: root_mean,
        mean_left: 0.0,
        mean_right: 0.0,
        left: None,
        right: None,
        value: root_mean,
        impurity_decrease: 0.0,
    }];
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, in_bag.to_vec())];
    let mut left_y = Vec::new();
    let mut right_y = Vec::new();

    while let Some((id, rows)) = stack.pop() {
        let depth = nodes[id].depth;
        if params.max_depth.is_some_and(|d| depth >= d) {
            continue;
        }
        if rows.len() < 2 * params.min_samples_leaf.max(1) {
            continue;
        }
        let candidates: Vec<usize> = if mtry >= p {
            (0..p).collect()
        } else {
            let mut c = index::sample(&mut gen, p, mtry).into_vec();
            c.sort_unstable();
            c
        };
        let Some(cand) = best_split(data, &rows, &candidates, params.min_samples_leaf, min_gain)
        else {
            continue;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| data.value(i, cand.feature) <= cand.threshold);

        left_y.clear();
        left_y.extend(left_rows.iter().map(|&i| y[i]));
        right_y.clear();
        right_y.extend(right_rows.iter().map(|&i| y[i]));
        let decrease = impurity_decrease(&left_y, &right_y)?;
        let (ml, mr) = (mean_of(y, &left_rows), mean_of(y, &right_rows));

        let (lid, rid) = (nodes.len(), nodes.len() + 1);
        for (cid, m, n) in [(lid, ml, left_rows.len()), (rid, mr, right_rows.len())] {
            nodes.push(Node {
                id: cid,
                depth: depth + 1,
                feature: None,
                threshold: 0.0,
                n_node: n,
                n_left: 0,
                n_right: 0,
                mean_node: m,
                mean_left: 0.0,
                mean_right: 0.0,
                left: None,
                right: None,
                value: m,
                impurity_decrease: 0.0,
            });
        }
        let node = &mut nodes[id];
        node.feature = Some(cand.feature);
        node.threshold = cand.threshold;
        node.n_left = left_rows.len();
        node.n_right = right_rows.len();
        node.mean_left = ml;
        node.mean_right = mr;
        node.left = Some(lid);
        node.right = Some(rid);
        node.impurity_decrease = decrease;

        stack.push((rid, right_rows));
        stack.push((lid, left_rows));
    }
    // Node ids are assigned at creation (parent before children, left before right).
    // Splits are actualized in the order the stack pops them, which differs from id
    // order only in which sibling subtree is finished first; renumber to pre-order so
    // that id order is creation order.
    TreeStructure::from_nodes(renumber_preorder(nodes), p)
}

fn renumber_preorder(nodes: Vec<Node>) -> Vec<Node> {
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        order.push(id);
        if let (Some(l), Some(r)) = (nodes[id].left, nodes[id].right) {
            stack.push(r);
            stack.push(l);
        }
    }
    let mut new_id = vec![0; nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new;
    }
    order
        .iter()
        .map(|&old| {
            let mut n = nodes[old].clone();
            n.id = new_id[old];
            n.left = n.left.map(|c| new_id[c]);
            n.right = n.right.map(|c| new_id[c]);
            n
        })
        .collect()
}

pub(crate) fn check_params(params: &ForestParams, data: &Dataset) -> Result<()> {
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::InvalidParameter("min_samples_leaf must be at least 1".into()));
    }
    params.resolve_max_features(data.n_features(), data.task())?;
    if params.impurity == Impurity::Gini
        && data.response().iter().any(|&y| y != 0.0 && y != 1.0)
    {
        return Err(Error::Incompatible(
            "gini impurity needs a 0/1 response".into(),
        ));
    }
    Ok(())
}
