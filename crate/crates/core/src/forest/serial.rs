//! Versioned JSON form of a [`Forest`].
//!
//! Floats are written in their shortest round-trip decimal form, so a reload is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FittedTree, Forest, ForestParams, Node, TreeStructure};
use crate::data::{BootstrapIndex, Task};
use crate::error::{Error, Result};

pub const FOREST_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    depth: usize,
    feature: Option<usize>,
    threshold: Option<f64>,
    n_node: usize,
    n_left: usize,
    n_right: usize,
    /// [node, left, right]; children entries are 0 for leaves.
    means: [f64; 3],
    left: Option<usize>,
    right: Option<usize>,
    leaf_value: f64,
    impurity_decrease: f64,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    in_bag: Vec<usize>,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct ForestDocument {
    schema_version: u32,
    task: Task,
    seed: u64,
    n_features: usize,
    n_rows: usize,
    params: ForestParams,
    trees: Vec<TreeRecord>,
}

impl From<&Node> for NodeRecord {
    fn from(n: &Node) -> Self {
        Self {
            id: n.id,
            depth: n.depth,
            feature: n.feature,
            threshold: n.feature.map(|_| n.threshold),
            n_node: n.n_node,
            n_left: n.n_left,
            n_right: n.n_right,
            means: [n.mean_node, n.mean_left, n.mean_right],
            left: n.left,
            right: n.right,
            leaf_value: n.value,
            impurity_decrease: n.impurity_decrease,
        }
    }
}

impl From<NodeRecord> for Node {
    fn from(r: NodeRecord) -> Self {
        Node {
            id: r.id,
            depth: r.depth,
            feature: r.feature,
            threshold: r.threshold.unwrap_or(0.0),
            n_node: r.n_node,
            n_left: r.n_left,
            n_right: r.n_right,
            mean_node: r.means[0],
            mean_left: r.means[1],
            mean_right: r.means[2],
            left: r.left,
            right: r.right,
            value: r.leaf_value,
            impurity_decrease: r.impurity_decrease,
        }
    }
}

impl Forest {
    pub fn to_json(&self) -> Result<String> {
        let n_rows = self.trees[0].bootstrap.in_bag.len();
        let doc = ForestDocument {
            schema_version: FOREST_SCHEMA_VERSION,
            task: self.task,
            seed: self.seed,
            n_features: self.n_features,
            n_rows,
            params: self.params.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeRecord {
                    in_bag: t.bootstrap.in_bag.clone(),
                    nodes: t.structure.nodes().iter().map(NodeRecord::from).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ForestDocument = serde_json::from_str(s)?;
        if doc.schema_version != FOREST_SCHEMA_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported forest schema_version {} (expected {FOREST_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let trees = doc
            .trees
            .into_iter()
            .map(|t| {
                if t.in_bag.iter().any(|&i| i >= doc.n_rows) {
                    return Err(Error::InvalidData("in-bag index out of range".into()));
                }
                let nodes = t.nodes.into_iter().map(Node::from).collect();
                Ok(FittedTree {
                    structure: TreeStructure::from_nodes(nodes, doc.n_features)?,
                    bootstrap: BootstrapIndex::from_in_bag(t.in_bag, doc.n_rows),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Forest::new(trees, doc.params, doc.task, doc.seed, doc.n_features)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::data::write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
