use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MdiPlusConfig;
use crate::error::{Error, Result};
use crate::metrics::ranking;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-feature scores from one importance method.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub method: String,
    pub feature_names: Vec<String>,
    /// Forest-level scores; `-inf` marks MDI+ features split in no tree.
    pub per_feature: Vec<f64>,
    /// `per_tree[t][k]`, `None` where tree `t` does not contribute to feature `k`.
    pub per_tree: Option<Vec<Vec<Option<f64>>>>,
    /// `tree_splits[t][k]`, whether tree `t` splits on feature `k`, for methods whose
    /// per-tree scores cover unsplit features too.
    pub tree_splits: Option<Vec<Vec<bool>>>,
    /// Trees entering each feature's average; for MDI+ the trees that split on it.
    pub n_trees_contributing: Vec<usize>,
    /// Feature indices by descending score, ties broken by lower index.
    pub ranking: Vec<usize>,
    pub config: Option<MdiPlusConfig>,
    /// Diagnostics such as skipped trees.
    pub notes: Vec<String>,
}

impl ImportanceReport {
    /// Averages each feature over the trees that contribute to it; features with no
    /// contributing tree get `empty_score`.
    pub(crate) fn from_per_tree(
        method: impl Into<String>,
        feature_names: Vec<String>,
        per_tree: Vec<Vec<Option<f64>>>,
        empty_score: f64,
    ) -> Self {
        let p = feature_names.len();
        let mut sums = vec![0.0; p];
        let mut counts = vec![0usize; p];
        for row in &per_tree {
            for (k, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    sums[k] += v;
                    counts[k] += 1;
                }
            }
        }
        let per_feature: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { empty_score } else { s / c as f64 })
            .collect();
        Self {
            method: method.into(),
            feature_names,
            ranking: ranking(&per_feature),
            per_feature,
            per_tree: Some(per_tree),
            tree_splits: None,
            n_trees_contributing: counts,
            config: None,
            notes: Vec::new(),
        }
    }

    /// Averages each feature over every tree; features no tree splits on get `-inf`.
    pub(crate) fn from_split_scores(
        method: impl Into<String>,
        feature_names: Vec<String>,
        scores: Vec<Vec<f64>>,
        splits: Vec<Vec<bool>>,
    ) -> Self {
        let per_feature = split_average(&scores, &splits, 0..scores.len(), feature_names.len());
        let n_trees_contributing = (0..feature_names.len())
            .map(|k| splits.iter().filter(|row| row[k]).count())
            .collect();
        Self {
            method: method.into(),
            feature_names,
            ranking: ranking(&per_feature),
            per_feature,
            per_tree: Some(scores.into_iter().map(|row| row.into_iter().map(Some).collect()).collect()),
            tree_splits: Some(splits),
            n_trees_contributing,
            config: None,
            notes: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.per_feature.len()
    }

    /// 1-based rank of every feature.
    pub fn ranks(&self) -> Vec<usize> {
        let mut out = vec![0; self.ranking.len()];
        for (pos, &k) in self.ranking.iter().enumerate() {
            out[k] = pos + 1;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let ranks = self.ranks();
        let doc = ReportDocument {
            schema_version: REPORT_SCHEMA_VERSION,
            method: self.method.clone(),
            features: (0..self.n_features())
                .map(|k| FeatureRow {
                    feature: k,
                    name: self.feature_names[k].clone(),
                    score: Score(self.per_feature[k]),
                    rank: ranks[k],
                    n_trees_contributing: self.n_trees_contributing[k],
                })
                .collect(),
            ranking: self.ranking.clone(),
            per_tree: self.per_tree.as_ref().map(|rows| {
                rows.iter()
                    .map(|r| r.iter().map(|v| v.map(Score)).collect())
                    .collect()
            }),
            tree_splits: self.tree_splits.clone(),
            config: self.config.clone(),
            notes: self.notes.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ReportDocument = serde_json::from_str(s)?;
        if doc.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported report schema_version {}",
                doc.schema_version
            )));
        }
        Ok(Self {
            method: doc.method,
            feature_names: doc.features.iter().map(|f| f.name.clone()).collect(),
            per_feature: doc.features.iter().map(|f| f.score.0).collect(),
            n_trees_contributing: doc.features.iter().map(|f| f.n_trees_contributing).collect(),
            ranking: doc.ranking,
            per_tree: doc.per_tree.map(|rows| {
                rows.into_iter()
                    .map(|r| r.into_iter().map(|v| v.map(|s| s.0)).collect())
                    .collect()
            }),
            tree_splits: doc.tree_splits,
            config: doc.config,
            notes: doc.notes,
        })
    }

    /// CSV with columns `feature,name,score,rank,n_trees_contributing`.
    pub fn to_csv(&self) -> Result<String> {
        let ranks = self.ranks();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "name", "score", "rank", "n_trees_contributing"])?;
        for k in 0..self.n_features() {
            w.write_record([
                k.to_string(),
                self.feature_names[k].clone(),
                format_score(self.per_feature[k]),
                ranks[k].to_string(),
                self.n_trees_contributing[k].to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        crate::data::write_file(json_path.as_ref(), self.to_json()?.as_bytes())?;
        crate::data::write_file(csv_path.as_ref(), self.to_csv()?.as_bytes())
    }
}

/// Shortest round-trip decimal, with `-inf`/`inf` spelled out.
pub fn format_score(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// A score that survives JSON: infinities become the strings `"-inf"` / `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Score(f64);

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&format_score(self.0))
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Score(v)),
            Raw::Text(t) => match t.as_str() {
                "-inf" => Ok(Score(f64::NEG_INFINITY)),
                "inf" => Ok(Score(f64::INFINITY)),
                other => Err(serde::de::Error::custom(format!("invalid score `{other}`"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureRow {
    feature: usize,
    name: String,
    score: Score,
    rank: usize,
    n_trees_contributing: usize,
}

#[derive(Serialize, Deserialize)]
struct ReportDocument {
    schema_version: u32,
    method: String,
    features: Vec<FeatureRow>,
    ranking: Vec<usize>,
    per_tree: Option<Vec<Vec<Option<Score>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree_splits: Option<Vec<Vec<bool>>>,
    config: Option<MdiPlusConfig>,
    #[serde(default)]
    notes: Vec<String>,
}

/// Mean score over the listed trees (with repeats), or `-inf` when none of them splits on
/// the feature.
pub(crate) fn split_average(
    scores: &[Vec<f64>],
    splits: &[Vec<bool>],
    trees: impl IntoIterator<Item = usize> + Clone,
    p: usize,
) -> Vec<f64> {
    (0..p)
        .map(|k| {
            let (mut sum, mut count, mut split) = (0.0, 0usize, false);
            for t in trees.clone() {
                sum += scores[t][k];
                count += 1;
                split |= splits[t][k];
            }
            if split {
                sum / count as f64
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}
