//! ID3 / C4.5 / CART induction over binary threshold splits, random
//! forests, prediction and evaluation.
//!
//! The three algorithms share one candidate set (midpoints between
//! consecutive distinct values) and differ only in their criterion:
//! information gain, gain ratio, and weighted Gini impurity.

mod criteria;
mod forest;
mod metrics;
mod model_file;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::FeatureMatrix;

pub use criteria::{
    entropy, gain_ratio, gini_impurity, information_gain, split_info, weighted_gini,
};
pub use forest::{build_forest, ForestConfig, RandomForest};
pub use metrics::{evaluate, Metrics};
pub use model_file::{ModelFile, ModelMetrics, MODEL_FORMAT};
pub use split::{
    best_split, candidate_gaps, midpoint, Criterion, Split, MAX_EXACT_CANDIDATES, MIN_IMPROVEMENT,
    TIE_TOLERANCE,
};

/// Default depth limit; depth counts edges from the root.
pub const DEFAULT_MAX_DEPTH: u32 = 95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "id3")]
    Id3,
    #[serde(rename = "c4.5")]
    C45,
    #[serde(rename = "cart")]
    Cart,
}

impl Algorithm {
    pub fn criterion(self) -> Criterion {
        match self {
            Algorithm::Id3 => Criterion::InfoGain,
            Algorithm::C45 => Criterion::GainRatio,
            Algorithm::Cart => Criterion::Gini,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Id3 => "id3",
            Algorithm::C45 => "c4.5",
            Algorithm::Cart => "cart",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "id3" => Ok(Algorithm::Id3),
            "c4.5" | "c45" => Ok(Algorithm::C45),
            "cart" => Ok(Algorithm::Cart),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Features, labels and document ids of the training rows.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a [u32],
    pub doc_ids: &'a [String],
    pub n_classes: usize,
}

impl<'a> TrainingData<'a> {
    pub fn new(
        features: &'a FeatureMatrix,
        labels: &'a [u32],
        doc_ids: &'a [String],
        n_classes: usize,
    ) -> Result<Self> {
        if labels.len() != features.n() || doc_ids.len() != features.n() {
            return Err(Error::value(format!(
                "{} feature rows, {} labels, {} doc ids",
                features.n(),
                labels.len(),
                doc_ids.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::value(format!(
                "label {bad} not below class count {n_classes}"
            )));
        }
        if features.n() == 0 {
            return Err(Error::value("no training rows"));
        }
        Ok(Self {
            features,
            labels,
            doc_ids,
            n_classes,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub algorithm: Algorithm,
    pub max_depth: u32,
    pub min_samples_leaf: usize,
    /// Restrict splits to these feature columns; `None` allows all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_features: Option<Vec<usize>>,
}

impl TreeConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            max_depth: DEFAULT_MAX_DEPTH,
            min_samples_leaf: 1,
            allowed_features: None,
        }
    }

    pub fn with_max_depth(mut self, max_depth: u32) -> Self {
        self.max_depth = max_depth;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Leaf,
    /// `left` receives rows with `value ≤ threshold`.
    Internal {
        split: Split,
        left: u32,
        right: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: u32,
    pub depth: u32,
    pub class_counts: Vec<usize>,
    /// Training documents whose path passes through this node.
    pub routed: Vec<String>,
    pub kind: NodeKind,
}

impl TreeNode {
    /// Majority class, lowest index on ties.
    pub fn majority_class(&self) -> u32 {
        majority(&self.class_counts)
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }

    pub fn children(&self) -> Option<(u32, u32)> {
        match self.kind {
            NodeKind::Internal { left, right, .. } => Some((left, right)),
            NodeKind::Leaf => None,
        }
    }
}

pub(crate) fn majority(counts: &[usize]) -> u32 {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best as u32
}

/// Binary decision tree stored as a pre-order arena: node `i` has id `i`,
/// the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub config: TreeConfig,
    pub n_classes: usize,
    pub n_features: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub class: u32,
    pub path: Vec<u32>,
    /// Index of the tree whose path is reported (always 0 for a single tree).
    pub tree: usize,
}

fn check_row(row: &[f64], m: usize) -> Result<()> {
    if row.len() != m {
        return Err(Error::value(format!(
            "row has {} features, model expects {m}",
            row.len()
        )));
    }
    if let Some(col) = row.iter().position(|v| v.is_nan()) {
        return Err(Error::Value {
            row: None,
            col: Some(col),
            msg: "NaN feature value".into(),
        });
    }
    Ok(())
}

impl DecisionTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: u32) -> Option<&TreeNode> {
        self.nodes.get(id as usize)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    /// Number of root-to-leaf rules.
    pub fn rule_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        check_row(row, self.n_features)?;
        Ok(self.route(row))
    }

    fn route(&self, row: &[f64]) -> Prediction {
        let mut path = vec![0];
        let mut node = &self.nodes[0];
        while let NodeKind::Internal { split, left, right } = &node.kind {
            let next = if row[split.feature] <= split.threshold {
                *left
            } else {
                *right
            };
            path.push(next);
            node = &self.nodes[next as usize];
        }
        Prediction {
            class: node.majority_class(),
            path,
            tree: 0,
        }
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Internal { split, .. } => Some(split.feature),
                NodeKind::Leaf => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Greedy recursive induction. A node becomes a leaf when it is pure, sits
/// at `max_depth`, holds fewer than `2 · min_samples_leaf` rows, or has no
/// improving split.
pub fn build_tree(data: &TrainingData<'_>, config: &TreeConfig) -> Result<DecisionTree> {
    let m = data.features.m();
    let allowed: Vec<usize> = match &config.allowed_features {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&j| j >= m) {
                return Err(Error::Config(format!(
                    "allowed feature {bad} outside [0, {m})"
                )));
            }
            f.clone()
        }
        None => (0..m).collect(),
    };
    if allowed.is_empty() {
        return Err(Error::Config("no features allowed for splitting".into()));
    }
    let mut nodes = Vec::new();
    let all: Vec<usize> = (0..data.features.n()).collect();
    grow(data, config, &allowed, all, 0, &mut nodes)?;
    Ok(DecisionTree {
        nodes,
        config: config.clone(),
        n_classes: data.n_classes,
        n_features: m,
    })
}

fn grow(
    data: &TrainingData<'_>,
    config: &TreeConfig,
    allowed: &[usize],
    samples: Vec<usize>,
    depth: u32,
    nodes: &mut Vec<TreeNode>,
) -> Result<u32> {
    let id = nodes.len() as u32;
    let counts = split::class_counts(data, &samples);
    let routed = samples.iter().map(|&s| data.doc_ids[s].clone()).collect();
    nodes.push(TreeNode {
        id,
        depth,
        class_counts: counts.clone(),
        routed,
        kind: NodeKind::Leaf,
    });

    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let min_leaf = config.min_samples_leaf.max(1);
    if pure || depth >= config.max_depth || samples.len() < 2 * min_leaf {
        return Ok(id);
    }
    let Some(split) = best_split(
        data,
        &samples,
        allowed,
        config.algorithm.criterion(),
        min_leaf,
    )?
    else {
        return Ok(id);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = samples
        .iter()
        .partition(|&&s| data.features.get(s, split.feature) <= split.threshold);
    let left = grow(data, config, allowed, left_rows, depth + 1, nodes)?;
    let right = grow(data, config, allowed, right_rows, depth + 1, nodes)?;
    nodes[id as usize].kind = NodeKind::Internal { split, left, right };
    Ok(id)
}

/// A trained tree or forest.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Tree(DecisionTree),
    Forest(RandomForest),
}

impl Model {
    pub fn trees(&self) -> &[DecisionTree] {
        match self {
            Model::Tree(t) => std::slice::from_ref(t),
            Model::Forest(f) => &f.trees,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.trees()[0].n_classes
    }

    pub fn n_features(&self) -> usize {
        self.trees()[0].n_features
    }

    pub fn algorithm(&self) -> Algorithm {
        self.trees()[0].algorithm()
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        match self {
            Model::Tree(t) => t.predict(row),
            Model::Forest(f) => f.predict(row),
        }
    }
}
