use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    forest::RandomForest, Algorithm, DecisionTree, ForestConfig, Metrics, Model, NodeKind, Split,
    TreeConfig, TreeNode,
};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "tree-model/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetrics {
    pub train: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: u32,
    pub depth: u32,
    pub counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_class: Option<u32>,
    pub routed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_subset: Option<Vec<usize>>,
    pub root: NodeRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tree,
    Forest,
}

/// Serialized tree or forest with nested node records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub kind: ModelKind,
    pub algorithm: Algorithm,
    pub config: TreeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<ForestConfig>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub reduction_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ModelMetrics>,
    pub trees: Vec<TreeRecord>,
}

fn to_record(tree: &DecisionTree, id: u32) -> NodeRecord {
    let node = &tree.nodes[id as usize];
    let mut rec = NodeRecord {
        id,
        depth: node.depth,
        counts: node.class_counts.clone(),
        feature: None,
        threshold: None,
        criterion_value: None,
        children: None,
        leaf_class: None,
        routed: node.routed.clone(),
    };
    match &node.kind {
        NodeKind::Leaf => rec.leaf_class = Some(node.majority_class()),
        NodeKind::Internal { split, left, right } => {
            rec.feature = Some(split.feature);
            rec.threshold = Some(split.threshold);
            rec.criterion_value = Some(split.criterion_value);
            rec.children = Some(vec![to_record(tree, *left), to_record(tree, *right)]);
        }
    }
    rec
}

fn from_record(
    rec: &NodeRecord,
    algorithm: Algorithm,
    depth: u32,
    m: usize,
    nodes: &mut Vec<TreeNode>,
) -> Result<u32> {
    let id = nodes.len() as u32;
    if rec.id != id {
        return Err(Error::Format(format!(
            "node id {} out of pre-order position {id}",
            rec.id
        )));
    }
    if rec.depth != depth {
        return Err(Error::Format(format!(
            "node {id} records depth {} but sits at {depth}",
            rec.depth
        )));
    }
    nodes.push(TreeNode {
        id,
        depth,
        class_counts: rec.counts.clone(),
        routed: rec.routed.clone(),
        kind: NodeKind::Leaf,
    });
    match (&rec.children, rec.feature, rec.threshold) {
        (None, None, None) => {
            let expected = nodes[id as usize].majority_class();
            if rec.leaf_class.is_some_and(|c| c != expected) {
                return Err(Error::Format(format!(
                    "leaf {id} class disagrees with its counts"
                )));
            }
        }
        (Some(children), Some(feature), Some(threshold)) if children.len() == 2 => {
            if feature >= m {
                return Err(Error::Format(format!(
                    "node {id} splits on unknown feature {feature}"
                )));
            }
            let left = from_record(&children[0], algorithm, depth + 1, m, nodes)?;
            let right = from_record(&children[1], algorithm, depth + 1, m, nodes)?;
            nodes[id as usize].kind = NodeKind::Internal {
                split: Split {
                    feature,
                    threshold,
                    criterion_value: rec.criterion_value.unwrap_or(f64::NAN),
                    criterion: algorithm.criterion(),
                },
                left,
                right,
            };
        }
        _ => {
            return Err(Error::Format(format!(
                "node {id} is neither a leaf nor a binary split"
            )))
        }
    }
    Ok(id)
}

impl ModelFile {
    pub fn from_model(
        model: &Model,
        feature_names: Vec<String>,
        class_names: Vec<String>,
        reduction_sha256: String,
        metrics: Option<ModelMetrics>,
    ) -> Self {
        let (kind, config, forest, subsets) = match model {
            Model::Tree(t) => (ModelKind::Tree, t.config.clone(), None, vec![None]),
            Model::Forest(f) => (
                ModelKind::Forest,
                f.config.base.clone(),
                Some(f.config.clone()),
                f.feature_subsets.iter().cloned().map(Some).collect(),
            ),
        };
        let trees = model
            .trees()
            .iter()
            .zip(subsets)
            .map(|(t, feature_subset)| TreeRecord {
                feature_subset,
                root: to_record(t, 0),
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            kind,
            algorithm: model.algorithm(),
            config,
            forest,
            feature_names,
            class_names,
            reduction_sha256,
            metrics,
            trees,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format {:?}",
                self.format
            )));
        }
        let m = self.feature_names.len();
        let k = self.class_names.len();
        let mut trees = Vec::with_capacity(self.trees.len());
        for rec in &self.trees {
            let mut nodes = Vec::new();
            from_record(&rec.root, self.algorithm, 0, m, &mut nodes)?;
            if nodes.iter().any(|n| n.class_counts.len() != k) {
                return Err(Error::Format(
                    "class count vector length differs from class names".into(),
                ));
            }
            let config = match &rec.feature_subset {
                Some(subset) => TreeConfig {
                    allowed_features: Some(subset.clone()),
                    ..self.config.clone()
                },
                None => self.config.clone(),
            };
            trees.push(DecisionTree {
                nodes,
                config,
                n_classes: k,
                n_features: m,
            });
        }
        match (self.kind, &self.forest) {
            (ModelKind::Tree, None) if trees.len() == 1 => {
                Ok(Model::Tree(trees.pop().expect("one tree")))
            }
            (ModelKind::Forest, Some(config)) if !trees.is_empty() => {
                let feature_subsets = self
                    .trees
                    .iter()
                    .map(|t| {
                        t.feature_subset.clone().ok_or_else(|| {
                            Error::Format("forest tree without feature subset".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Model::Forest(RandomForest {
                    trees,
                    feature_subsets,
                    config: config.clone(),
                }))
            }
            _ => Err(Error::Format(
                "model kind does not match its tree list".into(),
            )),
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        de.disable_recursion_limit();
        let file = Self::deserialize(&mut de)?;
        de.end()?;
        Ok(file)
    }

    /// Reads a model file and returns it with the SHA-256 of its bytes.
    pub fn read(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_json_bytes(&bytes)?, crate::sha256_hex(&bytes)))
    }
}
