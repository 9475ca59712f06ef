use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prototypes::{FilterSpec, PrototypeSummary};
use crate::tree::{Criterion, ModelMetrics, NodeKind};

pub const GLOBAL_FORMAT: &str = "global-explanation/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitInfo {
    pub feature: usize,
    pub feature_name: String,
    pub threshold: f64,
    pub criterion: Criterion,
    pub criterion_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationNode {
    pub node_id: u32,
    pub depth: u32,
    pub class_counts: Vec<usize>,
    pub majority_class: u32,
    pub n_routed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PrototypeSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ExplanationNode>,
}

impl ExplanationNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&ExplanationNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionInfo {
    pub method: String,
    pub m: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationMeta {
    pub algorithm: String,
    pub kind: String,
    pub tree_count: usize,
    pub depth: u32,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub reduction: ReductionInfo,
    pub model_sha256: String,
    pub prototypes_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ModelMetrics>,
    pub synonym_matching: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalExplanation {
    pub format: String,
    pub metadata: ExplanationMeta,
    pub filter: FilterSpec,
    pub top_k: usize,
    pub trees: Vec<ExplanationNode>,
}

impl GlobalExplanation {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("explanation serialize")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        de.disable_recursion_limit();
        let g = Self::deserialize(&mut de)?;
        de.end()?;
        Ok(g)
    }

    /// Graphviz rendering of the skeleton with the first few prototype words.
    pub fn to_dot(&self, words_per_node: usize) -> String {
        let mut out =
            String::from("digraph explanation {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        for (t, root) in self.trees.iter().enumerate() {
            if self.trees.len() > 1 {
                let _ = writeln!(
                    out,
                    "  subgraph cluster_tree{t} {{\n    label=\"tree {t}\";"
                );
            }
            for n in root.walk() {
                let mut label = match &n.split {
                    Some(s) => format!("{} <= {}", s.feature_name, s.threshold),
                    None => format!(
                        "class {}",
                        self.metadata
                            .class_names
                            .get(n.majority_class as usize)
                            .cloned()
                            .unwrap_or_else(|| n.majority_class.to_string())
                    ),
                };
                let _ = write!(label, "\\n{:?}", n.class_counts);
                if let Some(s) = &n.summary {
                    let words: Vec<&str> = s
                        .entries
                        .iter()
                        .take(words_per_node)
                        .map(|e| e.word.as_str())
                        .collect();
                    if !words.is_empty() {
                        let _ = write!(label, "\\n{}", words.join(" "));
                    }
                }
                let _ = writeln!(
                    out,
                    "  t{t}_n{} [label=\"{}\"];",
                    n.node_id,
                    label.replace('"', "\\\"")
                );
                for (i, c) in n.children.iter().enumerate() {
                    let edge = if i == 0 { "yes" } else { "no" };
                    let _ = writeln!(
                        out,
                        "  t{t}_n{} -> t{t}_n{} [label=\"{edge}\"];",
                        n.node_id, c.node_id
                    );
                }
            }
            if self.trees.len() > 1 {
                out.push_str("  }\n");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Assembles the nested explanation tree. `summary_of` yields the summary of
/// a node, and must not return `None` for a node with routed documents.
pub fn explanation_tree(
    tree: &crate::tree::DecisionTree,
    feature_names: &[String],
    mut summary_of: impl FnMut(u32) -> Result<Option<PrototypeSummary>>,
) -> Result<ExplanationNode> {
    fn build(
        tree: &crate::tree::DecisionTree,
        id: u32,
        names: &[String],
        summary_of: &mut dyn FnMut(u32) -> Result<Option<PrototypeSummary>>,
    ) -> Result<ExplanationNode> {
        let node = &tree.nodes[id as usize];
        let summary = summary_of(id)?;
        if summary.is_none() && !node.routed.is_empty() {
            return Err(Error::IncompleteArtifact(format!(
                "no prototype summary for populated node {id}"
            )));
        }
        let (split, children) = match &node.kind {
            NodeKind::Leaf => (None, Vec::new()),
            NodeKind::Internal { split, left, right } => (
                Some(SplitInfo {
                    feature: split.feature,
                    feature_name: names
                        .get(split.feature)
                        .cloned()
                        .unwrap_or_else(|| format!("f{}", split.feature)),
                    threshold: split.threshold,
                    criterion: split.criterion,
                    criterion_value: split.criterion_value,
                }),
                vec![
                    build(tree, *left, names, summary_of)?,
                    build(tree, *right, names, summary_of)?,
                ],
            ),
        };
        Ok(ExplanationNode {
            node_id: id,
            depth: node.depth,
            class_counts: node.class_counts.clone(),
            majority_class: node.majority_class(),
            n_routed: node.routed.len(),
            split,
            summary,
            children,
        })
    }
    build(tree, 0, feature_names, &mut summary_of)
}
