//! Prototype word summaries: every tree node is described by the top
//! TF-IDF words of the training documents routed through it.

mod filter;
mod tfidf;
mod tokenize;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{DatasetBundle, SplitTag};
use crate::tree::Model;

pub use filter::{apply_filter, tag_entries, AnnotationIndex, FilterSpec};
pub use tfidf::{build_corpus_stats, node_wordcloud, stopword_hash, CorpusStats, StatsSnapshot};
pub use tokenize::{tokenize_normalize, Token};

/// Words kept per node unless configured otherwise.
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word: String,
    pub score: f64,
    #[serde(default)]
    pub pos: String,
    #[serde(default)]
    pub ner: String,
    /// Requested filter tags this word carried in at least one routed
    /// document; empty when no filter was applied.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matched_tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSummary {
    pub node_id: u32,
    pub entries: Vec<WordEntry>,
    pub filter_applied: FilterSpec,
}

impl PrototypeSummary {
    pub fn truncated(mut self, k: usize) -> Self {
        self.entries.truncate(k);
        self
    }
}

pub const PROTOTYPE_FORMAT: &str = "prototypes/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreePrototypes {
    pub nodes: BTreeMap<u32, Vec<WordEntry>>,
}

/// Per-node word lists for every tree of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeArtifact {
    pub format: String,
    pub model_sha256: String,
    pub top_k: usize,
    pub stats: StatsSnapshot,
    pub trees: Vec<TreePrototypes>,
}

impl PrototypeArtifact {
    pub fn summary(&self, tree: usize, node_id: u32) -> Option<PrototypeSummary> {
        let entries = self.trees.get(tree)?.nodes.get(&node_id)?;
        Some(PrototypeSummary {
            node_id,
            entries: entries.clone(),
            filter_applied: FilterSpec::None,
        })
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("prototypes serialize");
        out.push(b'\n');
        out
    }

    pub fn read(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((serde_json::from_slice(&bytes)?, crate::sha256_hex(&bytes)))
    }
}

/// Tokenized training documents keyed by doc id.
pub fn tokenize_train(bundle: &DatasetBundle) -> HashMap<String, Vec<Token>> {
    bundle
        .corpus
        .documents
        .par_iter()
        .filter(|d| d.split == SplitTag::Train)
        .map(|d| {
            (
                d.doc_id.clone(),
                tokenize_normalize(&d.text, &bundle.stopwords),
            )
        })
        .collect()
}

pub fn corpus_stats(bundle: &DatasetBundle) -> Result<CorpusStats> {
    build_corpus_stats(
        bundle
            .corpus
            .documents
            .iter()
            .filter(|d| d.split == SplitTag::Train)
            .map(|d| d.text.as_str()),
        &bundle.stopwords,
    )
}

/// Word clouds for every node of every tree. Entries carry majority POS/NER
/// tags when annotations are loaded.
pub fn summarize(
    model: &Model,
    bundle: &DatasetBundle,
    top_k: usize,
    model_sha256: String,
) -> Result<PrototypeArtifact> {
    let stats = corpus_stats(bundle)?;
    let tokens = tokenize_train(bundle);
    let index = bundle.annotations.as_ref().map(AnnotationIndex::new);
    let mut trees = Vec::with_capacity(model.trees().len());
    for tree in model.trees() {
        let summaries = tree
            .nodes
            .par_iter()
            .map(|node| {
                let docs = node
                    .routed
                    .iter()
                    .map(|id| {
                        tokens.get(id).map(Vec::as_slice).ok_or_else(|| {
                            Error::NotFound(format!(
                                "routed document {id} is not a training document"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut s = node_wordcloud(node.id, &docs, &stats, top_k)?;
                if let Some(index) = &index {
                    tag_entries(&mut s, &node.routed, index);
                }
                Ok((node.id, s.entries))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        trees.push(TreePrototypes { nodes: summaries });
    }
    Ok(PrototypeArtifact {
        format: PROTOTYPE_FORMAT.into(),
        model_sha256,
        top_k,
        stats: stats.snapshot(),
        trees,
    })
}
