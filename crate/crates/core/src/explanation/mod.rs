//! Global explanations (tree skeleton plus node prototypes) and local
//! explanations (one document's decision path with word alignments).

mod global;
mod matching;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{BundleManifest, DatasetBundle, SplitTag};
use crate::prototypes::{
    apply_filter, tokenize_normalize, AnnotationIndex, FilterSpec, PrototypeArtifact,
    PrototypeSummary,
};
use crate::reduction::{FeatureMatrix, Reducer, ReductionArtifact};
use crate::tree::{Model, ModelFile, Prediction};

pub use global::{
    explanation_tree, ExplanationMeta, ExplanationNode, GlobalExplanation, ReductionInfo,
    SplitInfo, GLOBAL_FORMAT,
};
pub use matching::{match_words, MatchKind, WordMatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathStep {
    pub node_id: u32,
    pub matches: Vec<WordMatch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalExplanation {
    pub doc_id: Option<String>,
    pub predicted_class: String,
    pub predicted_label: u32,
    /// Index of the tree whose path is shown; always 0 for a single tree.
    pub tree: usize,
    pub filter: FilterSpec,
    pub path: Vec<PathStep>,
}

impl LocalExplanation {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("explanation serialize")
    }
}

/// Input for explaining text outside the corpus. The engine never embeds
/// text itself, so either the raw embedding or the reduced row must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdhocInput {
    pub text: String,
    #[serde(default)]
    pub embedding: Option<Vec<f32>>,
    #[serde(default)]
    pub features: Option<Vec<f64>>,
}

type FilterKey = (usize, u32, String);

/// Loaded, mutually consistent artifacts. Immutable after construction
/// apart from a cache of filtered summaries, and safe to share across
/// threads.
pub struct Explainer {
    pub bundle: DatasetBundle,
    pub reducer: Reducer,
    pub model: Model,
    pub model_file: ModelFile,
    pub prototypes: PrototypeArtifact,
    pub features: FeatureMatrix,
    pub reduction_sha256: String,
    pub model_sha256: String,
    pub prototypes_sha256: String,
    annotations: Option<AnnotationIndex>,
    doc_index: HashMap<String, usize>,
    filtered: RwLock<HashMap<FilterKey, Arc<PrototypeSummary>>>,
}

/// Hashes of the artifacts an [`Explainer`] is built from.
#[derive(Clone, Debug, Default)]
pub struct Provenance {
    pub reduction_sha256: String,
    pub model_sha256: String,
    pub prototypes_sha256: String,
}

impl Explainer {
    pub fn new(
        bundle: DatasetBundle,
        reduction: &ReductionArtifact,
        model_file: ModelFile,
        prototypes: PrototypeArtifact,
        provenance: Provenance,
    ) -> Result<Self> {
        if model_file.reduction_sha256 != provenance.reduction_sha256 {
            return Err(Error::Config(format!(
                "model was trained on reduction {} but reduction artifact hashes to {}",
                model_file.reduction_sha256, provenance.reduction_sha256
            )));
        }
        if prototypes.model_sha256 != provenance.model_sha256 {
            return Err(Error::Config(format!(
                "prototypes were built for model {} but model file hashes to {}",
                prototypes.model_sha256, provenance.model_sha256
            )));
        }
        if reduction.feature_names != model_file.feature_names {
            return Err(Error::Config(
                "model feature names differ from the reduction artifact".into(),
            ));
        }
        if model_file.class_names != bundle.embeddings.class_names() {
            return Err(Error::Config(
                "model class names differ from the dataset".into(),
            ));
        }
        let reducer = reduction.to_reducer()?;
        let model = model_file.to_model()?;
        if prototypes.trees.len() != model.trees().len() {
            return Err(Error::IncompleteArtifact(format!(
                "prototypes cover {} trees, model has {}",
                prototypes.trees.len(),
                model.trees().len()
            )));
        }
        let features = reducer.transform(&bundle.embeddings)?;
        let annotations = bundle.annotations.as_ref().map(AnnotationIndex::new);
        let doc_index = bundle
            .corpus
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        Ok(Self {
            bundle,
            reducer,
            model,
            model_file,
            prototypes,
            features,
            reduction_sha256: provenance.reduction_sha256,
            model_sha256: provenance.model_sha256,
            prototypes_sha256: provenance.prototypes_sha256,
            annotations,
            doc_index,
            filtered: RwLock::default(),
        })
    }

    /// Loads every artifact from disk and checks the provenance chain
    /// embeddings → reduction → model → prototypes.
    pub fn load(
        manifest: &Path,
        reduction: &Path,
        model: &Path,
        prototypes: &Path,
    ) -> Result<Self> {
        let (bundle_manifest, base) = BundleManifest::read(manifest)?;
        let emb_path = bundle_manifest.embeddings_path(&base);
        let emb_bytes = std::fs::read(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
        let emb_sha = crate::sha256_hex(&emb_bytes);
        drop(emb_bytes);
        let bundle = bundle_manifest.load(&base)?;
        let (reduction, reduction_sha256) = ReductionArtifact::read(reduction)?;
        if reduction.source.embeddings_sha256 != emb_sha {
            return Err(Error::Config(format!(
                "reduction was fitted on embeddings {} but {} hashes to {emb_sha}",
                reduction.source.embeddings_sha256,
                emb_path.display()
            )));
        }
        let (model_file, model_sha256) = ModelFile::read(model)?;
        let (prototypes, prototypes_sha256) = PrototypeArtifact::read(prototypes)?;
        Self::new(
            bundle,
            &reduction,
            model_file,
            prototypes,
            Provenance {
                reduction_sha256,
                model_sha256,
                prototypes_sha256,
            },
        )
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_index.get(doc_id).copied()
    }

    pub fn class_name(&self, label: u32) -> String {
        self.model_file.class_names[label as usize].clone()
    }

    pub fn synonym_matching(&self) -> bool {
        self.bundle.lexicon.is_some()
    }

    /// POS and NER tags that can be used in filters.
    pub fn available_filters(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        match &self.bundle.annotations {
            Some(a) => (a.pos_tags(), a.ner_tags()),
            None => Default::default(),
        }
    }

    pub fn predict_doc(&self, index: usize) -> Result<Prediction> {
        self.model.predict(self.features.row(index))
    }

    /// Sorted doc ids of one split.
    pub fn documents(&self, split: SplitTag) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.bundle.corpus.len())
            .filter(|&i| self.bundle.corpus.documents[i].split == split)
            .collect();
        ids.sort_by(|&a, &b| {
            self.bundle.corpus.documents[a]
                .doc_id
                .cmp(&self.bundle.corpus.documents[b].doc_id)
        });
        ids
    }

    fn effective_top_k(&self, top_k: Option<usize>) -> usize {
        top_k.map_or(self.prototypes.top_k, |k| k.min(self.prototypes.top_k))
    }

    /// A node's summary after filtering and truncation to `top_k`.
    pub fn node_summary(
        &self,
        tree: usize,
        node_id: u32,
        filter: &FilterSpec,
        top_k: Option<usize>,
    ) -> Result<Option<PrototypeSummary>> {
        let Some(base) = self.prototypes.summary(tree, node_id) else {
            return Ok(None);
        };
        let node = self.model.trees()[tree]
            .node(node_id)
            .ok_or_else(|| Error::NotFound(format!("node {node_id} in tree {tree}")))?;
        let top_k = self.effective_top_k(top_k);
        if filter.is_none() {
            return Ok(Some(
                apply_filter(&base, &node.routed, None, filter)?.truncated(top_k),
            ));
        }
        let key = (tree, node_id, filter.to_string());
        if let Some(hit) = self.filtered.read().expect("filter cache").get(&key) {
            return Ok(Some(hit.as_ref().clone().truncated(top_k)));
        }
        let filtered = apply_filter(&base, &node.routed, self.annotations.as_ref(), filter)?;
        self.filtered
            .write()
            .expect("filter cache")
            .insert(key, Arc::new(filtered.clone()));
        Ok(Some(filtered.truncated(top_k)))
    }

    pub fn metadata(&self) -> ExplanationMeta {
        let trees = self.model.trees();
        ExplanationMeta {
            algorithm: self.model.algorithm().as_str().to_string(),
            kind: if trees.len() > 1 || matches!(self.model, Model::Forest(_)) {
                "forest"
            } else {
                "tree"
            }
            .into(),
            tree_count: trees.len(),
            depth: trees.iter().map(|t| t.depth()).max().unwrap_or(0),
            feature_names: self.model_file.feature_names.clone(),
            class_names: self.model_file.class_names.clone(),
            reduction: ReductionInfo {
                method: self.reducer.method().to_string(),
                m: self.reducer.m(),
                sha256: self.reduction_sha256.clone(),
            },
            model_sha256: self.model_sha256.clone(),
            prototypes_sha256: self.prototypes_sha256.clone(),
            metrics: self.model_file.metrics.clone(),
            synonym_matching: self.synonym_matching(),
        }
    }

    pub fn global(&self, filter: &FilterSpec, top_k: Option<usize>) -> Result<GlobalExplanation> {
        let mut trees = Vec::with_capacity(self.model.trees().len());
        for (t, tree) in self.model.trees().iter().enumerate() {
            trees.push(explanation_tree(
                tree,
                &self.model_file.feature_names,
                |id| self.node_summary(t, id, filter, top_k),
            )?);
        }
        Ok(GlobalExplanation {
            format: GLOBAL_FORMAT.into(),
            metadata: self.metadata(),
            filter: filter.clone(),
            top_k: self.effective_top_k(top_k),
            trees,
        })
    }

    fn local_from_row(
        &self,
        doc_id: Option<String>,
        text: &str,
        row: &[f64],
        filter: &FilterSpec,
        top_k: Option<usize>,
    ) -> Result<LocalExplanation> {
        let prediction = self.model.predict(row)?;
        let tokens = tokenize_normalize(text, &self.bundle.stopwords);
        let lexicon = self.bundle.lexicon.as_ref();
        let path = prediction
            .path
            .iter()
            .map(|&node_id| {
                let summary = self.node_summary(prediction.tree, node_id, filter, top_k)?;
                let words: Vec<&str> = summary
                    .as_ref()
                    .map(|s| s.entries.iter().map(|e| e.word.as_str()).collect())
                    .unwrap_or_default();
                Ok(PathStep {
                    node_id,
                    matches: match_words(&tokens, &words, lexicon),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalExplanation {
            doc_id,
            predicted_class: self.class_name(prediction.class),
            predicted_label: prediction.class,
            tree: prediction.tree,
            filter: filter.clone(),
            path,
        })
    }

    pub fn local_doc(
        &self,
        doc_id: &str,
        filter: &FilterSpec,
        top_k: Option<usize>,
    ) -> Result<LocalExplanation> {
        let i = self
            .doc_index(doc_id)
            .ok_or_else(|| Error::NotFound(format!("unknown doc_id {doc_id:?}")))?;
        let doc = &self.bundle.corpus.documents[i];
        self.local_from_row(
            Some(doc.doc_id.clone()),
            &doc.text,
            self.features.row(i),
            filter,
            top_k,
        )
    }

    pub fn local_adhoc(
        &self,
        input: &AdhocInput,
        filter: &FilterSpec,
        top_k: Option<usize>,
    ) -> Result<LocalExplanation> {
        let row = match (&input.features, &input.embedding) {
            (Some(f), _) => f.clone(),
            (None, Some(e)) => self.reducer.transform_row(e)?,
            (None, None) => {
                return Err(Error::MissingResource(
                    "ad-hoc text needs an embedding row or a reduced feature row".into(),
                ))
            }
        };
        self.local_from_row(None, &input.text, &row, filter, top_k)
    }
}
