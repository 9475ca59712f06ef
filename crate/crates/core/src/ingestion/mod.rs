//! Loading and validation of embedding matrices, corpora, token annotations,
//! stopword lists and synonym lexicons.
//!
//! Everything here produces immutable values; downstream modules only ever
//! see a [`DatasetBundle`] that has passed [`validate_bundle`].

mod embeddings;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{
    load_embeddings, parse_embeddings_binary, parse_embeddings_csv, EmbeddingFormat,
};
pub use text::{load_annotations, load_corpus, load_lexicon, load_stopwords, Tagset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" | "0" => Ok(SplitTag::Train),
            "test" | "1" => Ok(SplitTag::Test),
            other => Err(Error::Format(format!("unknown split tag {other:?}"))),
        }
    }
}

/// Row-major `n × d` document embeddings with class labels and split tags.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    labels: Vec<u32>,
    class_names: Vec<String>,
    split: Vec<SplitTag>,
}

impl EmbeddingMatrix {
    /// Builds a matrix and checks every invariant: shape, finiteness, label
    /// range, and that each class occurs at least once in the train split.
    pub fn new(
        d: usize,
        values: Vec<f32>,
        labels: Vec<u32>,
        class_names: Vec<String>,
        split: Vec<SplitTag>,
    ) -> Result<Self> {
        let n = labels.len();
        if d == 0 {
            return Err(Error::Format("embedding dimension must be positive".into()));
        }
        if values.len() != n * d {
            return Err(Error::Format(format!(
                "expected {} values for {n}x{d}, found {}",
                n * d,
                values.len()
            )));
        }
        if split.len() != n {
            return Err(Error::Format(format!(
                "expected {n} split flags, found {}",
                split.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value {
                row: Some(pos / d),
                col: Some(pos % d),
                msg: format!("non-finite entry {}", values[pos]),
            });
        }
        let k = class_names.len();
        if k == 0 {
            return Err(Error::schema("at least one class is required"));
        }
        if let Some((row, label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= k) {
            return Err(Error::schema(format!(
                "label {label} at row {row} is not below class count {k}"
            )));
        }
        let mut seen = vec![false; k];
        for (label, tag) in labels.iter().zip(&split) {
            if *tag == SplitTag::Train {
                seen[*label as usize] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::schema(format!(
                "class {missing} ({}) has no training rows",
                class_names[missing]
            )));
        }
        Ok(Self {
            n,
            d,
            values,
            labels,
            class_names,
            split,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, a: usize) -> &[f32] {
        &self.values[a * self.d..(a + 1) * self.d]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn split(&self) -> &[SplitTag] {
        &self.split
    }

    pub fn indices_of(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.n).filter(|&a| self.split[a] == tag).collect()
    }

    /// Column `i` restricted to `rows`, widened to f64.
    pub fn column(&self, i: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&a| self.values[a * self.d + i] as f64)
            .collect()
    }

    /// All columns over `rows`, each as an owned vector.
    pub fn columns(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        (0..self.d).map(|i| self.column(i, rows)).collect()
    }

    /// Canonical binary encoding (`PEM1`).
    pub fn to_binary(&self) -> Vec<u8> {
        embeddings::encode_binary(self)
    }

    /// CSV encoding with the `doc_index,label,split,f0..` header. Floats are
    /// printed in shortest round-trip form so reparsing is bit-exact.
    pub fn to_csv(&self) -> String {
        embeddings::encode_csv(self)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_binary()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub label: u32,
    pub split: SplitTag,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub surface: String,
    pub pos: String,
    #[serde(default)]
    pub ner: String,
}

/// Externally produced POS/NER tags, keyed by document id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub docs: BTreeMap<String, Vec<AnnotatedToken>>,
}

impl AnnotationSet {
    pub fn pos_tags(&self) -> BTreeSet<String> {
        self.docs
            .values()
            .flatten()
            .map(|t| t.pos.clone())
            .filter(|t| !t.is_empty())
            .collect()
    }

    pub fn ner_tags(&self) -> BTreeSet<String> {
        self.docs
            .values()
            .flatten()
            .map(|t| text::strip_bio(&t.ner).to_string())
            .filter(|t| !t.is_empty())
            .collect()
    }
}

/// word → synset ids. Words are lowercase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    pub entries: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymLexicon {
    pub fn synsets(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(word)
    }

    /// True when both words are known and share at least one synset.
    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        match (self.entries.get(a), self.entries.get(b)) {
            (Some(x), Some(y)) => !x.is_disjoint(y),
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub embeddings: EmbeddingMatrix,
    pub corpus: Corpus,
    pub annotations: Option<AnnotationSet>,
    pub stopwords: BTreeSet<String>,
    pub lexicon: Option<SynonymLexicon>,
}

impl DatasetBundle {
    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.corpus
            .documents
            .iter()
            .position(|d| d.doc_id == doc_id)
    }

    pub fn annotations(&self) -> Result<&AnnotationSet> {
        self.annotations
            .as_ref()
            .ok_or_else(|| Error::MissingResource("token annotations were not loaded".into()))
    }
}

/// Checks that the corpus lines up with the embedding rows and that optional
/// resources refer only to known documents.
pub fn validate_bundle(
    embeddings: EmbeddingMatrix,
    corpus: Corpus,
    annotations: Option<AnnotationSet>,
    stopwords: BTreeSet<String>,
    lexicon: Option<SynonymLexicon>,
) -> Result<DatasetBundle> {
    if embeddings.n() != corpus.len() {
        return Err(Error::Alignment {
            row: None,
            msg: format!(
                "{} embedding rows but {} corpus documents",
                embeddings.n(),
                corpus.len()
            ),
        });
    }
    for (a, doc) in corpus.documents.iter().enumerate() {
        if embeddings.labels()[a] != doc.label {
            return Err(Error::Alignment {
                row: Some(a),
                msg: format!(
                    "embedding label {} vs corpus label {} for {}",
                    embeddings.labels()[a],
                    doc.label,
                    doc.doc_id
                ),
            });
        }
        if embeddings.split()[a] != doc.split {
            return Err(Error::Alignment {
                row: Some(a),
                msg: format!("split disagreement for {}", doc.doc_id),
            });
        }
    }
    if let Some(ann) = &annotations {
        let ids: BTreeSet<&str> = corpus.documents.iter().map(|d| d.doc_id.as_str()).collect();
        if let Some(unknown) = ann.docs.keys().find(|id| !ids.contains(id.as_str())) {
            return Err(Error::Alignment {
                row: None,
                msg: format!("annotations reference unknown doc_id {unknown:?}"),
            });
        }
    }
    Ok(DatasetBundle {
        embeddings,
        corpus,
        annotations,
        stopwords,
        lexicon,
    })
}

/// On-disk description of a dataset: paths to each resource. Relative paths
/// resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub embeddings: PathBuf,
    #[serde(default)]
    pub embeddings_format: Option<EmbeddingFormat>,
    pub corpus: PathBuf,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub tagset: Option<PathBuf>,
}

impl BundleManifest {
    pub fn read(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }

    pub fn embeddings_path(&self, base: &Path) -> PathBuf {
        if self.embeddings.is_absolute() {
            self.embeddings.clone()
        } else {
            base.join(&self.embeddings)
        }
    }

    pub fn load(&self, base: &Path) -> Result<DatasetBundle> {
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let emb_path = self.embeddings_path(base);
        let format = self
            .embeddings_format
            .unwrap_or_else(|| EmbeddingFormat::from_path(&emb_path));
        let embeddings = load_embeddings(&emb_path, format)?;
        let corpus = load_corpus(&resolve(&self.corpus))?;
        let tagset = match &self.tagset {
            Some(p) => Tagset::load(&resolve(p))?,
            None => Tagset::default(),
        };
        let annotations = self
            .annotations
            .as_ref()
            .map(|p| load_annotations(&resolve(p), &tagset))
            .transpose()?;
        let stopwords = match &self.stopwords {
            Some(p) => load_stopwords(&resolve(p))?,
            None => BTreeSet::new(),
        };
        let lexicon = self
            .lexicon
            .as_ref()
            .map(|p| load_lexicon(&resolve(p)))
            .transpose()?;
        validate_bundle(embeddings, corpus, annotations, stopwords, lexicon)
    }
}
