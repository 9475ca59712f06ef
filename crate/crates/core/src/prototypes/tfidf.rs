use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize_normalize, Token};
use super::{FilterSpec, PrototypeSummary, WordEntry};
use crate::error::{Error, Result};

/// Document frequencies over the tokenized training split.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub df: BTreeMap<String, usize>,
    pub n_docs: usize,
    pub stopwords: BTreeSet<String>,
}

impl CorpusStats {
    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, word: &str) -> f64 {
        let df = self.df.get(word).copied().unwrap_or(0);
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            n_docs: self.n_docs,
            vocabulary_size: self.df.len(),
            stopwords_sha256: stopword_hash(&self.stopwords),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSnapshot {
    pub n_docs: usize,
    pub vocabulary_size: usize,
    pub stopwords_sha256: String,
}

/// SHA-256 over the sorted stopwords joined by newlines.
pub fn stopword_hash(stopwords: &BTreeSet<String>) -> String {
    let joined = stopwords
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join("\n");
    crate::sha256_hex(joined.as_bytes())
}

pub fn build_corpus_stats<'a>(
    train_texts: impl IntoIterator<Item = &'a str>,
    stopwords: &BTreeSet<String>,
) -> Result<CorpusStats> {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_docs = 0;
    for text in train_texts {
        n_docs += 1;
        let unique: BTreeSet<String> = tokenize_normalize(text, stopwords)
            .into_iter()
            .map(|t| t.text)
            .collect();
        for w in unique {
            *df.entry(w).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::value(
            "cannot build corpus statistics from an empty train split",
        ));
    }
    Ok(CorpusStats {
        df,
        n_docs,
        stopwords: stopwords.clone(),
    })
}

/// Top-`k` words of a node by node-summed term frequency times global idf.
/// Ties in score are ordered by ascending word.
pub fn node_wordcloud(
    node_id: u32,
    routed_docs: &[&[Token]],
    stats: &CorpusStats,
    k: usize,
) -> Result<PrototypeSummary> {
    if routed_docs.is_empty() {
        return Err(Error::EmptyNode(node_id));
    }
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for doc in routed_docs {
        for tok in doc.iter() {
            *tf.entry(tok.text.as_str()).or_default() += 1;
        }
    }
    let mut entries: Vec<WordEntry> = tf
        .into_iter()
        .map(|(word, count)| WordEntry {
            word: word.to_string(),
            score: count as f64 * stats.idf(word),
            pos: String::new(),
            ner: String::new(),
            matched_tags: Vec::new(),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.word.cmp(&b.word))
    });
    entries.truncate(k);
    Ok(PrototypeSummary {
        node_id,
        entries,
        filter_applied: FilterSpec::None,
    })
}
