use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedToken, AnnotationSet, Corpus, Document, SynonymLexicon};
use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(&read(path)?)
}

pub(crate) fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: Some(i + 1),
            msg: e.to_string(),
        })?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::Schema {
                line: Some(i + 1),
                msg: format!("duplicate doc_id {:?}", doc.doc_id),
            });
        }
        documents.push(doc);
    }
    Ok(Corpus { documents })
}

/// Allowed POS and NER labels. The default is the Universal Dependencies POS
/// set plus the OntoNotes entity labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tagset {
    pub pos: BTreeSet<String>,
    pub ner: BTreeSet<String>,
}

impl Default for Tagset {
    fn default() -> Self {
        const POS: &[&str] = &[
            "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON",
            "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X", "SPACE",
        ];
        const NER: &[&str] = &[
            "PERSON",
            "NORP",
            "FAC",
            "ORG",
            "GPE",
            "LOC",
            "PRODUCT",
            "EVENT",
            "WORK_OF_ART",
            "LAW",
            "LANGUAGE",
            "DATE",
            "TIME",
            "PERCENT",
            "MONEY",
            "QUANTITY",
            "ORDINAL",
            "CARDINAL",
            "MISC",
        ];
        Tagset {
            pos: POS.iter().map(|s| s.to_string()).collect(),
            ner: NER.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Tagset {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read(path)?)?)
    }
}

/// Drops a `B-`/`I-`/`E-`/`S-`/`L-`/`U-` chunk prefix from an entity tag.
pub(crate) fn strip_bio(tag: &str) -> &str {
    match tag.as_bytes() {
        [b'B' | b'I' | b'E' | b'S' | b'L' | b'U', b'-', ..] => &tag[2..],
        _ => tag,
    }
}

#[derive(Deserialize)]
struct AnnotationRecord {
    doc_id: String,
    tokens: Vec<RawToken>,
}

#[derive(Deserialize)]
struct RawToken {
    surface: String,
    pos: String,
    #[serde(default)]
    ner: Option<String>,
}

pub fn load_annotations(path: &Path, tagset: &Tagset) -> Result<AnnotationSet> {
    parse_annotations(&read(path)?, tagset)
}

pub(crate) fn parse_annotations(text: &str, tagset: &Tagset) -> Result<AnnotationSet> {
    let mut docs = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = Some(i + 1);
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: line_no,
            msg: e.to_string(),
        })?;
        let mut tokens = Vec::with_capacity(rec.tokens.len());
        for t in rec.tokens {
            if !tagset.pos.contains(&t.pos) {
                return Err(Error::Schema {
                    line: line_no,
                    msg: format!("POS tag {:?} not in tagset", t.pos),
                });
            }
            let ner = t.ner.unwrap_or_default();
            let bare = strip_bio(&ner);
            if !bare.is_empty() && bare != "O" && !tagset.ner.contains(bare) {
                return Err(Error::Schema {
                    line: line_no,
                    msg: format!("NER tag {ner:?} not in tagset"),
                });
            }
            let ner = if bare == "O" {
                String::new()
            } else {
                bare.to_string()
            };
            tokens.push(AnnotatedToken {
                surface: t.surface,
                pos: t.pos,
                ner,
            });
        }
        if docs.insert(rec.doc_id.clone(), tokens).is_some() {
            return Err(Error::Schema {
                line: line_no,
                msg: format!("duplicate annotation record for {:?}", rec.doc_id),
            });
        }
    }
    Ok(AnnotationSet { docs })
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    Ok(read(path)?
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

pub fn load_lexicon(path: &Path) -> Result<SynonymLexicon> {
    parse_lexicon(&read(path)?)
}

pub(crate) fn parse_lexicon(text: &str) -> Result<SynonymLexicon> {
    let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, ids) = line.split_once('\t').ok_or_else(|| Error::Schema {
            line: Some(i + 1),
            msg: "expected word<TAB>synset_id[,synset_id...]".into(),
        })?;
        let word = word.trim().to_lowercase();
        if word.is_empty() {
            return Err(Error::Schema {
                line: Some(i + 1),
                msg: "empty word".into(),
            });
        }
        let set = entries.entry(word).or_default();
        for id in ids.split(',') {
            let id = id.trim();
            if id.is_empty() {
                return Err(Error::Schema {
                    line: Some(i + 1),
                    msg: "empty synset id".into(),
                });
            }
            set.insert(id.to_string());
        }
    }
    Ok(SynonymLexicon { entries })
}
