use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::tokenize::tokenize_normalize;
use super::PrototypeSummary;
use crate::error::{Error, Result};
use crate::ingestion::AnnotationSet;

/// Restriction of prototype words to POS or NER tags. Text form:
/// `none`, `pos:ADJ`, `ner:ORG,LOC`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum FilterSpec {
    #[default]
    None,
    Pos(BTreeSet<String>),
    Ner(BTreeSet<String>),
}

impl FilterSpec {
    pub fn is_none(&self) -> bool {
        match self {
            FilterSpec::None => true,
            FilterSpec::Pos(t) | FilterSpec::Ner(t) => t.is_empty(),
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join =
            |t: &BTreeSet<String>| t.iter().map(String::as_str).collect::<Vec<_>>().join(",");
        match self {
            FilterSpec::None => f.write_str("none"),
            FilterSpec::Pos(t) => write!(f, "pos:{}", join(t)),
            FilterSpec::Ner(t) => write!(f, "ner:{}", join(t)),
        }
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(FilterSpec::None);
        }
        let (kind, tags) = s.split_once(':').ok_or_else(|| {
            Error::Config(format!(
                "filter {s:?} must look like pos:TAG[,TAG] or ner:TAG[,TAG]"
            ))
        })?;
        let tags: BTreeSet<String> = tags
            .split(',')
            .map(|t| t.trim().to_ascii_uppercase())
            .filter(|t| !t.is_empty())
            .collect();
        if tags.is_empty() {
            return Err(Error::Config(format!("filter {s:?} names no tags")));
        }
        match kind.trim().to_ascii_lowercase().as_str() {
            "pos" => Ok(FilterSpec::Pos(tags)),
            "ner" => Ok(FilterSpec::Ner(tags)),
            other => Err(Error::Config(format!("unknown filter kind {other:?}"))),
        }
    }
}

impl Serialize for FilterSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FilterSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-document lookup from normalized word to the POS/NER tags of each
/// occurrence. Multi-word surfaces contribute every constituent word.
#[derive(Clone, Debug, Default)]
pub struct AnnotationIndex {
    docs: HashMap<String, HashMap<String, Vec<(String, String)>>>,
}

impl AnnotationIndex {
    pub fn new(annotations: &AnnotationSet) -> Self {
        let no_stop = BTreeSet::new();
        let docs = annotations
            .docs
            .iter()
            .map(|(doc_id, tokens)| {
                let mut words: HashMap<String, Vec<(String, String)>> = HashMap::new();
                for t in tokens {
                    for w in tokenize_normalize(&t.surface, &no_stop) {
                        words
                            .entry(w.text)
                            .or_default()
                            .push((t.pos.clone(), t.ner.clone()));
                    }
                }
                (doc_id.clone(), words)
            })
            .collect();
        Self { docs }
    }

    fn occurrences<'a>(
        &'a self,
        word: &'a str,
        routed: &'a [String],
    ) -> impl Iterator<Item = &'a (String, String)> + 'a {
        routed
            .iter()
            .filter_map(move |d| self.docs.get(d))
            .filter_map(move |words| words.get(word))
            .flatten()
    }
}

/// Most frequent non-empty tag, lexicographically smallest on ties.
fn majority<'a>(tags: impl Iterator<Item = &'a str>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tags.filter(|t| !t.is_empty()) {
        *counts.entry(t).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (t, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((t, c));
        }
    }
    best.map(|(t, _)| t.to_string()).unwrap_or_default()
}

/// Fills each entry's majority POS and NER tag over the routed documents.
pub fn tag_entries(summary: &mut PrototypeSummary, routed: &[String], index: &AnnotationIndex) {
    for e in &mut summary.entries {
        e.pos = majority(index.occurrences(&e.word, routed).map(|(p, _)| p.as_str()));
        e.ner = majority(index.occurrences(&e.word, routed).map(|(_, n)| n.as_str()));
    }
}

/// Keeps entries whose word carries a requested tag in at least one
/// routed-document occurrence. Order is preserved; each kept entry records
/// its majority tag and the requested tags it was seen with.
pub fn apply_filter(
    summary: &PrototypeSummary,
    routed: &[String],
    index: Option<&AnnotationIndex>,
    filter: &FilterSpec,
) -> Result<PrototypeSummary> {
    if filter.is_none() {
        let mut out = summary.clone();
        out.filter_applied = FilterSpec::None;
        return Ok(out);
    }
    let index = index.ok_or_else(|| {
        Error::MissingResource("visualization filters need token annotations".into())
    })?;
    let (wanted, use_pos) = match filter {
        FilterSpec::Pos(t) => (t, true),
        FilterSpec::Ner(t) => (t, false),
        FilterSpec::None => unreachable!("handled above"),
    };
    fn pick(o: &(String, String), use_pos: bool) -> &str {
        if use_pos {
            &o.0
        } else {
            &o.1
        }
    }
    let mut entries = Vec::new();
    for e in &summary.entries {
        let observed: Vec<&str> = index
            .occurrences(&e.word, routed)
            .map(|o| pick(o, use_pos))
            .collect();
        let matched: BTreeSet<&str> = observed
            .iter()
            .copied()
            .filter(|t| wanted.contains(*t))
            .collect();
        if matched.is_empty() {
            continue;
        }
        let mut kept = e.clone();
        let top = majority(observed.iter().copied());
        if use_pos {
            kept.pos = top;
        } else {
            kept.ner = top;
        }
        kept.matched_tags = matched.into_iter().map(String::from).collect();
        entries.push(kept);
    }
    Ok(PrototypeSummary {
        node_id: summary.node_id,
        entries,
        filter_applied: filter.clone(),
    })
}
