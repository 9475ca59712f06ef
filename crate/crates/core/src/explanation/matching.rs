use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingestion::SynonymLexicon;
use crate::prototypes::Token;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Synonym,
}

/// A document word aligned with a node's prototype words. `spans` are
/// half-open UTF-8 byte ranges of every occurrence in the original text.
/// Synonym matches list the prototype words they share a synset with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordMatch {
    pub word: String,
    pub kind: MatchKind,
    pub spans: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub via: Vec<String>,
}

/// Aligns document tokens with prototype words. A token equal to a cloud
/// word is an exact match; otherwise it is a synonym match when it shares a
/// synset with any cloud word. Each distinct document word appears at most
/// once, ordered by first occurrence.
pub fn match_words(
    tokens: &[Token],
    cloud: &[&str],
    lexicon: Option<&SynonymLexicon>,
) -> Vec<WordMatch> {
    let cloud_set: BTreeSet<&str> = cloud.iter().copied().collect();
    let mut out: Vec<WordMatch> = Vec::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for (i, tok) in tokens.iter().enumerate() {
        if !seen.insert(tok.text.as_str()) {
            continue;
        }
        let (kind, via) = if cloud_set.contains(tok.text.as_str()) {
            (MatchKind::Exact, Vec::new())
        } else {
            let Some(lex) = lexicon else { continue };
            let Some(mine) = lex.synsets(&tok.text) else {
                continue;
            };
            let via: Vec<String> = cloud_set
                .iter()
                .filter(|w| lex.synsets(w).is_some_and(|s| !s.is_disjoint(mine)))
                .map(|w| w.to_string())
                .collect();
            if via.is_empty() {
                continue;
            }
            (MatchKind::Synonym, via)
        };
        let spans = tokens[i..]
            .iter()
            .filter(|t| t.text == tok.text)
            .map(|t| [t.start, t.end])
            .collect();
        out.push(WordMatch {
            word: tok.text.clone(),
            kind,
            spans,
            via,
        });
    }
    out
}
