use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// A normalized token and its half-open byte span in the source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on every character that is neither a letter nor a digit,
/// lowercases, and drops stopwords.
pub fn tokenize_normalize(text: &str, stopwords: &BTreeSet<String>) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    let push = |s: usize, e: usize, out: &mut Vec<Token>| {
        let word = text[s..e].to_lowercase();
        if !stopwords.contains(&word) {
            out.push(Token {
                text: word,
                start: s,
                end: e,
            });
        }
    };
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push(s, i, &mut out);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut out);
    }
    out
}
