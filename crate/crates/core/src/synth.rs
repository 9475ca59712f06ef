//! Synthetic labelled corpora with planted class vocabularies and grouped
//! Gaussian embeddings, for demos, tests and benchmarks.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{
    validate_bundle, AnnotatedToken, AnnotationSet, BundleManifest, Corpus, DatasetBundle,
    Document, EmbeddingFormat, EmbeddingMatrix, SplitTag, SynonymLexicon,
};

/// Shape of the latent signal carried by the embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthLayout {
    /// Class `c` shifts latent group `c`.
    Shifted,
    /// `subclasses` clusters strung along latent group 0, class = subclass mod k.
    Interleaved { subclasses: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub d: usize,
    pub n_classes: usize,
    /// Embedding dimensions are split into this many equally sized groups
    /// that share one latent value each.
    pub groups: usize,
    pub layout: SynthLayout,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn three_class(seed: u64) -> Self {
        Self {
            n_docs: 600,
            d: 64,
            n_classes: 3,
            groups: 8,
            layout: SynthLayout::Shifted,
            test_fraction: 0.2,
            seed,
        }
    }

    pub fn binary(seed: u64) -> Self {
        Self {
            n_classes: 2,
            ..Self::three_class(seed)
        }
    }

    pub fn subclasses(seed: u64, subclasses: usize) -> Self {
        Self {
            layout: SynthLayout::Interleaved { subclasses },
            ..Self::three_class(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes > VOCAB.len() {
            return Err(Error::Config(format!(
                "n_classes must be in 2..={}",
                VOCAB.len()
            )));
        }
        if self.groups == 0 || !self.d.is_multiple_of(self.groups) {
            return Err(Error::Config(
                "d must be a positive multiple of groups".into(),
            ));
        }
        if matches!(self.layout, SynthLayout::Shifted) && self.groups < self.n_classes {
            return Err(Error::Config(
                "need at least one latent group per class".into(),
            ));
        }
        if let SynthLayout::Interleaved { subclasses } = self.layout {
            if subclasses < self.n_classes {
                return Err(Error::Config("need at least one subclass per class".into()));
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must be in [0, 1)".into()));
        }
        if self.n_docs < 2 * self.n_classes {
            return Err(Error::Config("too few documents".into()));
        }
        Ok(())
    }
}

/// Planted words per class with their POS and NER tags.
const VOCAB: &[(&str, &[(&str, &str, &str)])] = &[
    (
        "sport",
        &[
            ("goal", "NOUN", ""),
            ("team", "NOUN", ""),
            ("coach", "NOUN", ""),
            ("league", "NOUN", ""),
            ("striker", "NOUN", ""),
            ("victorious", "ADJ", ""),
            ("athletic", "ADJ", ""),
            ("stadium", "NOUN", "FAC"),
            ("madrid", "PROPN", "GPE"),
            ("fifa", "PROPN", "ORG"),
        ],
    ),
    (
        "business",
        &[
            ("market", "NOUN", ""),
            ("profit", "NOUN", ""),
            ("investor", "NOUN", ""),
            ("merger", "NOUN", ""),
            ("revenue", "NOUN", ""),
            ("bullish", "ADJ", ""),
            ("fiscal", "ADJ", ""),
            ("nasdaq", "PROPN", "ORG"),
            ("frankfurt", "PROPN", "GPE"),
            ("shares", "NOUN", ""),
        ],
    ),
    (
        "tech",
        &[
            ("software", "NOUN", ""),
            ("chip", "NOUN", ""),
            ("robot", "NOUN", ""),
            ("network", "NOUN", ""),
            ("startup", "NOUN", ""),
            ("digital", "ADJ", ""),
            ("wireless", "ADJ", ""),
            ("google", "PROPN", "ORG"),
            ("silicon", "PROPN", "LOC"),
            ("laptop", "NOUN", ""),
        ],
    ),
    (
        "politics",
        &[
            ("election", "NOUN", ""),
            ("senate", "NOUN", "ORG"),
            ("minister", "NOUN", ""),
            ("policy", "NOUN", ""),
            ("vote", "NOUN", ""),
            ("electoral", "ADJ", ""),
            ("partisan", "ADJ", ""),
            ("brussels", "PROPN", "GPE"),
            ("parliament", "NOUN", "ORG"),
            ("campaign", "NOUN", ""),
        ],
    ),
];

/// Synonyms of planted words. They occur rarely in text and are linked to
/// their planted word through a shared synset.
const SYNONYMS: &[(&str, &str)] = &[
    ("team", "squad"),
    ("coach", "trainer"),
    ("profit", "earnings"),
    ("market", "marketplace"),
    ("software", "program"),
    ("robot", "automaton"),
    ("election", "ballot"),
    ("policy", "doctrine"),
];

const COMMON: &[(&str, &str)] = &[
    ("people", "NOUN"),
    ("time", "NOUN"),
    ("year", "NOUN"),
    ("week", "NOUN"),
    ("report", "NOUN"),
    ("said", "VERB"),
    ("city", "NOUN"),
    ("group", "NOUN"),
    ("plan", "NOUN"),
    ("day", "NOUN"),
    ("world", "NOUN"),
    ("local", "ADJ"),
    ("major", "ADJ"),
    ("recent", "ADJ"),
    ("new", "ADJ"),
    ("announced", "VERB"),
    ("expected", "VERB"),
    ("according", "VERB"),
    ("news", "NOUN"),
    ("light", "NOUN"),
    ("today", "NOUN"),
    ("month", "NOUN"),
    ("public", "ADJ"),
    ("number", "NOUN"),
];

pub const SYNTH_STOPWORDS: &[&str] = &[
    "the", "a", "an", "of", "and", "to", "in", "is", "was", "for", "on", "with", "it", "at", "by",
];

pub fn planted_words(class: usize) -> Vec<&'static str> {
    VOCAB[class].1.iter().map(|w| w.0).collect()
}

pub fn class_names(n_classes: usize) -> Vec<String> {
    VOCAB[..n_classes].iter().map(|v| v.0.to_string()).collect()
}

fn tags_of(word: &str) -> (&'static str, &'static str) {
    for (_, words) in VOCAB {
        if let Some((_, p, n)) = words.iter().find(|w| w.0 == word) {
            return (p, n);
        }
    }
    if let Some((_, p)) = COMMON.iter().find(|w| w.0 == word) {
        return (p, "");
    }
    if SYNONYMS.iter().any(|s| s.1 == word) {
        return ("NOUN", "");
    }
    ("DET", "")
}

/// A generated dataset. Text tokens and their tags are kept together so
/// the annotations line up with the corpus exactly.
pub struct SynthDataset {
    pub config: SynthConfig,
    pub bundle: DatasetBundle,
    /// Latent subclass of every document (equal to the label for the shifted layout).
    pub subclass: Vec<usize>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_docs;
    let k = config.n_classes;
    let group_size = config.d / config.groups;

    // Balanced labels, then a seeded permutation decides the test rows.
    let subclass_count = match config.layout {
        SynthLayout::Shifted => k,
        SynthLayout::Interleaved { subclasses } => subclasses,
    };
    let subclass: Vec<usize> = (0..n).map(|i| i % subclass_count).collect();
    let labels: Vec<u32> = subclass.iter().map(|&s| (s % k) as u32).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_test = ((n as f64) * config.test_fraction).round() as usize;
    let mut split = vec![SplitTag::Train; n];
    for &i in &order[..n_test] {
        split[i] = SplitTag::Test;
    }

    let latent_noise = Normal::new(0.0, 0.7).expect("valid sd");
    let position_noise = Normal::new(0.0, 0.25).expect("valid sd");
    let dim_noise = Normal::new(0.0, 0.3).expect("valid sd");
    let mut values = Vec::with_capacity(n * config.d);
    for a in 0..n {
        let mut z: Vec<f64> = (0..config.groups)
            .map(|_| latent_noise.sample(&mut rng))
            .collect();
        match config.layout {
            SynthLayout::Shifted => z[labels[a] as usize] += 4.0,
            SynthLayout::Interleaved { .. } => {
                z[0] = 2.0 * subclass[a] as f64 + position_noise.sample(&mut rng)
            }
        }
        for g in 0..config.groups {
            for _ in 0..group_size {
                values.push((z[g] + dim_noise.sample(&mut rng)) as f32);
            }
        }
    }
    let embeddings = EmbeddingMatrix::new(
        config.d,
        values,
        labels.clone(),
        class_names(k),
        split.clone(),
    )?;

    let mut documents = Vec::with_capacity(n);
    let mut annotations = AnnotationSet::default();
    for a in 0..n {
        let c = labels[a] as usize;
        let len = rng.random_range(30..=60);
        let mut words: Vec<&str> = Vec::with_capacity(len);
        for _ in 0..len {
            let r: f64 = rng.random();
            let w = if r < 0.25 {
                let planted = VOCAB[c].1.choose(&mut rng).expect("non-empty").0;
                match SYNONYMS.iter().find(|s| s.0 == planted) {
                    Some((_, syn)) if rng.random::<f64>() < 0.1 => syn,
                    _ => planted,
                }
            } else if r < 0.4 {
                SYNTH_STOPWORDS.choose(&mut rng).expect("non-empty")
            } else {
                COMMON.choose(&mut rng).expect("non-empty").0
            };
            words.push(w);
        }
        let doc_id = format!("d{a:04}");
        let mut text = String::new();
        let mut tokens = Vec::with_capacity(len);
        for (i, w) in words.iter().enumerate() {
            let surface = if i == 0 || text.ends_with(". ") {
                let mut cs = w.chars();
                cs.next()
                    .map(|f| f.to_uppercase().chain(cs).collect())
                    .unwrap_or_default()
            } else {
                w.to_string()
            };
            text.push_str(&surface);
            text.push_str(if i + 1 == len {
                "."
            } else if i % 12 == 11 {
                ". "
            } else {
                " "
            });
            // "light" is an adjective roughly a third of the time.
            let (mut pos, ner) = tags_of(w);
            if *w == "light" && rng.random::<f64>() < 0.33 {
                pos = "ADJ";
            }
            tokens.push(AnnotatedToken {
                surface,
                pos: pos.into(),
                ner: ner.into(),
            });
        }
        annotations.docs.insert(doc_id.clone(), tokens);
        documents.push(Document {
            doc_id,
            text,
            label: labels[a],
            split: split[a],
        });
    }

    let mut lexicon = SynonymLexicon::default();
    for (i, (w, s)) in SYNONYMS.iter().enumerate() {
        for word in [w, s] {
            lexicon
                .entries
                .entry(word.to_string())
                .or_default()
                .insert(format!("syn{i:02}"));
        }
    }
    let stopwords: BTreeSet<String> = SYNTH_STOPWORDS.iter().map(|s| s.to_string()).collect();
    let bundle = validate_bundle(
        embeddings,
        Corpus { documents },
        Some(annotations),
        stopwords,
        Some(lexicon),
    )?;
    Ok(SynthDataset {
        config: config.clone(),
        bundle,
        subclass,
    })
}

/// Writes the bundle files and a manifest into `dir`; returns the manifest path.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("embeddings.bin", &bundle.embeddings.to_binary())?;

    let mut corpus = String::new();
    for d in &bundle.corpus.documents {
        corpus.push_str(&serde_json::to_string(d)?);
        corpus.push('\n');
    }
    write("corpus.jsonl", corpus.as_bytes())?;

    let mut manifest = BundleManifest {
        embeddings: "embeddings.bin".into(),
        embeddings_format: Some(EmbeddingFormat::Binary),
        corpus: "corpus.jsonl".into(),
        annotations: None,
        stopwords: None,
        lexicon: None,
        tagset: None,
    };
    if let Some(ann) = &bundle.annotations {
        let mut out = String::new();
        for (doc_id, tokens) in &ann.docs {
            let rec = serde_json::json!({ "doc_id": doc_id, "tokens": tokens });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        write("annotations.jsonl", out.as_bytes())?;
        manifest.annotations = Some("annotations.jsonl".into());
    }
    if !bundle.stopwords.is_empty() {
        let mut out = String::new();
        for w in &bundle.stopwords {
            let _ = writeln!(out, "{w}");
        }
        write("stopwords.txt", out.as_bytes())?;
        manifest.stopwords = Some("stopwords.txt".into());
    }
    if let Some(lex) = &bundle.lexicon {
        let mut out = String::new();
        for (w, ids) in &lex.entries {
            let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{w}\t{}", ids.join(","));
        }
        write("lexicon.tsv", out.as_bytes())?;
        manifest.lexicon = Some("lexicon.tsv".into());
    }
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write("manifest.json", &bytes)?;
    Ok(dir.join("manifest.json"))
}
