//! One function per acceptance criterion. Each returns a short detail line
//! on success and a description of the first violation on failure.
#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use embtree_core::explanation::{Explainer, MatchKind, Provenance};
use embtree_core::ingestion::{DatasetBundle, EmbeddingMatrix, SplitTag};
use embtree_core::pipeline::{split_metrics, train_model, TrainSpec};
use embtree_core::prototypes::{
    build_corpus_stats, node_wordcloud, summarize, tokenize_normalize, Token,
};
use embtree_core::reduction::{
    fit_reducer, kmeans_cluster, pearson_matrix, pearson_reduce, percentile_threshold,
    ClusterCenters, CnnConfig, CnnNetwork, ConvSpec, FeatureMatrix, KMeansConfig, PoolSpec,
    Reducer, ReductionArtifact, ReductionSpec, SourceInfo,
};
use embtree_core::sha256_hex;
use embtree_core::synth::{generate, planted_words, SynthConfig};
use embtree_core::tree::{
    best_split, build_tree, entropy, gini_impurity, information_gain, split_info, Algorithm,
    Criterion, ForestConfig, ModelFile, NodeKind, TrainingData, TreeConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;

pub type Outcome = Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let el = start.elapsed();
    ensure(el < limit, || {
        format!("{what} took {el:?}, limit {limit:?}")
    })
}

fn feature_matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    let m = rows[0].len();
    let names = (0..m).map(|j| format!("f{j}")).collect();
    FeatureMatrix::new(rows.len(), m, rows.concat(), names).expect("valid matrix")
}

fn doc_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("r{i}")).collect()
}

fn compare_split(
    rows: &[Vec<f64>],
    labels: &[u32],
    k: usize,
    criterion: Criterion,
    min_leaf: usize,
    got: Option<embtree_core::tree::Split>,
) -> Result<(), String> {
    let want = brute_best_split(rows, labels, k, criterion, min_leaf);
    match (got, want) {
        (None, None) => Ok(()),
        (Some(g), Some(w)) => ensure(
            g.feature == w.feature
                && g.threshold == w.threshold
                && (g.criterion_value - w.value).abs() <= EPS,
            || {
                format!("{criterion:?}: got ({}, {}, {}), brute force ({}, {}, {}) on rows {rows:?} labels {labels:?}",
                g.feature, g.threshold, g.criterion_value, w.feature, w.threshold, w.value)
            },
        ),
        (g, w) => Err(format!(
            "{criterion:?}: got {g:?}, brute force {w:?} on rows {rows:?} labels {labels:?}"
        )),
    }
}

/// Random small datasets on a quarter-step grid, so every midpoint is exact.
/// Checks the root split directly and every internal node of a full tree.
pub fn criterion_oracle(cases: usize, seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let criteria = [Criterion::InfoGain, Criterion::GainRatio, Criterion::Gini];
    let algorithms = [Algorithm::Id3, Algorithm::C45, Algorithm::Cart];
    let mut nodes_checked = 0;
    for case in 0..cases {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(1..=3);
        let k = rng.random_range(2..=3);
        let grid = rng.random_range(2..=13);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| rng.random_range(0..grid) as f64 * 0.25)
                    .collect()
            })
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
        let min_leaf = if case % 5 == 4 { 2 } else { 1 };
        let features = feature_matrix(&rows);
        let ids = doc_ids(n);
        let data = TrainingData::new(&features, &labels, &ids, k).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..n).collect();
        let allowed: Vec<usize> = (0..m).collect();
        let criterion = criteria[case % 3];
        let got =
            best_split(&data, &all, &allowed, criterion, min_leaf).map_err(|e| e.to_string())?;
        compare_split(&rows, &labels, k, criterion, min_leaf, got)?;
        nodes_checked += 1;

        let mut config = TreeConfig::new(algorithms[case % 3]);
        config.min_samples_leaf = min_leaf;
        let tree = build_tree(&data, &config).map_err(|e| e.to_string())?;
        for node in &tree.nodes {
            let idx: Vec<usize> = node
                .routed
                .iter()
                .map(|id| id[1..].parse().expect("row id"))
                .collect();
            let sub_rows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
            let sub_labels: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
            let split = match &node.kind {
                NodeKind::Internal { split, .. } => Some(*split),
                NodeKind::Leaf => None,
            };
            // A leaf may also be forced by the sample-count rule.
            if split.is_none() && node.routed.len() < 2 * min_leaf {
                continue;
            }
            compare_split(&sub_rows, &sub_labels, k, criterion, min_leaf, split)?;
            nodes_checked += 1;
        }
    }
    within(start, Duration::from_secs(30), "criterion fuzz")?;
    Ok(format!(
        "{cases} datasets, {nodes_checked} nodes matched brute force in {:.2?}",
        start.elapsed()
    ))
}

pub fn closed_forms() -> Outcome {
    let e = entropy(&[5, 5]).map_err(|e| e.to_string())?;
    let g = gini_impurity(&[5, 5]).map_err(|e| e.to_string())?;
    let s = split_info(10, &[5, 5]).map_err(|e| e.to_string())?;
    let ig = information_gain(&[2, 2], &[vec![2, 0], vec![0, 2]]).map_err(|e| e.to_string())?;
    ensure(e == 1.0 && g == 0.5 && s == 1.0 && ig == 1.0, || {
        format!("entropy {e}, gini {g}, split_info {s}, information gain {ig}")
    })?;
    Ok("entropy([5,5])=1, gini([5,5])=0.5, split_info(even)=1, IG(perfect [2,2])=1".into())
}

/// Columns driven by a few shared latent factors plus noise.
fn latent_columns(rng: &mut ChaCha8Rng, n: usize, d: usize, factors: usize) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z: Vec<Vec<f64>> = (0..factors)
        .map(|_| (0..n).map(|_| normal.sample(rng)).collect())
        .collect();
    (0..d)
        .map(|_| {
            let w: Vec<f64> = (0..factors).map(|_| normal.sample(rng)).collect();
            let noise = rng.random_range(0.1..1.5);
            (0..n)
                .map(|a| {
                    (0..factors).map(|f| w[f] * z[f][a]).sum::<f64>() + noise * normal.sample(rng)
                })
                .collect()
        })
        .collect()
}

pub fn pearson_invariants(matrices: usize, seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters_seen = 0;
    for case in 0..matrices {
        let factors = rng.random_range(2..=6);
        let cols = latent_columns(&mut rng, 50, 30, factors);
        let r = pearson_matrix(&cols).map_err(|e| e.to_string())?;
        for i in 0..30 {
            for j in 0..30 {
                let want = if i == j {
                    1.0
                } else {
                    pearson(&cols[i], &cols[j])
                };
                ensure((r.get(i, j) - want).abs() <= 1e-12, || {
                    format!(
                        "matrix {case}: r[{i}][{j}] = {} but textbook value {want}",
                        r.get(i, j)
                    )
                })?;
            }
        }
        for v in [0.9, 0.95] {
            let t = percentile_threshold(&r, v).map_err(|e| e.to_string())?;
            let mut upper = Vec::new();
            for i in 0..30 {
                for j in i + 1..30 {
                    upper.push(r.get(i, j));
                }
            }
            upper.sort_by(f64::total_cmp);
            let pos = v * (upper.len() - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
            let want_t = upper[lo] + frac * (upper[(lo + 1).min(upper.len() - 1)] - upper[lo]);
            ensure((t - want_t).abs() <= 1e-12, || {
                format!("matrix {case} v={v}: threshold {t}, expected {want_t}")
            })?;

            let a = pearson_reduce(&cols, v).map_err(|e| e.to_string())?;
            let again = pearson_reduce(&cols, v).map_err(|e| e.to_string())?;
            ensure(a == again, || {
                format!("matrix {case} v={v}: clustering not deterministic")
            })?;
            ensure(a.assign.len() == 30, || {
                format!("matrix {case}: {} assignments", a.assign.len())
            })?;
            let ClusterCenters::Columns(centers) = &a.centers else {
                return Err("pearson clustering must record centre columns".into());
            };
            ensure(centers.len() == a.m, || "one centre per cluster".into())?;
            let members = a.members();
            for (c, group) in members.iter().enumerate() {
                ensure(!group.is_empty(), || {
                    format!("matrix {case}: cluster {c} empty")
                })?;
                let center = centers[c];
                ensure(a.assign[center] as usize == c, || {
                    format!("matrix {case}: centre {center} not in cluster {c}")
                })?;
                for &j in group {
                    if j != center {
                        ensure(r.get(center, j) > t, || {
                            format!("matrix {case} v={v}: member {j} has r={} ≤ t={t} with centre {center}", r.get(center, j))
                        })?;
                    }
                }
            }
            let total: usize = members.iter().map(Vec::len).sum();
            ensure(total == 30, || {
                format!("matrix {case}: clusters cover {total} columns")
            })?;
            clusters_seen += a.m;
        }
    }
    within(start, Duration::from_secs(10), "pearson invariants")?;
    Ok(format!(
        "{matrices} matrices x 2 percentiles, {clusters_seen} clusters checked in {:.2?}",
        start.elapsed()
    ))
}

pub fn kmeans_properties(runs: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0;
    for run in 0..runs {
        let d = rng.random_range(8..=40);
        let (n, factors) = (rng.random_range(10..=40), rng.random_range(1..=4));
        let cols = latent_columns(&mut rng, n, d, factors);
        let clusters = rng.random_range(2..=d.min(10));
        let a = kmeans_cluster(&cols, &KMeansConfig::new(clusters, run as u64))
            .map_err(|e| e.to_string())?;
        let trace = a
            .objective_trace()
            .ok_or("k-means must record its objective")?;
        for w in trace.windows(2) {
            ensure(w[1] <= w[0] + 1e-9, || {
                format!("run {run}: objective rose from {} to {}", w[0], w[1])
            })?;
        }
        let members = a.members();
        let final_sse = partition_sse(&cols, &members);
        let last = *trace.last().expect("non-empty trace");
        ensure((final_sse - last).abs() <= 1e-9 * (1.0 + last), || {
            format!("run {run}: reported objective {last}, recomputed {final_sse}")
        })?;
        iterations += trace.len() - 1;
    }

    // Six columns in two well separated groups of random sizes.
    let normal = Normal::new(0.0, 0.05).expect("sd");
    for case in 0..10u64 {
        let mut crng = ChaCha8Rng::seed_from_u64(seed ^ (case + 1));
        let a_size = crng.random_range(1..=5);
        let mut order: Vec<usize> = (0..6).collect();
        order.shuffle(&mut crng);
        let base_a: Vec<f64> = (0..8).map(|_| crng.random_range(-1.0..1.0)).collect();
        let base_b: Vec<f64> = base_a.iter().map(|v| v + 10.0).collect();
        let mut cols = vec![Vec::new(); 6];
        for (rank, &c) in order.iter().enumerate() {
            let base = if rank < a_size { &base_a } else { &base_b };
            cols[c] = base.iter().map(|v| v + normal.sample(&mut crng)).collect();
        }
        let (best, best_sse) = brute_two_partition(&cols);
        let a = kmeans_cluster(&cols, &KMeansConfig::new(2, case)).map_err(|e| e.to_string())?;
        let got = a.members();
        let got_sse = partition_sse(&cols, &got);
        ensure(got == best, || {
            format!("case {case}: k-means gave {got:?} (sse {got_sse}), optimum {best:?} (sse {best_sse})")
        })?;
    }
    Ok(format!("{runs} runs non-increasing ({iterations} iterations); 10/10 optimal 2-partitions of 6 columns"))
}

fn random_cnn(rng: &mut ChaCha8Rng) -> (CnnConfig, usize) {
    loop {
        let d_in = rng.random_range(6..=24);
        let conv = |rng: &mut ChaCha8Rng| ConvSpec {
            kernel: rng.random_range(1..=3),
            stride: rng.random_range(1..=2),
            padding: rng.random_range(0..=1),
        };
        let pool = |rng: &mut ChaCha8Rng| PoolSpec {
            kernel: rng.random_range(1..=2),
            stride: rng.random_range(1..=2),
        };
        let mut c = CnnConfig {
            conv1: conv(rng),
            pool1: pool(rng),
            conv2: conv(rng),
            pool2: pool(rng),
            m_target: 1,
            learning_rate: 1e-3,
            epochs: 1,
            batch_size: 4,
            seed: 0,
        };
        if let Ok(dims) = c.layer_dims(d_in) {
            c.m_target = dims[3];
            return (c, d_in);
        }
    }
}

/// Finite differences are only meaningful where no ReLU gate or pooling
/// winner changes between the two probe points.
pub fn cnn_gradient_check(configs: usize, seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for case in 0..configs {
        let (config, d_in) = random_cnn(&mut rng);
        let k = rng.random_range(2..=3);
        let net = CnnNetwork::new(&config, d_in, k).map_err(|e| e.to_string())?;
        let mut params: Vec<f64> = net
            .init_params(&mut rng)
            .into_iter()
            .map(f64::from)
            .collect();
        for p in params.iter_mut() {
            *p += 0.1 * normal.sample(&mut rng);
        }
        let batch = rng.random_range(2..=5);
        let rows: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..d_in).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let inputs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let labels: Vec<u32> = (0..batch).map(|_| rng.random_range(0..k) as u32).collect();
        let (_, analytic) = net.loss_and_gradient(&params, &inputs, &labels);
        let numeric = central_differences(|p| net.loss(p, &inputs, &labels), &params, h);
        let pattern = |p: &[f64]| -> Vec<(Vec<bool>, Vec<usize>)> {
            inputs
                .iter()
                .map(|x| net.activation_pattern(p, x))
                .collect()
        };
        let mut probe = params.clone();
        for i in 0..params.len() {
            probe[i] = params[i] + h;
            let up = pattern(&probe);
            probe[i] = params[i] - h;
            let down = pattern(&probe);
            probe[i] = params[i];
            if up != down {
                skipped += 1;
                continue;
            }
            let (a, n) = (analytic[i], numeric[i]);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
            ensure(rel < 1e-3, || {
                format!("config {case} ({config:?}, d_in {d_in}): parameter {i} analytic {a} numeric {n} rel {rel:e}")
            })?;
        }
    }
    Ok(format!(
        "{configs} configs, {checked} parameters, max relative error {worst:.2e} ({skipped} kink-crossing probes skipped) in {:.2?}",
        start.elapsed()
    ))
}

pub fn cnn_blobs(seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.5).expect("sd");
    let (n, d) = (64, 16);
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let values: Vec<f32> = labels
        .iter()
        .flat_map(|&y| {
            let mu = if y == 0 { -1.5 } else { 1.5 };
            (0..d)
                .map(|_| (mu + normal.sample(&mut rng)) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    let emb = EmbeddingMatrix::new(
        d,
        values,
        labels.clone(),
        vec!["a".into(), "b".into()],
        vec![SplitTag::Train; n],
    )
    .map_err(|e| e.to_string())?;
    let mut config = CnnConfig::standard(d, 2).map_err(|e| e.to_string())?;
    config.epochs = 200;
    config.seed = seed;
    let reducer = fit_reducer(&emb, &ReductionSpec::Cnn(config)).map_err(|e| e.to_string())?;
    let Reducer::Cnn(model) = &reducer else {
        unreachable!()
    };
    let mut correct = 0;
    for a in 0..n {
        if model.predict_class(emb.row(a)).map_err(|e| e.to_string())? == labels[a] {
            correct += 1;
        }
    }
    let acc = correct as f64 / n as f64;
    ensure(acc == 1.0, || {
        format!("train accuracy {acc} after 200 epochs")
    })?;
    within(start, Duration::from_secs(20), "blob training")?;
    Ok(format!(
        "separable blobs: train accuracy {acc} in {:.2?}",
        start.elapsed()
    ))
}

pub fn cnn_criterion(seed: u64) -> Outcome {
    let a = cnn_gradient_check(20, seed)?;
    let b = cnn_blobs(seed)?;
    Ok(format!("{a}; {b}"))
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', 'é', 'ß', 'k', 'ü', 'x', '1', '2'];
    let len = rng.random_range(1..=4);
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect()
}

pub fn tfidf_oracle(corpora: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const SEPARATORS: &[&str] = &[" ", ", ", ". ", "-", " (", ") ", "\n", "'"];
    let mut compared = 0;
    for case in 0..corpora {
        let vocab: Vec<String> = (0..rng.random_range(3..=40))
            .map(|_| random_word(&mut rng))
            .collect();
        let stopwords: BTreeSet<String> = vocab
            .iter()
            .filter(|_| rng.random_bool(0.15))
            .map(|w| w.to_lowercase())
            .collect();
        let n_docs = rng.random_range(1..=50);
        let docs: Vec<String> = (0..n_docs)
            .map(|_| {
                let mut s = String::new();
                for _ in 0..rng.random_range(0..=30) {
                    let w = &vocab[rng.random_range(0..vocab.len())];
                    if rng.random_bool(0.2) {
                        s.push_str(&w.to_uppercase());
                    } else {
                        s.push_str(w);
                    }
                    s.push_str(SEPARATORS[rng.random_range(0..SEPARATORS.len())]);
                }
                s
            })
            .collect();
        let mut node: Vec<usize> = (0..n_docs).filter(|_| rng.random_bool(0.4)).collect();
        if node.is_empty() {
            node.push(rng.random_range(0..n_docs));
        }
        let k = if case % 4 == 0 {
            100
        } else {
            rng.random_range(1..=30)
        };

        let stats = build_corpus_stats(docs.iter().map(String::as_str), &stopwords)
            .map_err(|e| e.to_string())?;
        let tokens: Vec<Vec<Token>> = docs
            .iter()
            .map(|d| tokenize_normalize(d, &stopwords))
            .collect();
        let routed: Vec<&[Token]> = node.iter().map(|&i| tokens[i].as_slice()).collect();
        let got = node_wordcloud(0, &routed, &stats, k).map_err(|e| e.to_string())?;
        let want = tfidf_ranking(&docs, &node, &stopwords, k);
        let got_words: Vec<&str> = got.entries.iter().map(|e| e.word.as_str()).collect();
        let want_words: Vec<&str> = want.iter().map(|w| w.0.as_str()).collect();
        ensure(got_words == want_words, || {
            format!("corpus {case}: ranking {got_words:?}, oracle {want_words:?}")
        })?;
        for (g, w) in got.entries.iter().zip(&want) {
            ensure((g.score - w.1).abs() <= 1e-12 * w.1.abs().max(1.0), || {
                format!(
                    "corpus {case}: score of {} is {}, oracle {}",
                    g.word, g.score, w.1
                )
            })?;
        }
        compared += want.len();
    }
    Ok(format!(
        "{corpora} corpora, {compared} ranked entries identical to brute force"
    ))
}

/// Builds every artifact in memory and wires them into an explainer.
pub fn explainer_for(
    bundle: &DatasetBundle,
    reducer: &Reducer,
    spec: &TrainSpec,
    top_k: usize,
) -> Result<Explainer, String> {
    let e = |e: embtree_core::Error| e.to_string();
    let emb = &bundle.embeddings;
    let features = reducer.transform(emb).map_err(e)?;
    let model = train_model(bundle, &features, spec).map_err(e)?;
    let metrics = split_metrics(&model, bundle, &features).map_err(e)?;
    let source = SourceInfo {
        n: emb.n(),
        d: emb.d(),
        k: emb.k(),
        embeddings_sha256: sha256_hex(&emb.to_binary()),
        features_file: None,
        features_sha256: None,
    };
    let artifact = ReductionArtifact::from_reducer(reducer, source);
    let reduction_sha256 = sha256_hex(&artifact.to_json_bytes());
    let file = ModelFile::from_model(
        &model,
        artifact.feature_names.clone(),
        emb.class_names().to_vec(),
        reduction_sha256.clone(),
        Some(metrics),
    );
    let model_sha256 = sha256_hex(&file.to_json_bytes());
    let prototypes = summarize(&model, bundle, top_k, model_sha256.clone()).map_err(e)?;
    let prototypes_sha256 = sha256_hex(&prototypes.to_json_bytes());
    Explainer::new(
        bundle.clone(),
        &artifact,
        file,
        prototypes,
        Provenance {
            reduction_sha256,
            model_sha256,
            prototypes_sha256,
        },
    )
    .map_err(e)
}

fn test_accuracy(
    bundle: &DatasetBundle,
    features: &FeatureMatrix,
    depth: u32,
) -> Result<f64, String> {
    let spec = TrainSpec::Tree(TreeConfig::new(Algorithm::Cart).with_max_depth(depth));
    let model = train_model(bundle, features, &spec).map_err(|e| e.to_string())?;
    let m = split_metrics(&model, bundle, features).map_err(|e| e.to_string())?;
    m.test
        .map(|t| t.accuracy)
        .ok_or_else(|| "no test split".into())
}

pub fn synthetic_pipeline(seed: u64) -> Outcome {
    let start = Instant::now();
    let data = generate(&SynthConfig::three_class(seed)).map_err(|e| e.to_string())?;
    let bundle = &data.bundle;
    ensure(
        bundle.corpus.len() == 600 && bundle.embeddings.d() == 64 && bundle.embeddings.k() == 3,
        || "generator shape is not 600 docs, d=64, 3 classes".into(),
    )?;
    let planted: BTreeSet<&str> = (0..3).flat_map(planted_words).collect();
    let mut details = Vec::new();
    for (name, spec) in [
        ("pearson(0.9)", ReductionSpec::Pearson { percentile: 0.9 }),
        (
            "kmeans(20)",
            ReductionSpec::Kmeans(KMeansConfig::new(20, seed)),
        ),
    ] {
        let reducer = fit_reducer(&bundle.embeddings, &spec).map_err(|e| e.to_string())?;
        let features = reducer
            .transform(&bundle.embeddings)
            .map_err(|e| e.to_string())?;
        let acc = test_accuracy(bundle, &features, 5)?;
        ensure(acc >= 0.95, || {
            format!("{name} + CART(depth 5): test accuracy {acc} < 0.95")
        })?;

        let tree = TrainSpec::Tree(TreeConfig::new(Algorithm::Cart).with_max_depth(5));
        let explainer = explainer_for(bundle, &reducer, &tree, 100)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs: Vec<&str> = bundle
            .corpus
            .documents
            .iter()
            .map(|d| d.doc_id.as_str())
            .collect();
        docs.shuffle(&mut rng);
        for id in docs.iter().take(20) {
            let local = explainer
                .local_doc(id, &Default::default(), None)
                .map_err(|e| e.to_string())?;
            let hit = local
                .path
                .iter()
                .flat_map(|s| &s.matches)
                .any(|m| m.kind == MatchKind::Exact && planted.contains(m.word.as_str()));
            ensure(hit, || {
                format!("{name}: explanation of {id} has no exact planted-word match")
            })?;
        }
        details.push(format!("{name} m={} test acc {acc:.4}", reducer.m()));
    }
    within(start, Duration::from_secs(60), "synthetic pipeline")?;
    Ok(format!(
        "{}; 20/20 explanations with planted exact matches; {:.2?}",
        details.join(", "),
        start.elapsed()
    ))
}

pub fn depth_sensitivity(seed: u64) -> Outcome {
    let reduce = |config: SynthConfig| -> Result<(DatasetBundle, FeatureMatrix), String> {
        let data = generate(&config).map_err(|e| e.to_string())?;
        let reducer = fit_reducer(
            &data.bundle.embeddings,
            &ReductionSpec::Pearson { percentile: 0.9 },
        )
        .map_err(|e| e.to_string())?;
        let features = reducer
            .transform(&data.bundle.embeddings)
            .map_err(|e| e.to_string())?;
        Ok((data.bundle, features))
    };
    let (binary, bf) = reduce(SynthConfig::binary(seed))?;
    let (b3, b15) = (
        test_accuracy(&binary, &bf, 3)?,
        test_accuracy(&binary, &bf, 15)?,
    );
    ensure((b3 - b15).abs() <= 0.02, || {
        format!("binary: depth 3 {b3}, depth 15 {b15}")
    })?;
    let (multi, mf) = reduce(SynthConfig::subclasses(seed, 20))?;
    let (m3, m10) = (
        test_accuracy(&multi, &mf, 3)?,
        test_accuracy(&multi, &mf, 10)?,
    );
    ensure(m10 - m3 >= 0.05, || {
        format!("20-subclass set: depth 3 {m3}, depth 10 {m10}")
    })?;
    Ok(format!(
        "binary depth3 {b3:.4} vs depth15 {b15:.4}; 20-subclass depth3 {m3:.4} vs depth10 {m10:.4}"
    ))
}

pub fn determinism_and_round_trip(seed: u64) -> Outcome {
    let e = |e: embtree_core::Error| e.to_string();
    let data = generate(&SynthConfig::three_class(seed)).map_err(e)?;
    let bundle = &data.bundle;
    let run = || -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
        let reducer = fit_reducer(
            &bundle.embeddings,
            &ReductionSpec::Kmeans(KMeansConfig::new(20, seed)),
        )
        .map_err(e)?;
        let spec = TrainSpec::Forest(ForestConfig {
            tree_count: 5,
            base: TreeConfig::new(Algorithm::Id3),
            subset_size: None,
            seed: 7,
        });
        let ex = explainer_for(bundle, &reducer, &spec, 100)?;
        let local = ex
            .local_doc("d0042", &Default::default(), Some(20))
            .map_err(e)?;
        let global = ex.global(&Default::default(), Some(20)).map_err(e)?;
        Ok((
            ex.model_file.to_json_bytes(),
            local.to_json_bytes(),
            global.to_json_bytes(),
        ))
    };
    let first = run()?;
    let second = run()?;
    ensure(first.0 == second.0, || {
        "model bytes differ between identical runs".into()
    })?;
    ensure(first.1 == second.1, || {
        "local explanation bytes differ".into()
    })?;
    ensure(first.2 == second.2, || {
        "global explanation bytes differ".into()
    })?;

    let file = ModelFile::from_json_bytes(&first.0).map_err(e)?;
    ensure(file.to_json_bytes() == first.0, || {
        "model JSON does not re-serialize identically".into()
    })?;
    let reloaded = file.to_model().map_err(e)?;
    // Rebuild the original in memory to compare predictions.
    let reducer = fit_reducer(
        &bundle.embeddings,
        &ReductionSpec::Kmeans(KMeansConfig::new(20, seed)),
    )
    .map_err(e)?;
    let features = reducer.transform(&bundle.embeddings).map_err(e)?;
    let original = train_model(
        bundle,
        &features,
        &TrainSpec::Forest(ForestConfig {
            tree_count: 5,
            base: TreeConfig::new(Algorithm::Id3),
            subset_size: None,
            seed: 7,
        }),
    )
    .map_err(e)?;
    let single = train_model(
        bundle,
        &features,
        &TrainSpec::Tree(TreeConfig::new(Algorithm::Cart)),
    )
    .map_err(e)?;
    let single_file = ModelFile::from_model(
        &single,
        features.feature_names().to_vec(),
        bundle.embeddings.class_names().to_vec(),
        String::new(),
        None,
    );
    let single_back = ModelFile::from_json_bytes(&single_file.to_json_bytes())
        .map_err(e)?
        .to_model()
        .map_err(e)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = features.m();
    let (lo, hi) = features
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    for i in 0..1000 {
        let row: Vec<f64> = if i % 2 == 0 {
            (0..m)
                .map(|_| rng.random_range(lo - 1.0..hi + 1.0))
                .collect()
        } else {
            features.row(rng.random_range(0..features.n())).to_vec()
        };
        for (a, b) in [(&original, &reloaded), (&single, &single_back)] {
            let pa = a.predict(&row).map_err(e)?;
            let pb = b.predict(&row).map_err(e)?;
            ensure(pa == pb, || {
                format!("row {i}: prediction {pa:?} before and {pb:?} after round trip")
            })?;
        }
    }
    Ok("identical model/local/global bytes across runs; 1000 rows predict identically after JSON round trip (tree and forest)".into())
}

/// Doc ids used to sample explanations, seeded.
pub fn sample_doc_ids(bundle: &DatasetBundle, count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = bundle
        .corpus
        .documents
        .iter()
        .map(|d| d.doc_id.clone())
        .collect();
    ids.shuffle(&mut rng);
    ids.truncate(count);
    ids
}
