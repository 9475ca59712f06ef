use std::io::Write as _;
use std::path::{Path, PathBuf};

use embtree_core::explanation::{AdhocInput, Explainer};
use embtree_core::ingestion::{BundleManifest, DatasetBundle, EmbeddingFormat, SplitTag};
use embtree_core::pipeline::{split_metrics, train_model, TrainSpec};
use embtree_core::prototypes::{summarize, FilterSpec, DEFAULT_TOP_K};
use embtree_core::reduction::{
    fit_pool, read_features, write_features, CnnConfig, ConvSpec, FeatureMatrix, KMeansConfig,
    PoolSpec, ReductionArtifact, ReductionMethod, ReductionSpec, SourceInfo,
};
use embtree_core::synth::{generate, write_bundle, SynthConfig};
use embtree_core::tree::{
    Algorithm, ForestConfig, Metrics, ModelFile, TreeConfig, DEFAULT_MAX_DEPTH,
};
use embtree_core::{sha256_hex, Error};

use crate::args::*;
use crate::config::RunConfig;
use crate::{service, CliError};

pub const SEED_ENV: &str = "PEACH_SEED";

/// `PEACH_SEED` wins over the flag, which wins over the config file.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        _ => Ok(flag.or(config).unwrap_or(0)),
    }
}

fn require(
    flag: Option<PathBuf>,
    config: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "--{name} is required (or set paths.{name} in the config)"
        ))
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

/// Loads a bundle and hashes its embeddings file.
pub fn load_bundle(manifest: &Path) -> Result<(DatasetBundle, String), CliError> {
    let (m, base) = BundleManifest::read(manifest)?;
    let sha = sha256_hex(&read_file(&m.embeddings_path(&base))?);
    Ok((m.load(&base)?, sha))
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(p).map_err(|e| {
        Error::Io {
            path: p.to_path_buf(),
            source: e,
        }
        .into()
    })
}

pub fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    let manifest = BundleManifest {
        embeddings: absolute(&args.embeddings)?,
        embeddings_format: args.format.map(|f| match f {
            FormatArg::Binary => EmbeddingFormat::Binary,
            FormatArg::Csv => EmbeddingFormat::Csv,
        }),
        corpus: absolute(&args.corpus)?,
        annotations: args.annotations.as_deref().map(absolute).transpose()?,
        stopwords: args.stopwords.as_deref().map(absolute).transpose()?,
        lexicon: args.lexicon.as_deref().map(absolute).transpose()?,
        tagset: args.tagset.as_deref().map(absolute).transpose()?,
    };
    let bundle = manifest.load(Path::new(""))?;
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
    bytes.push(b'\n');
    write_file(&args.out, &bytes)?;
    let e = &bundle.embeddings;
    println!(
        "bundle: n={} d={} k={} train={} test={} annotations={} lexicon={} -> {}",
        e.n(),
        e.d(),
        e.k(),
        e.indices_of(SplitTag::Train).len(),
        e.indices_of(SplitTag::Test).len(),
        bundle.annotations.is_some(),
        bundle.lexicon.is_some(),
        args.out.display()
    );
    Ok(())
}

fn cnn_config(
    args: &ReduceArgs,
    cfg: &RunConfig,
    d_in: usize,
    seed: u64,
) -> Result<CnnConfig, CliError> {
    let c = &cfg.reduction.cnn;
    let m = args
        .target_dim
        .or(cfg.reduction.target_dim)
        .ok_or_else(|| CliError::Usage("--target-dim is required for the cnn method".into()))?;
    let conv = ConvSpec {
        kernel: args.kernel.or(c.kernel).unwrap_or(2),
        stride: args.stride.or(c.stride).unwrap_or(2),
        padding: args.padding.or(c.padding).unwrap_or(0),
    };
    let wide = args.wide || c.wide.unwrap_or(false);
    let pool1 = PoolSpec {
        kernel: 2,
        stride: if wide { 1 } else { 2 },
    };
    let pool2 = match (
        args.pool_kernel.or(c.pool_kernel),
        args.pool_stride.or(c.pool_stride),
    ) {
        (None, None) => {
            let dims = CnnConfig {
                conv1: conv,
                pool1,
                conv2: conv,
                pool2: PoolSpec {
                    kernel: 1,
                    stride: 1,
                },
                m_target: m,
                learning_rate: 1e-3,
                epochs: 0,
                batch_size: 1,
                seed,
            }
            .layer_dims(d_in)?;
            fit_pool(dims[2], m)?
        }
        (k, s) => PoolSpec {
            kernel: k.unwrap_or(2),
            stride: s.unwrap_or(2),
        },
    };
    let config = CnnConfig {
        conv1: conv,
        pool1,
        conv2: conv,
        pool2,
        m_target: m,
        learning_rate: args.learning_rate.or(c.learning_rate).unwrap_or(1e-3),
        epochs: args.epochs.or(c.epochs).unwrap_or(20),
        batch_size: args.batch_size.or(c.batch_size).unwrap_or(32),
        seed,
    };
    config.validate(d_in)?;
    Ok(config)
}

pub fn cmd_reduce(args: ReduceArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let bundle_path = require(args.bundle.bundle.clone(), &cfg.paths.bundle, "bundle")?;
    let method: ReductionMethod = args
        .method
        .map(Into::into)
        .or(cfg.reduction.method)
        .ok_or_else(|| CliError::Usage("--method is required".into()))?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let (bundle, emb_sha) = load_bundle(&bundle_path)?;
    let emb = &bundle.embeddings;
    let spec = match method {
        ReductionMethod::Pearson => {
            let percentile = args.percentile.or(cfg.reduction.percentile).unwrap_or(0.9);
            if !(percentile > 0.0 && percentile < 1.0) {
                return Err(CliError::Usage(
                    "--percentile must be strictly between 0 and 1".into(),
                ));
            }
            ReductionSpec::Pearson { percentile }
        }
        ReductionMethod::Kmeans => {
            let clusters = args.clusters.or(cfg.reduction.clusters).ok_or_else(|| {
                CliError::Usage("--clusters is required for the kmeans method".into())
            })?;
            let mut k = KMeansConfig::new(clusters, seed);
            if let Some(it) = args.max_iters.or(cfg.reduction.max_iters) {
                k.max_iters = it;
            }
            if let Some(t) = args.tol.or(cfg.reduction.tol) {
                k.tol = t;
            }
            ReductionSpec::Kmeans(k)
        }
        ReductionMethod::Cnn => ReductionSpec::Cnn(cnn_config(&args, cfg, emb.d(), seed)?),
    };
    let out = args
        .out
        .or_else(|| cfg.paths.reduction.clone())
        .unwrap_or_else(|| PathBuf::from("reduction.json"));
    let features_out = args
        .features_out
        .or_else(|| cfg.paths.features.clone())
        .unwrap_or_else(|| out.with_extension("features.bin"));

    log::info!("fitting {method} reduction on {} x {}", emb.n(), emb.d());
    let reducer = embtree_core::reduction::fit_reducer(emb, &spec)?;
    let features = reducer.transform(emb)?;
    let feature_bytes = write_features(&features);
    write_file(&features_out, &feature_bytes)?;
    let features_file = if features_out.parent() == out.parent() {
        features_out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
    } else {
        Some(absolute(&features_out)?.to_string_lossy().into_owned())
    };
    let source = SourceInfo {
        n: emb.n(),
        d: emb.d(),
        k: emb.k(),
        embeddings_sha256: emb_sha,
        features_file,
        features_sha256: Some(sha256_hex(&feature_bytes)),
    };
    let artifact = ReductionArtifact::from_reducer(&reducer, source);
    write_file(&out, &artifact.to_json_bytes())?;
    println!(
        "method {method}: d={} -> m={} ({} documents) -> {}",
        emb.d(),
        reducer.m(),
        emb.n(),
        out.display()
    );
    Ok(())
}

/// Feature rows for a reduction artifact, read from its feature file when
/// present and recomputed otherwise.
pub fn load_features(
    artifact: &ReductionArtifact,
    artifact_path: &Path,
    bundle: &DatasetBundle,
) -> Result<FeatureMatrix, CliError> {
    if let (Some(file), Some(sha)) = (
        &artifact.source.features_file,
        &artifact.source.features_sha256,
    ) {
        let p = Path::new(file);
        let p = if p.is_absolute() {
            p.to_path_buf()
        } else {
            artifact_path.parent().unwrap_or(Path::new("")).join(p)
        };
        if p.exists() {
            let bytes = read_file(&p)?;
            if &sha256_hex(&bytes) != sha {
                return Err(Error::Config(format!(
                    "feature file {} does not match the reduction artifact",
                    p.display()
                ))
                .into());
            }
            let f = read_features(&bytes, artifact.feature_names.clone())?;
            if f.n() != bundle.embeddings.n() {
                return Err(
                    Error::Config("feature file row count differs from the bundle".into()).into(),
                );
            }
            return Ok(f);
        }
        log::warn!("feature file {} missing; recomputing", p.display());
    }
    Ok(artifact.to_reducer()?.transform(&bundle.embeddings)?)
}

fn metrics_line(name: &str, m: &Metrics) -> String {
    format!(
        "{name}: accuracy {:.4} macro-F1 {:.4}",
        m.accuracy, m.macro_f1
    )
}

pub fn cmd_train(args: TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let bundle_path = require(args.bundle.bundle.clone(), &cfg.paths.bundle, "bundle")?;
    let reduction_path = require(args.reduction.clone(), &cfg.paths.reduction, "reduction")?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let t = &cfg.tree;
    let algorithm: Algorithm = args
        .algorithm
        .map(Into::into)
        .or(t.algorithm)
        .unwrap_or(Algorithm::Cart);
    let base = TreeConfig {
        algorithm,
        max_depth: args.max_depth.or(t.max_depth).unwrap_or(DEFAULT_MAX_DEPTH),
        min_samples_leaf: args.min_samples_leaf.or(t.min_samples_leaf).unwrap_or(1),
        allowed_features: None,
    };
    if base.min_samples_leaf == 0 {
        return Err(CliError::Usage(
            "--min-samples-leaf must be positive".into(),
        ));
    }
    let spec = match args.forest.or(t.forest) {
        None => TrainSpec::Tree(base),
        Some(0) => return Err(CliError::Usage("--forest must be positive".into())),
        Some(n) => TrainSpec::Forest(ForestConfig {
            tree_count: n,
            base,
            subset_size: args.subset_size.or(t.subset_size),
            seed,
        }),
    };
    let out = args
        .out
        .or_else(|| cfg.paths.model.clone())
        .unwrap_or_else(|| PathBuf::from("model.json"));

    let (bundle, emb_sha) = load_bundle(&bundle_path)?;
    let (artifact, reduction_sha) = ReductionArtifact::read(&reduction_path)?;
    if artifact.source.embeddings_sha256 != emb_sha {
        return Err(Error::Config(format!(
            "reduction {} was fitted on different embeddings than bundle {}",
            reduction_path.display(),
            bundle_path.display()
        ))
        .into());
    }
    let features = load_features(&artifact, &reduction_path, &bundle)?;
    let model = train_model(&bundle, &features, &spec)?;
    let metrics = split_metrics(&model, &bundle, &features)?;
    let file = ModelFile::from_model(
        &model,
        artifact.feature_names.clone(),
        bundle.embeddings.class_names().to_vec(),
        reduction_sha,
        Some(metrics.clone()),
    );
    write_file(&out, &file.to_json_bytes())?;
    let depth = model.trees().iter().map(|t| t.depth()).max().unwrap_or(0);
    let rules: usize = model.trees().iter().map(|t| t.rule_count()).sum();
    println!(
        "{} {}: {} tree(s), depth {depth}, {rules} rules -> {}",
        algorithm,
        if model.trees().len() > 1 {
            "forest"
        } else {
            "tree"
        },
        model.trees().len(),
        out.display()
    );
    println!("{}", metrics_line("train", &metrics.train));
    if let Some(test) = &metrics.test {
        println!("{}", metrics_line("test", test));
    }
    Ok(())
}

pub fn cmd_summarize(args: SummarizeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let bundle_path = require(args.bundle.bundle.clone(), &cfg.paths.bundle, "bundle")?;
    let model_path = require(args.model.clone(), &cfg.paths.model, "model")?;
    let top_k = args.topk.or(cfg.prototypes.top_k).unwrap_or(DEFAULT_TOP_K);
    if top_k == 0 {
        return Err(CliError::Usage("--topk must be positive".into()));
    }
    let out = args
        .out
        .or_else(|| cfg.paths.prototypes.clone())
        .unwrap_or_else(|| PathBuf::from("prototypes.json"));
    let (bundle, _) = load_bundle(&bundle_path)?;
    let (file, model_sha) = ModelFile::read(&model_path)?;
    if file.class_names != bundle.embeddings.class_names() {
        return Err(Error::Config("model class names differ from the bundle".into()).into());
    }
    let model = file.to_model()?;
    let artifact = summarize(&model, &bundle, top_k, model_sha)?;
    write_file(&out, &artifact.to_json_bytes())?;
    let nodes: usize = artifact.trees.iter().map(|t| t.nodes.len()).sum();
    println!(
        "prototypes: {nodes} nodes, top {top_k} words, {} train documents, vocabulary {} -> {}",
        artifact.stats.n_docs,
        artifact.stats.vocabulary_size,
        out.display()
    );
    Ok(())
}

pub fn load_explainer(a: &ArtifactArgs, cfg: &RunConfig) -> Result<Explainer, CliError> {
    let bundle = require(a.bundle.bundle.clone(), &cfg.paths.bundle, "bundle")?;
    let reduction = require(a.reduction.clone(), &cfg.paths.reduction, "reduction")?;
    let model = require(a.model.clone(), &cfg.paths.model, "model")?;
    let prototypes = require(a.prototypes.clone(), &cfg.paths.prototypes, "prototypes")?;
    Ok(Explainer::load(&bundle, &reduction, &model, &prototypes)?)
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|e| CliError::Other(format!("cannot write to stdout: {e}")))
        }
    }
}

fn parse_embedding_file(path: &Path) -> Result<Vec<f32>, CliError> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::Core(Error::Format(format!("{} is not UTF-8", path.display()))))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f32>().map_err(|_| {
                CliError::Core(Error::Format(format!(
                    "bad float {s:?} in {}",
                    path.display()
                )))
            })
        })
        .collect()
}

pub fn cmd_explain(args: ExplainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let filter = args
        .filter
        .clone()
        .or_else(|| cfg.explain.filter.clone())
        .unwrap_or(FilterSpec::None);
    let top_k = args.topk.or(cfg.explain.top_k);
    let explainer = load_explainer(&args.artifacts, cfg)?;
    let bytes = if args.global {
        explainer.global(&filter, top_k)?.to_json_bytes()
    } else if let Some(id) = &args.doc_id {
        explainer.local_doc(id, &filter, top_k)?.to_json_bytes()
    } else {
        let embedding = match (&args.embedding, &args.embedding_file) {
            (Some(e), _) => Some(e.clone()),
            (None, Some(p)) => Some(parse_embedding_file(p)?),
            (None, None) => None,
        };
        let input = AdhocInput {
            text: args.text.clone().unwrap_or_default(),
            embedding,
            features: args.features.clone(),
        };
        explainer
            .local_adhoc(&input, &filter, top_k)?
            .to_json_bytes()
    };
    emit(&bytes, args.out.as_deref())
}

pub fn cmd_export(args: ExportArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let filter = args
        .filter
        .clone()
        .or_else(|| cfg.explain.filter.clone())
        .unwrap_or(FilterSpec::None);
    let top_k = args.topk.or(cfg.explain.top_k);
    let explainer = load_explainer(&args.artifacts, cfg)?;
    let global = explainer.global(&filter, top_k)?;
    let bytes = match args.format {
        ExportFormat::Json => global.to_json_bytes(),
        ExportFormat::Dot => global.to_dot(5).into_bytes(),
    };
    emit(&bytes, args.out.as_deref())
}

pub fn cmd_serve(args: ServeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let explainer = load_explainer(&args.artifacts, cfg)?;
    let host = args
        .host
        .or_else(|| cfg.serve.host.clone())
        .unwrap_or_else(|| "127.0.0.1".into());
    let port = args.port.or(cfg.serve.port).unwrap_or(8080);
    let ui_dir = args.ui_dir.or_else(|| cfg.serve.ui_dir.clone());
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Other(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::Other(format!("cannot bind {host}:{port}: {e}")))?;
        println!(
            "serving on http://{}",
            listener
                .local_addr()
                .map(|a| a.to_string())
                .unwrap_or_default()
        );
        service::serve(
            listener,
            service::AppState::new(explainer),
            ui_dir.as_deref(),
        )
        .await
        .map_err(|e| CliError::Other(format!("server error: {e}")))
    })
}

pub fn cmd_synth(args: SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let mut config = match args.kind {
        SynthKind::ThreeClass => SynthConfig::three_class(seed),
        SynthKind::Binary => SynthConfig::binary(seed),
        SynthKind::Subclasses => SynthConfig::subclasses(seed, args.subclasses),
    };
    if let Some(n) = args.docs {
        config.n_docs = n;
    }
    let data = generate(&config)?;
    let manifest = write_bundle(&data.bundle, &args.out)?;
    println!(
        "synthetic bundle: {} documents, d={}, k={} -> {}",
        data.bundle.corpus.len(),
        config.d,
        config.n_classes,
        manifest.display()
    );
    Ok(())
}
