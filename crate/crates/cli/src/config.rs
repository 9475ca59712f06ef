//! Optional TOML run configuration. Command-line flags take precedence over
//! file values, which take precedence over built-in defaults.

use std::path::{Path, PathBuf};

use embtree_core::prototypes::FilterSpec;
use embtree_core::reduction::ReductionMethod;
use embtree_core::tree::Algorithm;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub tree: TreeSection,
    #[serde(default)]
    pub prototypes: PrototypesConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub bundle: Option<PathBuf>,
    pub reduction: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub prototypes: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub method: Option<ReductionMethod>,
    pub percentile: Option<f64>,
    pub clusters: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub target_dim: Option<usize>,
    #[serde(default)]
    pub cnn: CnnSection,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
    pub padding: Option<usize>,
    pub pool_kernel: Option<usize>,
    pub pool_stride: Option<usize>,
    pub wide: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    pub algorithm: Option<Algorithm>,
    pub max_depth: Option<u32>,
    pub min_samples_leaf: Option<usize>,
    pub forest: Option<usize>,
    pub subset_size: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypesConfig {
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainConfig {
    pub filter: Option<FilterSpec>,
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub ui_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Usage(format!("invalid config: {msg}")));
        let r = &self.reduction;
        if let Some(v) = r.percentile {
            if !(v > 0.0 && v < 1.0) {
                return bad("reduction.percentile must be strictly between 0 and 1");
            }
        }
        if r.clusters == Some(0) || r.target_dim == Some(0) {
            return bad("reduction.clusters and reduction.target_dim must be positive");
        }
        if r.tol.is_some_and(|t| t.is_nan() || t < 0.0) {
            return bad("reduction.tol must be non-negative");
        }
        let c = &r.cnn;
        if c.batch_size == Some(0) || c.kernel == Some(0) || c.stride == Some(0) {
            return bad("cnn batch_size, kernel and stride must be positive");
        }
        if c.pool_kernel == Some(0) || c.pool_stride == Some(0) {
            return bad("cnn pool_kernel and pool_stride must be positive");
        }
        if c.learning_rate.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return bad("cnn learning_rate must be positive");
        }
        if self.tree.min_samples_leaf == Some(0) {
            return bad("tree.min_samples_leaf must be positive");
        }
        if self.tree.forest == Some(0) || self.tree.subset_size == Some(0) {
            return bad("tree.forest and tree.subset_size must be positive");
        }
        if self.prototypes.top_k == Some(0) {
            return bad("prototypes.top_k must be positive");
        }
        Ok(())
    }
}
