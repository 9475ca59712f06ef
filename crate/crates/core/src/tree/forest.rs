use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_tree, check_row, majority, DecisionTree, Prediction, TrainingData, TreeConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub base: TreeConfig,
    /// Features drawn per tree; `None` means `ceil(sqrt(m))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
    pub seed: u64,
}

/// Trees trained on random feature subsets; prediction by majority vote.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub feature_subsets: Vec<Vec<usize>>,
    pub config: ForestConfig,
}

pub fn default_subset_size(m: usize) -> usize {
    (m as f64).sqrt().ceil() as usize
}

/// Each tree draws its own feature subset from a ChaCha stream keyed by
/// `(seed, tree index)`, so trees can be built in parallel and the result
/// does not depend on scheduling.
pub fn build_forest(data: &TrainingData<'_>, config: &ForestConfig) -> Result<RandomForest> {
    if config.tree_count == 0 {
        return Err(Error::Config("tree_count must be at least 1".into()));
    }
    let m = data.features.m();
    let size = config.subset_size.unwrap_or_else(|| default_subset_size(m));
    if size == 0 || size > m {
        return Err(Error::Config(format!(
            "subset size {size} must lie in [1, {m}]"
        )));
    }
    let subsets: Vec<Vec<usize>> = (0..config.tree_count)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut subset = rand::seq::index::sample(&mut rng, m, size).into_vec();
            subset.sort_unstable();
            subset
        })
        .collect();
    let trees = subsets
        .par_iter()
        .map(|subset| {
            let tree_config = TreeConfig {
                allowed_features: Some(subset.clone()),
                ..config.base.clone()
            };
            build_tree(data, &tree_config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        trees,
        feature_subsets: subsets,
        config: config.clone(),
    })
}

impl RandomForest {
    /// Majority vote (lowest class on ties). The reported path comes from
    /// the lowest-index tree that agrees with the vote.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        check_row(row, self.trees[0].n_features)?;
        let votes: Vec<Prediction> = self.trees.iter().map(|t| t.route(row)).collect();
        let mut counts = vec![0usize; self.trees[0].n_classes];
        for v in &votes {
            counts[v.class as usize] += 1;
        }
        let class = majority(&counts);
        let (tree, agreeing) = votes
            .into_iter()
            .enumerate()
            .find(|(_, v)| v.class == class)
            .expect("winning class has at least one vote");
        Ok(Prediction {
            class,
            path: agreeing.path,
            tree,
        })
    }
}
