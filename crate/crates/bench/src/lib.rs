//! Seeded inputs shared by the benchmarks.

use embtree_core::pipeline::{train_model, TrainSpec};
use embtree_core::reduction::{fit_reducer, FeatureMatrix, ReductionSpec};
use embtree_core::synth::{generate, SynthConfig, SynthDataset};
use embtree_core::tree::{Algorithm, Model, TreeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `d` columns of `n` values, each column a noisy copy of one of `groups`
/// latent signals so that correlation clustering has structure to find.
pub fn grouped_columns(n: usize, d: usize, groups: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent: Vec<Vec<f64>> = (0..groups)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..d)
        .map(|j| {
            latent[j % groups]
                .iter()
                .map(|v| v + 0.3 * rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

/// The three-class synthetic bundle with pearson features and a depth-5 CART
/// tree fitted to it.
pub struct Trained {
    pub data: SynthDataset,
    pub features: FeatureMatrix,
    pub model: Model,
}

pub fn trained(seed: u64) -> Trained {
    let data = generate(&SynthConfig::three_class(seed)).expect("synthetic bundle");
    let reducer = fit_reducer(
        &data.bundle.embeddings,
        &ReductionSpec::Pearson { percentile: 0.9 },
    )
    .expect("reducer");
    let features = reducer
        .transform(&data.bundle.embeddings)
        .expect("features");
    let spec = TrainSpec::Tree(TreeConfig::new(Algorithm::Cart).with_max_depth(5));
    let model = train_model(&data.bundle, &features, &spec).expect("model");
    Trained {
        data,
        features,
        model,
    }
}
