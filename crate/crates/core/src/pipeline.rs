//! Glue between stages: training on the train split and scoring both splits.

use crate::error::Result;
use crate::ingestion::{DatasetBundle, SplitTag};
use crate::reduction::FeatureMatrix;
use crate::tree::{
    build_forest, build_tree, evaluate, ForestConfig, Model, ModelMetrics, TrainingData, TreeConfig,
};

#[derive(Clone, Debug, PartialEq)]
pub enum TrainSpec {
    Tree(TreeConfig),
    Forest(ForestConfig),
}

/// Fits a tree or forest on the train rows of `features`, which must be
/// aligned with the bundle's documents.
pub fn train_model(
    bundle: &DatasetBundle,
    features: &FeatureMatrix,
    spec: &TrainSpec,
) -> Result<Model> {
    let train = bundle.embeddings.indices_of(SplitTag::Train);
    let x = features.select_rows(&train);
    let labels: Vec<u32> = train
        .iter()
        .map(|&i| bundle.embeddings.labels()[i])
        .collect();
    let ids: Vec<String> = train
        .iter()
        .map(|&i| bundle.corpus.documents[i].doc_id.clone())
        .collect();
    let data = TrainingData::new(&x, &labels, &ids, bundle.embeddings.k())?;
    Ok(match spec {
        TrainSpec::Tree(c) => Model::Tree(build_tree(&data, c)?),
        TrainSpec::Forest(c) => Model::Forest(build_forest(&data, c)?),
    })
}

pub fn split_metrics(
    model: &Model,
    bundle: &DatasetBundle,
    features: &FeatureMatrix,
) -> Result<ModelMetrics> {
    let score = |tag| -> Result<Option<crate::tree::Metrics>> {
        let rows = bundle.embeddings.indices_of(tag);
        if rows.is_empty() {
            return Ok(None);
        }
        let labels: Vec<u32> = rows
            .iter()
            .map(|&i| bundle.embeddings.labels()[i])
            .collect();
        evaluate(model, &features.select_rows(&rows), &labels).map(Some)
    };
    Ok(ModelMetrics {
        train: score(SplitTag::Train)?.expect("bundle validation guarantees train rows"),
        test: score(SplitTag::Test)?,
    })
}
