use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::reduction::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

/// Accuracy and macro-averaged F1 over all model classes. A class with no
/// true positives (including one never predicted) scores F1 = 0.
pub fn evaluate(model: &Model, features: &FeatureMatrix, labels: &[u32]) -> Result<Metrics> {
    if features.n() == 0 {
        return Err(Error::value("cannot evaluate on an empty test set"));
    }
    if labels.len() != features.n() {
        return Err(Error::value(format!(
            "{} rows but {} labels",
            features.n(),
            labels.len()
        )));
    }
    let predictions = (0..features.n())
        .map(|a| model.predict(features.row(a)).map(|p| p.class))
        .collect::<Result<Vec<_>>>()?;
    Ok(score(&predictions, labels, model.n_classes()))
}

pub(crate) fn score(predictions: &[u32], labels: &[u32], k: usize) -> Metrics {
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    let mut correct = 0;
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            correct += 1;
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[y as usize] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..k)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    Metrics {
        accuracy: correct as f64 / labels.len() as f64,
        macro_f1: per_class_f1.iter().sum::<f64>() / k as f64,
        per_class_f1,
    }
}
