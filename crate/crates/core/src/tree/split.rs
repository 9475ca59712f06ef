use serde::{Deserialize, Serialize};

use super::criteria::{entropy_of, gini_of, split_info_of};
use super::TrainingData;
use crate::error::{Error, Result};

/// Improvements at or below this margin count as no improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

/// Candidates whose criterion values differ by at most this much are tied;
/// the earlier (lower feature, then lower threshold) one is kept.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Above this many distinct values a feature is searched at a fixed number
/// of evenly spaced gaps instead of every gap.
pub const MAX_EXACT_CANDIDATES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    InfoGain,
    GainRatio,
    Gini,
}

impl Criterion {
    fn maximise(self) -> bool {
        !matches!(self, Criterion::Gini)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Information gain, gain ratio, or weighted child Gini.
    pub criterion_value: f64,
    pub criterion: Criterion,
}

/// Threshold halfway between two consecutive distinct values, kept strictly
/// below the upper value so `≤` routing separates them.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Gap indices to evaluate between `distinct` sorted distinct values: all
/// gaps, or `MAX_EXACT_CANDIDATES` evenly spaced ones when there are more.
pub fn candidate_gaps(distinct: usize) -> Vec<usize> {
    if distinct < 2 {
        return Vec::new();
    }
    let gaps = distinct - 1;
    if distinct <= MAX_EXACT_CANDIDATES {
        return (0..gaps).collect();
    }
    let slots = MAX_EXACT_CANDIDATES + 1;
    let mut out: Vec<usize> = (1..=MAX_EXACT_CANDIDATES)
        .map(|j| j * gaps / slots)
        .collect();
    out.dedup();
    out
}

pub(crate) fn class_counts(data: &TrainingData<'_>, samples: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; data.n_classes];
    for &s in samples {
        counts[data.labels[s] as usize] += 1;
    }
    counts
}

/// Exhaustive threshold search over `allowed_features` for the node holding
/// `samples`.
///
/// Returns the best split under `criterion`, breaking ties by lowest feature
/// index and then lowest threshold, or `None` when no split improves on
/// leaving the node as a leaf.
pub fn best_split(
    data: &TrainingData<'_>,
    samples: &[usize],
    allowed_features: &[usize],
    criterion: Criterion,
    min_samples_leaf: usize,
) -> Result<Option<Split>> {
    if allowed_features.is_empty() {
        return Err(Error::value(
            "best_split needs at least one allowed feature",
        ));
    }
    if let Some(&bad) = allowed_features.iter().find(|&&f| f >= data.features.m()) {
        return Err(Error::value(format!(
            "feature {bad} outside [0, {})",
            data.features.m()
        )));
    }
    let n = samples.len();
    let parent = class_counts(data, samples);
    if n < 2 || parent.iter().filter(|&&c| c > 0).count() < 2 {
        return Ok(None);
    }
    let parent_entropy = entropy_of(&parent, n);
    let parent_gini = gini_of(&parent, n);
    let min_leaf = min_samples_leaf.max(1);

    let mut features = allowed_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(n);
    let mut distinct: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; data.n_classes];
    let mut right = vec![0usize; data.n_classes];

    for &feature in &features {
        pairs.clear();
        pairs.extend(
            samples
                .iter()
                .map(|&s| (data.features.get(s, feature), data.labels[s])),
        );
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // distinct values with the number of samples at or below each
        distinct.clear();
        for (i, (v, _)) in pairs.iter().enumerate() {
            match distinct.last_mut() {
                Some((last, upto)) if *last == *v => *upto = i + 1,
                _ => distinct.push((*v, i + 1)),
            }
        }

        let mut consumed = 0;
        left.iter_mut().for_each(|c| *c = 0);
        for gap in candidate_gaps(distinct.len()) {
            let (lo, n_left) = distinct[gap];
            let hi = distinct[gap + 1].0;
            for &(_, label) in &pairs[consumed..n_left] {
                left[label as usize] += 1;
            }
            consumed = n_left;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            for (r, (p, l)) in right.iter_mut().zip(parent.iter().zip(&left)) {
                *r = p - l;
            }

            let value = match criterion {
                Criterion::InfoGain | Criterion::GainRatio => {
                    let weighted = n_left as f64 / n as f64 * entropy_of(&left, n_left)
                        + n_right as f64 / n as f64 * entropy_of(&right, n_right);
                    let ig = parent_entropy - weighted;
                    if ig <= MIN_IMPROVEMENT {
                        continue;
                    }
                    if criterion == Criterion::InfoGain {
                        ig
                    } else {
                        let si = split_info_of(&[n_left, n_right], n);
                        if si > 0.0 {
                            ig / si
                        } else {
                            continue;
                        }
                    }
                }
                Criterion::Gini => {
                    let weighted = n_left as f64 / n as f64 * gini_of(&left, n_left)
                        + n_right as f64 / n as f64 * gini_of(&right, n_right);
                    if parent_gini - weighted <= MIN_IMPROVEMENT {
                        continue;
                    }
                    weighted
                }
            };

            let better = match &best {
                None => true,
                Some(b) if criterion.maximise() => value > b.criterion_value + TIE_TOLERANCE,
                Some(b) => value < b.criterion_value - TIE_TOLERANCE,
            };
            if better {
                best = Some(Split {
                    feature,
                    threshold: midpoint(lo, hi),
                    criterion_value: value,
                    criterion,
                });
            }
        }
    }
    Ok(best)
}
