//! Reference implementations written directly from the textbook formulas.
//! They share no code with the library and favour clarity over speed.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use embtree_core::tree::Criterion;

pub const EPS: f64 = 1e-12;

pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

pub fn gini(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    1.0 - counts
        .iter()
        .map(|&c| (c as f64 / total as f64).powi(2))
        .sum::<f64>()
}

pub fn split_info(sizes: &[usize]) -> f64 {
    entropy(sizes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    pub threshold: f64,
    pub value: f64,
}

fn counts_of(labels: &[u32], idx: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &i in idx {
        c[labels[i] as usize] += 1;
    }
    c
}

/// Every midpoint of every feature, scored from scratch. Thresholds are
/// computed as `(a + b) / 2`; callers should use values where that is exact.
pub fn brute_best_split(
    rows: &[Vec<f64>],
    labels: &[u32],
    k: usize,
    criterion: Criterion,
    min_leaf: usize,
) -> Option<OracleSplit> {
    let n = rows.len();
    let all: Vec<usize> = (0..n).collect();
    let parent = counts_of(labels, &all, k);
    if n < 2 || parent.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let m = rows[0].len();
    let mut candidates = Vec::new();
    for f in 0..m {
        let distinct: BTreeSet<u64> = rows.iter().map(|r| r[f].to_bits()).collect();
        let mut vals: Vec<f64> = distinct.into_iter().map(f64::from_bits).collect();
        vals.sort_by(f64::total_cmp);
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = all.iter().copied().filter(|&i| rows[i][f] <= t).collect();
            let right: Vec<usize> = all.iter().copied().filter(|&i| rows[i][f] > t).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let cl = counts_of(labels, &left, k);
            let cr = counts_of(labels, &right, k);
            let pl = left.len() as f64 / n as f64;
            let pr = right.len() as f64 / n as f64;
            let value = match criterion {
                Criterion::InfoGain | Criterion::GainRatio => {
                    let ig = entropy(&parent) - pl * entropy(&cl) - pr * entropy(&cr);
                    if ig <= EPS {
                        continue;
                    }
                    if criterion == Criterion::InfoGain {
                        ig
                    } else {
                        let si = split_info(&[left.len(), right.len()]);
                        if si <= 0.0 {
                            continue;
                        }
                        ig / si
                    }
                }
                Criterion::Gini => {
                    let w = pl * gini(&cl) + pr * gini(&cr);
                    if gini(&parent) - w <= EPS {
                        continue;
                    }
                    w
                }
            };
            candidates.push(OracleSplit {
                feature: f,
                threshold: t,
                value,
            });
        }
    }
    let maximise = criterion != Criterion::Gini;
    let best_value =
        candidates
            .iter()
            .map(|c| c.value)
            .fold(None, |acc: Option<f64>, v| match acc {
                None => Some(v),
                Some(a) if maximise => Some(a.max(v)),
                Some(a) => Some(a.min(v)),
            })?;
    // Lowest feature, then lowest threshold, among candidates tied with the optimum.
    candidates
        .into_iter()
        .filter(|c| (c.value - best_value).abs() <= EPS)
        .min_by(|a, b| {
            a.feature
                .cmp(&b.feature)
                .then(a.threshold.total_cmp(&b.threshold))
        })
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Sum of squared distances of each point to the mean of its group.
pub fn partition_sse(points: &[Vec<f64>], groups: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for g in groups {
        let n = points[0].len();
        let mut mean = vec![0.0; n];
        for &i in g {
            for (m, v) in mean.iter_mut().zip(&points[i]) {
                *m += v / g.len() as f64;
            }
        }
        for &i in g {
            total += points[i]
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
    }
    total
}

/// Best split of the points into two non-empty groups by exhaustive search.
/// Group 0 always contains point 0.
pub fn brute_two_partition(points: &[Vec<f64>]) -> (Vec<Vec<usize>>, f64) {
    let d = points.len();
    let mut best: Option<(Vec<Vec<usize>>, f64)> = None;
    for mask in 0u32..(1 << (d - 1)) {
        let mut a = vec![0];
        let mut b = Vec::new();
        for i in 1..d {
            if mask & (1 << (i - 1)) != 0 {
                b.push(i);
            } else {
                a.push(i);
            }
        }
        if b.is_empty() {
            continue;
        }
        let groups = vec![a, b];
        let sse = partition_sse(points, &groups);
        if best.as_ref().is_none_or(|(_, s)| sse < *s) {
            best = Some((groups, sse));
        }
    }
    best.expect("at least two points")
}

/// Lowercased maximal runs of alphanumeric characters, minus stopwords.
pub fn tokenize(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().chain(std::iter::once(' ')) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else if !cur.is_empty() {
            let w = cur.to_lowercase();
            if !stopwords.contains(&w) {
                out.push(w);
            }
            cur.clear();
        }
    }
    out
}

/// Scores every vocabulary word of a node and returns the top `k`, ordered
/// by descending score then ascending word.
pub fn tfidf_ranking(
    train: &[String],
    node_docs: &[usize],
    stopwords: &BTreeSet<String>,
    k: usize,
) -> Vec<(String, f64)> {
    let tokenized: Vec<Vec<String>> = train.iter().map(|t| tokenize(t, stopwords)).collect();
    let n = train.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &tokenized {
        let uniq: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for w in uniq {
            *df.entry(w).or_default() += 1;
        }
    }
    let mut scores: Vec<(String, f64)> = df
        .iter()
        .filter_map(|(w, &d)| {
            let tf: usize = node_docs
                .iter()
                .map(|&i| tokenized[i].iter().filter(|t| t == w).count())
                .sum();
            if tf == 0 {
                return None;
            }
            let idf = ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0;
            Some((w.to_string(), tf as f64 * idf))
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scores.truncate(k);
    scores
}

/// Central differences of `f` at `x` with step `h` in every coordinate.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Accuracy and macro F1 from scratch.
pub fn accuracy_macro_f1(truth: &[u32], pred: &[u32], k: usize) -> (f64, f64) {
    let correct = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    let mut f1_sum = 0.0;
    for c in 0..k as u32 {
        let tp = truth
            .iter()
            .zip(pred)
            .filter(|(t, p)| **t == c && **p == c)
            .count() as f64;
        let fp = truth
            .iter()
            .zip(pred)
            .filter(|(t, p)| **t != c && **p == c)
            .count() as f64;
        let fneg = truth
            .iter()
            .zip(pred)
            .filter(|(t, p)| **t == c && **p != c)
            .count() as f64;
        let denom = 2.0 * tp + fp + fneg;
        f1_sum += if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
    }
    (correct as f64 / truth.len() as f64, f1_sum / k as f64)
}
pub mod checks;
