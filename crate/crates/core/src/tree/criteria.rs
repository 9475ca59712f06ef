//! Split criteria over class-count vectors.

use crate::error::{Error, Result};

fn total(counts: &[usize]) -> usize {
    counts.iter().sum()
}

pub(crate) fn entropy_of(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

pub(crate) fn gini_of(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

pub(crate) fn split_info_of(child_totals: &[usize], n: usize) -> f64 {
    entropy_of(child_totals, n)
}

/// Shannon entropy in bits.
pub fn entropy(counts: &[usize]) -> Result<f64> {
    let n = total(counts);
    if n == 0 {
        return Err(Error::value("entropy of an empty count vector"));
    }
    Ok(entropy_of(counts, n))
}

/// `1 − Σ p²`.
pub fn gini_impurity(counts: &[usize]) -> Result<f64> {
    let n = total(counts);
    if n == 0 {
        return Err(Error::value("gini impurity of an empty count vector"));
    }
    Ok(gini_of(counts, n))
}

fn check_partition(parent: &[usize], children: &[Vec<usize>]) -> Result<()> {
    for (class, &p) in parent.iter().enumerate() {
        let sum: usize = children
            .iter()
            .map(|c| c.get(class).copied().unwrap_or(0))
            .sum();
        if sum != p {
            return Err(Error::value(format!(
                "children hold {sum} samples of class {class}, parent holds {p}"
            )));
        }
    }
    if children.iter().any(|c| c.len() > parent.len()) {
        return Err(Error::value("child count vector longer than parent"));
    }
    if total(parent) == 0 {
        return Err(Error::value("empty parent"));
    }
    Ok(())
}

/// `H(parent) − Σ p(t)·H(t)`; empty children contribute nothing.
pub fn information_gain(parent: &[usize], children: &[Vec<usize>]) -> Result<f64> {
    check_partition(parent, children)?;
    let n = total(parent);
    let weighted: f64 = children
        .iter()
        .map(|c| (total(c), c))
        .filter(|(t, _)| *t > 0)
        .map(|(t, c)| t as f64 / n as f64 * entropy_of(c, t))
        .sum();
    Ok(entropy_of(parent, n) - weighted)
}

/// `−Σ p(t)·log₂ p(t)` over child sizes.
pub fn split_info(parent_total: usize, child_totals: &[usize]) -> Result<f64> {
    if parent_total == 0 {
        return Err(Error::value("empty parent"));
    }
    if total(child_totals) != parent_total {
        return Err(Error::value(format!(
            "child totals sum to {}, parent total is {parent_total}",
            total(child_totals)
        )));
    }
    Ok(split_info_of(child_totals, parent_total))
}

/// Information gain divided by split info; 0 when split info is 0.
pub fn gain_ratio(parent: &[usize], children: &[Vec<usize>]) -> Result<f64> {
    let ig = information_gain(parent, children)?;
    let sizes: Vec<usize> = children.iter().map(|c| total(c)).collect();
    let si = split_info(total(parent), &sizes)?;
    Ok(if si > 0.0 { ig / si } else { 0.0 })
}

/// Child-size-weighted mean Gini impurity.
pub fn weighted_gini(children: &[Vec<usize>]) -> Result<f64> {
    let n: usize = children.iter().map(|c| total(c)).sum();
    if n == 0 {
        return Err(Error::value("weighted gini of empty children"));
    }
    Ok(children
        .iter()
        .map(|c| (total(c), c))
        .filter(|(t, _)| *t > 0)
        .map(|(t, c)| t as f64 / n as f64 * gini_of(c, t))
        .sum())
}
