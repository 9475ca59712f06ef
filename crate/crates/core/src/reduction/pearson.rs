use rayon::prelude::*;

use super::{ClusterAssignment, ClusterCenters, ClusterParams};
use crate::error::{Error, Result};

/// Symmetric `d × d` matrix of pairwise Pearson coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    d: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    /// Builds a matrix from explicit values. The input must be square and
    /// symmetric; the diagonal is not checked.
    pub fn from_values(d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::value(format!(
                "expected {} entries, found {}",
                d * d,
                values.len()
            )));
        }
        for i in 0..d {
            for j in i + 1..d {
                if values[i * d + j].to_bits() != values[j * d + i].to_bits() {
                    return Err(Error::value(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { d, values })
    }

    /// Off-diagonal upper-triangle entries in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * self.d.saturating_sub(1) / 2);
        for i in 0..self.d {
            out.extend_from_slice(&self.values[i * self.d + i + 1..(i + 1) * self.d]);
        }
        out
    }
}

/// Pairwise Pearson correlation of `columns` (each of length `n`).
///
/// A constant column has correlation 0 with every other column and 1 with
/// itself.
pub fn pearson_matrix(columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let d = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(Error::value(format!(
            "need at least 2 rows for correlation, found {n}"
        )));
    }
    if let Some(bad) = columns.iter().position(|c| c.len() != n) {
        return Err(Error::value(format!(
            "column {bad} has length {} instead of {n}",
            columns[bad].len()
        )));
    }

    let centered: Vec<Option<(Vec<f64>, f64)>> = columns
        .par_iter()
        .map(|col| {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return None;
            }
            let mean = col.iter().sum::<f64>() / n as f64;
            let dev: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let ss = dev.iter().map(|v| v * v).sum::<f64>();
            Some((dev, ss))
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; d];
            row[i] = 1.0;
            if let Some((xi, si)) = &centered[i] {
                for j in i + 1..d {
                    if let Some((xj, sj)) = &centered[j] {
                        let dot: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                        row[j] = (dot / (si * sj).sqrt()).clamp(-1.0, 1.0);
                    }
                }
            }
            row
        })
        .collect();

    let mut values = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            values[i * d + j] = rows[i][j];
            values[j * d + i] = rows[i][j];
        }
    }
    Ok(CorrelationMatrix { d, values })
}

/// Linear-interpolation percentile of the off-diagonal upper-triangle
/// entries of `r`.
pub fn percentile_threshold(r: &CorrelationMatrix, v: f64) -> Result<f64> {
    let entries = r.upper_triangle();
    if entries.is_empty() {
        return Err(Error::value("need at least 2 columns to form a threshold"));
    }
    linear_percentile(&entries, v)
}

/// Value at position `v·(N−1)` of the sorted population, interpolating
/// linearly between neighbours.
pub fn linear_percentile(values: &[f64], v: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::value(format!(
            "percentile {v} must lie strictly inside (0, 1)"
        )));
    }
    if values.is_empty() {
        return Err(Error::value("percentile of an empty population"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = v * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Greedy sweep: the lowest unassigned column opens a cluster and absorbs
/// every unassigned column whose correlation with it is strictly above `t`.
pub fn correlation_cluster(r: &CorrelationMatrix, t: f64) -> Result<ClusterAssignment> {
    correlation_cluster_with(r, t, None)
}

pub(crate) fn correlation_cluster_with(
    r: &CorrelationMatrix,
    t: f64,
    percentile: Option<f64>,
) -> Result<ClusterAssignment> {
    if !t.is_finite() {
        return Err(Error::value(format!("threshold {t} is not finite")));
    }
    let d = r.d();
    let mut assign: Vec<Option<u32>> = vec![None; d];
    let mut centers = Vec::new();
    for c in 0..d {
        if assign[c].is_some() {
            continue;
        }
        let id = centers.len() as u32;
        centers.push(c);
        assign[c] = Some(id);
        for j in c + 1..d {
            if assign[j].is_none() && r.get(c, j) > t {
                assign[j] = Some(id);
            }
        }
    }
    Ok(ClusterAssignment {
        m: centers.len(),
        assign: assign
            .into_iter()
            .map(|a| a.expect("every column assigned"))
            .collect(),
        centers: ClusterCenters::Columns(centers),
        params: ClusterParams::Pearson {
            percentile,
            threshold: t,
        },
    })
}

/// Correlation matrix → percentile threshold → greedy clusters.
pub fn pearson_reduce(columns: &[Vec<f64>], v: f64) -> Result<ClusterAssignment> {
    let r = pearson_matrix(columns)?;
    let t = percentile_threshold(&r, v)?;
    correlation_cluster_with(&r, t, Some(v))
}
