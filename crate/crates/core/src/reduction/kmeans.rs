use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterCenters, ClusterParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            seed,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let dist = sq_dist(point, c);
        if dist < best.1 {
            best = (j as u32, dist);
        }
    }
    best
}

/// Sum over points of the squared distance to their assigned centroid.
pub fn kmeans_objective(points: &[Vec<f64>], assign: &[u32], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(p, &a)| sq_dist(p, &centroids[a as usize]))
        .sum()
}

fn plus_plus_init(points: &[Vec<f64>], m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = points.len();
    let mut chosen = vec![false; d];
    let first = rng.random_range(0..d);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut min_dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < m {
        let total: f64 = min_dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in min_dist.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a chosen centre
            let free: Vec<usize> = (0..d).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        for (i, p) in points.iter().enumerate() {
            min_dist[i] = min_dist[i].min(sq_dist(p, &points[pick]));
        }
        centroids.push(points[pick].clone());
    }
    centroids
}

fn means(points: &[Vec<f64>], assign: &[u32], m: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = points[0].len();
    let mut sums = vec![vec![0.0; n]; m];
    let mut counts = vec![0usize; m];
    for (p, &a) in points.iter().zip(assign) {
        counts[a as usize] += 1;
        for (s, v) in sums[a as usize].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

/// Moves the point farthest from its own centroid into each empty cluster,
/// taking donors only from clusters with at least two members.
fn repair_empty(
    points: &[Vec<f64>],
    assign: &mut [u32],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let (donor_point, _) = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assign[*i] as usize] >= 2)
            .map(|(i, p)| (i, sq_dist(p, &centroids[assign[i] as usize])))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        let old = assign[donor_point] as usize;
        assign[donor_point] = empty as u32;
        counts[old] -= 1;
        counts[empty] = 1;
        centroids[empty] = points[donor_point].clone();
        let n = points[0].len();
        let mut mean = vec![0.0; n];
        for (p, &a) in points.iter().zip(assign.iter()) {
            if a as usize == old {
                mean.iter_mut().zip(p).for_each(|(s, v)| *s += v);
            }
        }
        mean.iter_mut().for_each(|v| *v /= counts[old] as f64);
        centroids[old] = mean;
    }
}

/// Lloyd's algorithm over `points` (the embedding columns), seeded with
/// k-means++.
///
/// The returned assignment records the objective after the initial
/// assignment and after every iteration; the trace never increases beyond
/// floating-point noise. Cluster ids are relabelled so that cluster `j`
/// contains a lower-index column than cluster `j + 1`.
pub fn kmeans_cluster(points: &[Vec<f64>], config: &KMeansConfig) -> Result<ClusterAssignment> {
    let d = points.len();
    let m = config.clusters;
    if m < 1 || m > d {
        return Err(Error::value(format!(
            "cluster count {m} must be in [1, {d}]"
        )));
    }
    let n = points[0].len();
    if n == 0 || points.iter().any(|p| p.len() != n) {
        return Err(Error::value("k-means points must share a positive length"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = plus_plus_init(points, m, &mut rng);
    let assign_all = |centroids: &[Vec<f64>]| -> Vec<u32> {
        points.par_iter().map(|p| nearest(p, centroids).0).collect()
    };
    let mut assign = assign_all(&centroids);
    let mut trace = vec![kmeans_objective(points, &assign, &centroids)];
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let (mut next, mut counts) = means(points, &assign, m);
        if counts.contains(&0) {
            // empty clusters keep their previous centroid as the reference
            // for the farthest-point search
            for (j, c) in counts.iter().enumerate() {
                if *c == 0 {
                    next[j] = centroids[j].clone();
                }
            }
            repair_empty(points, &mut assign, &mut next, &mut counts);
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let new_assign = assign_all(&centroids);
        trace.push(kmeans_objective(points, &new_assign, &centroids));
        let stable = new_assign == assign;
        assign = new_assign;
        if stable || shift < config.tol {
            break;
        }
    }

    // nearest-centroid assignment can empty a cluster in the final pass
    let (_, mut counts) = means(points, &assign, m);
    if counts.contains(&0) {
        repair_empty(points, &mut assign, &mut centroids, &mut counts);
        let (fixed, _) = means(points, &assign, m);
        centroids = fixed;
        trace.push(kmeans_objective(points, &assign, &centroids));
    }

    // canonical relabelling by first member
    let mut relabel = vec![u32::MAX; m];
    let mut next_id = 0u32;
    for &a in &assign {
        if relabel[a as usize] == u32::MAX {
            relabel[a as usize] = next_id;
            next_id += 1;
        }
    }
    let assign: Vec<u32> = assign.iter().map(|&a| relabel[a as usize]).collect();
    let mut ordered = vec![Vec::new(); m];
    for (old, c) in centroids.into_iter().enumerate() {
        ordered[relabel[old] as usize] = c;
    }

    Ok(ClusterAssignment {
        m,
        assign,
        centers: ClusterCenters::Centroids(ordered),
        params: ClusterParams::Kmeans {
            clusters: m,
            seed: config.seed,
            max_iters: config.max_iters,
            tol: config.tol,
            iterations,
            objective_trace: trace,
        },
    })
}
