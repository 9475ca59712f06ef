//! Reduction of the `n × d` embedding matrix to `n × m` tree features.
//!
//! Three routes: greedy Pearson-threshold clustering of columns, k-means
//! clustering of columns, and the pooled activations of a small trained CNN.
//! Both clustering routes produce features by averaging member columns.

mod artifact;
mod cnn;
mod kmeans;
mod pearson;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{EmbeddingMatrix, SplitTag};

pub use artifact::{read_features, write_features, ReductionArtifact, SourceInfo, ARTIFACT_FORMAT};
pub use cnn::{
    cnn_extract, cnn_train, conv_output_dim, fit_pool, CnnConfig, CnnNetwork, CnnReducerModel,
    ConvSpec, PoolSpec,
};
pub use kmeans::{kmeans_cluster, kmeans_objective, KMeansConfig};
pub use pearson::{
    correlation_cluster, linear_percentile, pearson_matrix, pearson_reduce, percentile_threshold,
    CorrelationMatrix,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterCenters {
    /// Pearson route: index of the column that opened each cluster.
    Columns(Vec<usize>),
    /// K-means route: centroid vector (length `n`) per cluster.
    Centroids(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterParams {
    Pearson {
        percentile: Option<f64>,
        threshold: f64,
    },
    Kmeans {
        clusters: usize,
        seed: u64,
        max_iters: usize,
        tol: f64,
        iterations: usize,
        objective_trace: Vec<f64>,
    },
}

/// Partition of the `d` embedding columns into `m` non-empty clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub m: usize,
    pub assign: Vec<u32>,
    pub centers: ClusterCenters,
    pub params: ClusterParams,
}

impl ClusterAssignment {
    pub fn method(&self) -> ReductionMethod {
        match self.params {
            ClusterParams::Pearson { .. } => ReductionMethod::Pearson,
            ClusterParams::Kmeans { .. } => ReductionMethod::Kmeans,
        }
    }

    /// Member columns of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for (col, &c) in self.assign.iter().enumerate() {
            if let Some(slot) = out.get_mut(c as usize) {
                slot.push(col);
            }
        }
        out
    }

    pub fn objective_trace(&self) -> Option<&[f64]> {
        match &self.params {
            ClusterParams::Kmeans {
                objective_trace, ..
            } => Some(objective_trace),
            ClusterParams::Pearson { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Pearson,
    Kmeans,
    Cnn,
}

impl std::fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReductionMethod::Pearson => "pearson",
            ReductionMethod::Kmeans => "kmeans",
            ReductionMethod::Cnn => "cnn",
        })
    }
}

/// Row-major `n × m` tree input features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
    feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n: usize, m: usize, values: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if values.len() != n * m {
            return Err(Error::value(format!(
                "expected {} feature values, found {}",
                n * m,
                values.len()
            )));
        }
        if feature_names.len() != m {
            return Err(Error::value(format!(
                "expected {m} feature names, found {}",
                feature_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value {
                row: Some(pos / m.max(1)),
                col: Some(pos % m.max(1)),
                msg: "non-finite feature value".into(),
            });
        }
        Ok(Self {
            n,
            m,
            values,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.m..(a + 1) * self.m]
    }

    pub fn get(&self, a: usize, j: usize) -> f64 {
        self.values[a * self.m + j]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Rows `rows` as a new matrix, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.m);
        for &a in rows {
            values.extend_from_slice(self.row(a));
        }
        FeatureMatrix {
            n: rows.len(),
            m: self.m,
            values,
            feature_names: self.feature_names.clone(),
        }
    }
}

pub fn cluster_feature_names(m: usize) -> Vec<String> {
    (0..m).map(|k| format!("cluster_{k:02}")).collect()
}

fn cluster_mean(row: impl Fn(usize) -> f64, members: &[usize]) -> f64 {
    members.iter().map(|&c| row(c)).sum::<f64>() / members.len() as f64
}

/// Averages member columns: `F[:, k]` is the mean of the columns in
/// cluster `k`. `columns` are full-length columns of the source matrix.
pub fn merge_clusters(
    columns: &[Vec<f64>],
    assignment: &ClusterAssignment,
) -> Result<FeatureMatrix> {
    if columns.len() != assignment.assign.len() {
        return Err(Error::value(format!(
            "assignment covers {} columns but matrix has {}",
            assignment.assign.len(),
            columns.len()
        )));
    }
    let members = checked_members(assignment)?;
    let n = columns.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(n * assignment.m);
    for a in 0..n {
        for group in &members {
            values.push(cluster_mean(|c| columns[c][a], group));
        }
    }
    FeatureMatrix::new(n, assignment.m, values, cluster_feature_names(assignment.m))
}

fn checked_members(assignment: &ClusterAssignment) -> Result<Vec<Vec<usize>>> {
    if let Some(bad) = assignment
        .assign
        .iter()
        .find(|&&c| c as usize >= assignment.m)
    {
        return Err(Error::Internal(format!(
            "cluster id {bad} outside [0, {})",
            assignment.m
        )));
    }
    let members = assignment.members();
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::Internal(format!(
            "cluster {empty} has no member columns"
        )));
    }
    Ok(members)
}

/// A fitted reduction, applicable to the full matrix or to single rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Reducer {
    Clusters(ClusterAssignment),
    Cnn(Box<CnnReducerModel>),
}

impl Reducer {
    pub fn method(&self) -> ReductionMethod {
        match self {
            Reducer::Clusters(a) => a.method(),
            Reducer::Cnn(_) => ReductionMethod::Cnn,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Reducer::Clusters(a) => a.m,
            Reducer::Cnn(model) => model.m(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Reducer::Clusters(a) => a.assign.len(),
            Reducer::Cnn(model) => model.network.d_in,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Reducer::Clusters(a) => cluster_feature_names(a.m),
            Reducer::Cnn(model) => (0..model.m()).map(|j| format!("cnn_{j:02}")).collect(),
        }
    }

    pub fn transform(&self, emb: &EmbeddingMatrix) -> Result<FeatureMatrix> {
        match self {
            Reducer::Clusters(a) => {
                let all: Vec<usize> = (0..emb.n()).collect();
                merge_clusters(&emb.columns(&all), a)
            }
            Reducer::Cnn(model) => cnn_extract(model, emb),
        }
    }

    /// Reduces one raw embedding row; agrees bitwise with the matching row
    /// of [`Reducer::transform`].
    pub fn transform_row(&self, row: &[f32]) -> Result<Vec<f64>> {
        if row.len() != self.input_dim() {
            return Err(Error::value(format!(
                "embedding row has {} values, reducer expects {}",
                row.len(),
                self.input_dim()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::value("non-finite embedding value"));
        }
        match self {
            Reducer::Clusters(a) => {
                let members = checked_members(a)?;
                Ok(members
                    .iter()
                    .map(|g| cluster_mean(|c| row[c] as f64, g))
                    .collect())
            }
            Reducer::Cnn(model) => model.transform_row(row),
        }
    }
}

/// How to fit a reducer. Clustering routes fit on train rows only.
#[derive(Clone, Debug, PartialEq)]
pub enum ReductionSpec {
    Pearson { percentile: f64 },
    Kmeans(KMeansConfig),
    Cnn(CnnConfig),
}

pub fn fit_reducer(emb: &EmbeddingMatrix, spec: &ReductionSpec) -> Result<Reducer> {
    let train = emb.indices_of(SplitTag::Train);
    match spec {
        ReductionSpec::Pearson { percentile } => {
            let cols = emb.columns(&train);
            Ok(Reducer::Clusters(pearson_reduce(&cols, *percentile)?))
        }
        ReductionSpec::Kmeans(config) => {
            let cols = emb.columns(&train);
            Ok(Reducer::Clusters(kmeans_cluster(&cols, config)?))
        }
        ReductionSpec::Cnn(config) => Ok(Reducer::Cnn(Box::new(cnn_train(emb, config)?))),
    }
}

/// Standard cluster-count sweeps: 10..=100 in steps of 10 or 20, and the
/// long-document sweep 130..=220 in steps of 30.
pub fn cluster_sweep(step: usize) -> Vec<usize> {
    (10..=100).step_by(step).collect()
}

pub fn long_document_cluster_sweep() -> Vec<usize> {
    (130..=220).step_by(30).collect()
}

/// Percentiles used for the correlation threshold sweep.
pub const PERCENTILE_SWEEP: [f64; 2] = [0.9, 0.95];

#[cfg(test)]
mod tests {
    use super::*;

    fn single(m: usize, assign: Vec<u32>) -> ClusterAssignment {
        ClusterAssignment {
            m,
            assign,
            centers: ClusterCenters::Columns(vec![]),
            params: ClusterParams::Pearson {
                percentile: None,
                threshold: 0.5,
            },
        }
    }

    #[test]
    fn singleton_clusters_copy_columns() {
        let cols = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let f = merge_clusters(&cols, &single(3, vec![0, 1, 2])).unwrap();
        assert_eq!(f.row(0), &[1.0, 3.0, 5.0]);
        assert_eq!(f.row(1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn duplicate_members_average_to_themselves() {
        let c = vec![0.1, 0.7, -3.3];
        let f = merge_clusters(&[c.clone(), c.clone()], &single(1, vec![0, 0])).unwrap();
        for a in 0..3 {
            assert_eq!(f.get(a, 0), c[a]);
        }
    }

    #[test]
    fn arithmetic_mean() {
        let f = merge_clusters(&[vec![1.0, 1.0], vec![3.0, 3.0]], &single(1, vec![0, 0])).unwrap();
        assert_eq!(f.values(), &[2.0, 2.0]);
    }

    #[test]
    fn empty_cluster_is_internal_error() {
        let err = merge_clusters(&[vec![1.0], vec![2.0]], &single(3, vec![0, 2])).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn sweeps() {
        assert_eq!(cluster_sweep(20), vec![10, 30, 50, 70, 90]);
        assert_eq!(cluster_sweep(10).len(), 10);
        assert_eq!(long_document_cluster_sweep(), vec![130, 160, 190, 220]);
    }
}
