use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    cluster_feature_names, ClusterAssignment, ClusterCenters, ClusterParams, CnnConfig,
    CnnReducerModel, FeatureMatrix, Reducer, ReductionMethod,
};
use crate::error::{Error, Result};

pub const ARTIFACT_FORMAT: &str = "reduction/v1";

/// Where the reduction came from and where its feature matrix lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceInfo {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub embeddings_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnParams {
    pub config: CnnConfig,
    pub d_in: usize,
    pub n_classes: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArtifactParams {
    Cnn(CnnParams),
    Clusters(ClusterParams),
}

/// JSON reduction artifact. CNN weights are stored as base64 blobs of
/// little-endian f32 values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionArtifact {
    pub format: String,
    pub method: ReductionMethod,
    pub params: ArtifactParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<ClusterCenters>,
    pub feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensors: Option<BTreeMap<String, String>>,
    pub source: SourceInfo,
}

fn encode_f32(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_f32(name: &str, blob: &str) -> Result<Vec<f32>> {
    let bytes = B64
        .decode(blob)
        .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "tensor {name} is not a whole number of f32 values"
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

const TENSOR_NAMES: [&str; 6] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "classifier.weight",
    "classifier.bias",
];

impl ReductionArtifact {
    pub fn from_reducer(reducer: &Reducer, source: SourceInfo) -> Self {
        match reducer {
            Reducer::Clusters(a) => ReductionArtifact {
                format: ARTIFACT_FORMAT.into(),
                method: a.method(),
                params: ArtifactParams::Clusters(a.params.clone()),
                assignment: Some(a.assign.clone()),
                centers: Some(a.centers.clone()),
                feature_names: cluster_feature_names(a.m),
                tensors: None,
                source,
            },
            Reducer::Cnn(model) => {
                let net = &model.network;
                let sizes = [
                    net.conv1.kernel,
                    1,
                    net.conv2.kernel,
                    1,
                    net.n_classes * net.output_dim(),
                    net.n_classes,
                ];
                let mut tensors = BTreeMap::new();
                let mut offset = 0;
                for (name, len) in TENSOR_NAMES.iter().zip(sizes) {
                    tensors.insert(
                        name.to_string(),
                        encode_f32(&model.params[offset..offset + len]),
                    );
                    offset += len;
                }
                ReductionArtifact {
                    format: ARTIFACT_FORMAT.into(),
                    method: ReductionMethod::Cnn,
                    params: ArtifactParams::Cnn(CnnParams {
                        config: model.config.clone(),
                        d_in: net.d_in,
                        n_classes: net.n_classes,
                        initial_loss: model.initial_loss,
                        final_loss: model.final_loss,
                        loss_trace: model.loss_trace.clone(),
                    }),
                    assignment: None,
                    centers: None,
                    feature_names: reducer.feature_names(),
                    tensors: Some(tensors),
                    source,
                }
            }
        }
    }

    pub fn to_reducer(&self) -> Result<Reducer> {
        if self.format != ARTIFACT_FORMAT {
            return Err(Error::Format(format!(
                "unsupported reduction format {:?}",
                self.format
            )));
        }
        let reducer =
            match (&self.method, &self.params) {
                (ReductionMethod::Cnn, ArtifactParams::Cnn(p)) => {
                    let tensors = self
                        .tensors
                        .as_ref()
                        .ok_or_else(|| Error::Format("CNN artifact without tensors".into()))?;
                    let mut params = Vec::new();
                    for name in TENSOR_NAMES {
                        let blob = tensors
                            .get(name)
                            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
                        params.extend(decode_f32(name, blob)?);
                    }
                    let mut model =
                        CnnReducerModel::from_parts(p.config.clone(), p.d_in, p.n_classes, params)?;
                    model.initial_loss = p.initial_loss;
                    model.final_loss = p.final_loss;
                    model.loss_trace = p.loss_trace.clone();
                    Reducer::Cnn(Box::new(model))
                }
                (
                    ReductionMethod::Pearson,
                    ArtifactParams::Clusters(params @ ClusterParams::Pearson { .. }),
                )
                | (
                    ReductionMethod::Kmeans,
                    ArtifactParams::Clusters(params @ ClusterParams::Kmeans { .. }),
                ) => {
                    let assign = self.assignment.clone().ok_or_else(|| {
                        Error::Format("cluster artifact without assignment".into())
                    })?;
                    let m = self.feature_names.len();
                    let assignment = ClusterAssignment {
                        m,
                        assign,
                        centers: self.centers.clone().ok_or_else(|| {
                            Error::Format("cluster artifact without centers".into())
                        })?,
                        params: params.clone(),
                    };
                    let members = assignment.members();
                    if assignment.assign.iter().any(|&c| c as usize >= m)
                        || members.iter().any(Vec::is_empty)
                    {
                        return Err(Error::Format(
                            "assignment is not a partition into non-empty clusters".into(),
                        ));
                    }
                    Reducer::Clusters(assignment)
                }
                (method, _) => {
                    return Err(Error::Format(format!(
                        "params do not match method {method}"
                    )));
                }
            };
        if reducer.input_dim() != self.source.d {
            return Err(Error::Format(format!(
                "reducer input width {} disagrees with source d = {}",
                reducer.input_dim(),
                self.source.d
            )));
        }
        Ok(reducer)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("artifact serializes");
        out.push(b'\n');
        out
    }

    /// Reads an artifact and returns it with the SHA-256 of the file bytes.
    pub fn read(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let artifact = serde_json::from_slice(&bytes)?;
        Ok((artifact, crate::sha256_hex(&bytes)))
    }
}

const FEATURES_MAGIC: &[u8; 4] = b"PFM1";

/// Binary feature matrix: `PFM1`, u32 n, u32 m, then `n·m` little-endian
/// f64 values row-major. Feature names travel in the reduction artifact.
pub fn write_features(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + features.values().len() * 8);
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&(features.n() as u32).to_le_bytes());
    out.extend_from_slice(&(features.m() as u32).to_le_bytes());
    for v in features.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_features(bytes: &[u8], feature_names: Vec<String>) -> Result<FeatureMatrix> {
    if bytes.len() < 12 || &bytes[..4] != FEATURES_MAGIC {
        return Err(Error::Format(
            "feature file must start with PFM1 header".into(),
        ));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let m = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() != n * m * 8 {
        return Err(Error::Format(format!(
            "feature file body has {} bytes, expected {}",
            body.len(),
            n * m * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    FeatureMatrix::new(n, m, values, feature_names)
}
