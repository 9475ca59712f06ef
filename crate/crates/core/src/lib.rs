//! Turns document-embedding matrices into decision trees whose nodes are
//! described by TF-IDF word clouds, and explains predictions against them.
//!
//! Stages: [`ingestion`] loads a bundle, [`reduction`] shrinks the embedding
//! width, [`tree`] fits ID3/C4.5/CART trees or forests, [`prototypes`]
//! summarizes nodes, and [`explanation`] produces global and local views.

// Index loops mirror the matrix formulas they implement.
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod explanation;
pub mod ingestion;
pub mod pipeline;
pub mod prototypes;
pub mod reduction;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`; used for artifact provenance.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
