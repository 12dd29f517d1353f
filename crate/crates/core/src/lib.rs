//! Spatial domain detection for spatial transcriptomics.
//!
//! Spots are linked into a K-nearest-neighbour hypergraph over their tissue
//! coordinates. A denoising autoencoder over gene expression and a
//! hypergraph-convolutional autoencoder are trained jointly; their latents are
//! fused, reduced with PCA, clustered (k-means or Leiden) and scored with ARI
//! and iLISI.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataio`]: CSV loading, validation, tissue masking, synthetic data.
//! - [`features`]: histology tiles, tile featurizers, Mahalanobis distance, PCA.
//! - [`hypergraph`]: KNN hypergraph, incidence matrix, propagation operator.
//! - [`neuralnet`]: dense layers, both autoencoders, losses, joint training.
//! - [`clustering`]: k-means, shared-nearest-neighbour graph, Leiden.
//! - [`metrics`]: adjusted Rand index and iLISI.
//! - [`pipeline`]: configuration, end-to-end orchestration, SVG plots.

pub mod clustering;
pub mod dataio;
pub mod error;
pub mod features;
pub mod hypergraph;
pub mod knn;
pub mod metrics;
pub mod neuralnet;
pub mod pipeline;

pub use error::{Error, Result};

/// Dense row-major-semantics matrix used throughout (storage is nalgebra's).
pub type Matrix = nalgebra::DMatrix<f64>;
