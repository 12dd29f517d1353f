//! Clustering of the fused embedding.

mod kmeans;
mod leiden;
mod snn;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use kmeans::{kmeans, kmeans_fit, KMeansFit};
pub use leiden::{leiden_communities, modularity};
pub use snn::{build_snn_graph, SNNGraph};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMethod {
    KMeans,
    Leiden,
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMethod::KMeans => "kmeans",
            ClusterMethod::Leiden => "leiden",
        })
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClusterMethod::KMeans),
            "leiden" => Ok(ClusterMethod::Leiden),
            _ => Err(Error::Usage(format!("unknown cluster method {s:?} (expected kmeans or leiden)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodParams {
    KMeans { n_clusters: usize, max_iter: usize },
    Leiden { resolution: f64 },
}

/// A partition of N items with labels `0..n_labels`, each used at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub params: MethodParams,
    pub seed: u64,
}

impl ClusterAssignment {
    pub fn method(&self) -> ClusterMethod {
        match self.params {
            MethodParams::KMeans { .. } => ClusterMethod::KMeans,
            MethodParams::Leiden { .. } => ClusterMethod::Leiden,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Renumbers labels to `0..` in order of first appearance.
pub fn relabel_contiguous(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}
