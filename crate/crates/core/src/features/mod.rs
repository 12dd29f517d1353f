//! Histology tiles, tile features, Mahalanobis distance and PCA.
//!
//! Tile features come from a pluggable [`TileFeaturizer`]; the default
//! [`StatFeaturizer`] summarises intensity statistics per channel.

mod covariance;
mod pca;
mod tiles;

use std::io::Write;
use std::path::Path;

pub use covariance::{covariance_matrix, default_ridge, mahalanobis_distance, CovarianceModel};
pub use pca::{pca_fit_transform, Pca};
pub use tiles::{
    extract_tiles, tile_feature_vector, Image, StatFeaturizer, Tile, TileFeaturizer, TileFeatures, TileSet,
    HIST_BINS,
};

use crate::dataio::table;
use crate::{Error, Result};

/// Writes tile features as CSV (`spot,f0,f1,...`).
pub fn write_tile_features(path: &Path, ids: &[String], features: &TileFeatures) -> Result<()> {
    let mut w = table::create(path)?;
    let cols: Vec<String> = (0..features.vectors.ncols()).map(|j| format!("f{j}")).collect();
    table::write_matrix(&mut w, "spot", &cols, ids, &features.vectors)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
