//! Adjusted Rand index and integrated local inverse Simpson's index.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dataio::table;
use crate::knn::nearest_neighbors;
use crate::{Error, Matrix, Result};

fn choose2(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Chance-corrected agreement of two partitions, computed from their
/// contingency table. Two partitions that are both all-singletons or both a
/// single cluster give 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two items"));
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(a.len() as u64);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Per-spot effective number of labels among each spot's `k_lisi` nearest
/// neighbours (uniform weights, self excluded), and their mean.
pub fn ilisi(embedding: &Matrix, labels: &[usize], k_lisi: usize) -> Result<(f64, Vec<f64>)> {
    let n = embedding.nrows();
    if labels.len() != n {
        return Err(Error::dim(format!("{} labels for {n} embedded spots", labels.len())));
    }
    if k_lisi < 2 || k_lisi >= n {
        return Err(Error::invalid(format!("k_lisi = {k_lisi} must lie in [2, {n})")));
    }
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_labels];
    let per_spot: Vec<f64> = (0..n)
        .map(|i| {
            counts.iter_mut().for_each(|c| *c = 0);
            for j in nearest_neighbors(embedding, i, k_lisi) {
                counts[labels[j]] += 1;
            }
            let k = k_lisi as f64;
            let simpson: f64 = counts.iter().map(|&c| (c as f64 / k).powi(2)).sum();
            1.0 / simpson
        })
        .collect();
    let mean = per_spot.iter().sum::<f64>() / n as f64;
    Ok((mean, per_spot))
}

/// `k_lisi` default: 30, or N − 1 when fewer spots.
pub fn default_k_lisi(n: usize) -> usize {
    30.min(n.saturating_sub(1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    /// Absent when no ground truth was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    pub ilisi_mean: f64,
    #[serde(skip)]
    pub ilisi_per_spot: Vec<f64>,
    pub k_lisi: usize,
    pub n_spots: usize,
    pub n_labels: usize,
}

impl MetricReport {
    pub fn compute(embedding: &Matrix, labels: &[usize], truth: Option<&[usize]>, k_lisi: usize) -> Result<Self> {
        let ari = truth.map(|t| adjusted_rand_index(labels, t)).transpose()?;
        let (ilisi_mean, ilisi_per_spot) = ilisi(embedding, labels, k_lisi)?;
        Ok(MetricReport {
            ari,
            ilisi_mean,
            ilisi_per_spot,
            k_lisi,
            n_spots: labels.len(),
            n_labels: labels.iter().max().map_or(0, |m| m + 1),
        })
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = table::create(path)?;
        self.write_json(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// `spot_id,ilisi` rows.
    pub fn save_per_spot(&self, path: &Path, ids: &[String]) -> Result<()> {
        let mut w = table::create(path)?;
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "spot_id,ilisi")?;
            for (id, v) in ids.iter().zip(&self.ilisi_per_spot) {
                writeln!(w, "{id},{v}")?;
            }
            w.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}
