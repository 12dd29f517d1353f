use crate::knn::knn_all;
use crate::{Error, Matrix, Result};

/// Weighted undirected shared-nearest-neighbour graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SNNGraph {
    pub n_vertices: usize,
    /// `(i, j, w)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
}

impl SNNGraph {
    /// Adjacency lists `(neighbour, weight)` for each vertex.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Each point's neighbourhood is itself plus its `k_snn` nearest neighbours.
/// Two points are joined when their neighbourhoods intersect, with weight
/// `|intersection| / (k_snn + 1)`.
pub fn build_snn_graph(x: &Matrix, k_snn: usize) -> Result<SNNGraph> {
    let n = x.nrows();
    if k_snn < 1 || k_snn >= n {
        return Err(Error::invalid(format!("k_snn = {k_snn} must lie in [1, {n})")));
    }
    let mut hoods = knn_all(x, k_snn);
    for (i, h) in hoods.iter_mut().enumerate() {
        h.push(i);
    }
    // containing[v] = points whose neighbourhood contains v
    let mut containing = vec![Vec::new(); n];
    for (i, h) in hoods.iter().enumerate() {
        for &v in h {
            containing[v].push(i);
        }
    }
    let denom = (k_snn + 1) as f64;
    let mut counts = vec![0usize; n];
    let mut touched = Vec::new();
    let mut edges = Vec::new();
    for i in 0..n {
        for &v in &hoods[i] {
            for &j in &containing[v] {
                if j > i {
                    if counts[j] == 0 {
                        touched.push(j);
                    }
                    counts[j] += 1;
                }
            }
        }
        touched.sort_unstable();
        for &j in &touched {
            edges.push((i, j, counts[j] as f64 / denom));
            counts[j] = 0;
        }
        touched.clear();
    }
    Ok(SNNGraph { n_vertices: n, edges })
}
