//! Spatial KNN hypergraphs and the operators derived from them.
//!
//! Every spot contributes one hyperedge: itself plus its `k` nearest spatial
//! neighbours. From the incidence matrix `H` we derive the normalised
//! propagation operator
//!
//! ```text
//! P = Dv^(-1/2) · H · W · De^(-1) · Hᵀ · Dv^(-1/2)
//! ```
//!
//! used by the convolutional encoder, and the binary co-membership adjacency
//! reconstructed by the similarity decoder.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::dataio::{table, SpatialCoords};
use crate::features::{mahalanobis_distance, CovarianceModel, TileFeatures};
use crate::knn::nearest_neighbors;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    n_vertices: usize,
    /// Members of each hyperedge, ascending and duplicate-free.
    hyperedges: Vec<Vec<usize>>,
    edge_weights: Vec<f64>,
}

impl Hypergraph {
    /// Unit-weight hypergraph. Member lists are sorted; duplicates, empty
    /// edges, out-of-range indices and uncovered vertices are errors.
    pub fn new(n_vertices: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        let w = vec![1.0; hyperedges.len()];
        Hypergraph::with_weights(n_vertices, hyperedges, w)
    }

    pub fn with_weights(n_vertices: usize, mut hyperedges: Vec<Vec<usize>>, edge_weights: Vec<f64>) -> Result<Self> {
        if edge_weights.len() != hyperedges.len() {
            return Err(Error::dim("one weight per hyperedge required"));
        }
        if let Some(w) = edge_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("hyperedge weight {w} must be positive")));
        }
        // each vertex needs a membership, which bounds n before allocating
        let memberships: usize = hyperedges.iter().map(Vec::len).sum();
        if n_vertices > memberships {
            return Err(Error::invalid(format!(
                "{n_vertices} vertices cannot be covered by {memberships} memberships"
            )));
        }
        let mut covered = vec![false; n_vertices];
        for (e, members) in hyperedges.iter_mut().enumerate() {
            if members.is_empty() {
                return Err(Error::invalid(format!("hyperedge {e} is empty")));
            }
            members.sort_unstable();
            if members.windows(2).any(|p| p[0] == p[1]) {
                return Err(Error::invalid(format!("hyperedge {e} repeats a vertex")));
            }
            for &v in members.iter() {
                if v >= n_vertices {
                    return Err(Error::invalid(format!("hyperedge {e} names vertex {v} >= {n_vertices}")));
                }
                covered[v] = true;
            }
        }
        if let Some(v) = covered.iter().position(|c| !c) {
            return Err(Error::invalid(format!("vertex {v} belongs to no hyperedge")));
        }
        Ok(Hypergraph {
            n_vertices,
            hyperedges,
            edge_weights,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    /// Hyperedge indices incident to each vertex, ascending.
    pub fn vertex_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices];
        for (e, members) in self.hyperedges.iter().enumerate() {
            for &v in members {
                out[v].push(e);
            }
        }
        out
    }

    /// Edge-list text: a `# n_vertices N` comment, then one line per
    /// hyperedge of space-separated vertex indices.
    pub fn to_writer<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n_vertices {}", self.n_vertices)?;
        for members in &self.hyperedges {
            let line: Vec<String> = members.iter().map(usize::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses the edge-list format. Lines starting with `#` are comments; a
    /// `# n_vertices N` comment fixes the vertex count, otherwise it is one
    /// more than the largest index.
    pub fn from_reader<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::parse(origin, line_no, 0, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut it = comment.split_whitespace();
                if it.next() == Some("n_vertices") {
                    let n = it
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| Error::parse(origin, line_no, 0, "malformed n_vertices header"))?;
                    declared = Some(n);
                }
                continue;
            }
            let mut members = Vec::new();
            for (col, tok) in line.split_whitespace().enumerate() {
                let v = tok
                    .parse::<usize>()
                    .map_err(|_| Error::parse(origin, line_no, col + 1, format!("not a vertex index: {tok:?}")))?;
                members.push(v);
            }
            edges.push(members);
        }
        let n = match declared {
            Some(n) => n,
            None => edges.iter().flatten().max().map_or(0, |m| m.saturating_add(1)),
        };
        if edges.is_empty() {
            return Err(Error::parse(origin, 1, 0, "no hyperedges"));
        }
        Hypergraph::new(n, edges).map_err(|e| match e {
            Error::Invalid(m) => Error::Invalid(format!("{origin}: {m}")),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Hypergraph::from_reader(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = table::create(path)?;
        self.to_writer(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// One hyperedge per spot: the spot and its `k` nearest spatial neighbours
/// (Euclidean, ties by lower index). Hyperedge `i` is centred on spot `i`.
pub fn build_knn_hypergraph(coords: &SpatialCoords, k: usize) -> Result<Hypergraph> {
    let n = coords.len();
    if k < 1 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < N = {n}")));
    }
    let pos = coords.positions();
    let edges = (0..n)
        .map(|i| {
            let mut e = nearest_neighbors(pos, i, k);
            e.push(i);
            e
        })
        .collect();
    Hypergraph::new(n, edges)
}

/// Drops neighbours whose tile is far from the centre spot's tile.
///
/// Hyperedge `i` must be centred on vertex `i` (as built by
/// [`build_knn_hypergraph`]). The cutoff is the `quantile` (nearest-rank) of
/// all centre-to-neighbour Mahalanobis distances; neighbours strictly above it
/// are removed. Centres always stay in their own hyperedge.
pub fn gate_by_mahalanobis(
    hg: &Hypergraph,
    features: &TileFeatures,
    cov: &CovarianceModel,
    quantile: f64,
) -> Result<Hypergraph> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::invalid("gating quantile must lie in (0, 1]"));
    }
    if hg.n_edges() != hg.n_vertices() || features.vectors.nrows() != hg.n_vertices() {
        return Err(Error::dim("gating needs one centred hyperedge and one feature row per vertex"));
    }
    let row = |i: usize| features.vectors.row(i).iter().copied().collect::<Vec<f64>>();
    let mut dists = Vec::with_capacity(hg.n_edges());
    let mut all = Vec::new();
    for (c, members) in hg.hyperedges().iter().enumerate() {
        if !members.contains(&c) {
            return Err(Error::invalid(format!("hyperedge {c} is not centred on vertex {c}")));
        }
        let tc = row(c);
        let mut d = Vec::with_capacity(members.len());
        for &v in members {
            let dv = if v == c { 0.0 } else { mahalanobis_distance(&tc, &row(v), cov)? };
            if v != c {
                all.push(dv);
            }
            d.push(dv);
        }
        dists.push(d);
    }
    if all.is_empty() {
        return Ok(hg.clone());
    }
    all.sort_by(f64::total_cmp);
    let rank = ((quantile * all.len() as f64).ceil() as usize).clamp(1, all.len());
    let cutoff = all[rank - 1];
    let edges = hg
        .hyperedges()
        .iter()
        .zip(&dists)
        .enumerate()
        .map(|(c, (members, d))| {
            members
                .iter()
                .zip(d)
                .filter(|&(&v, &dv)| v == c || dv <= cutoff)
                .map(|(&v, _)| v)
                .collect()
        })
        .collect();
    Hypergraph::with_weights(hg.n_vertices(), edges, hg.edge_weights().to_vec())
}

/// Sparse 0/1 incidence, stored both by column (hyperedge) and by row.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    n_vertices: usize,
    columns: Vec<Vec<usize>>,
    rows: Vec<Vec<usize>>,
}

impl IncidenceMatrix {
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, v: usize, e: usize) -> bool {
        self.columns[e].binary_search(&v).is_ok()
    }

    pub fn column(&self, e: usize) -> &[usize] {
        &self.columns[e]
    }

    pub fn row(&self, v: usize) -> &[usize] {
        &self.rows[v]
    }

    pub fn to_dense(&self) -> Matrix {
        let mut h = Matrix::zeros(self.n_vertices, self.columns.len());
        for (e, members) in self.columns.iter().enumerate() {
            for &v in members {
                h[(v, e)] = 1.0;
            }
        }
        h
    }
}

pub fn incidence_matrix(hg: &Hypergraph) -> IncidenceMatrix {
    IncidenceMatrix {
        n_vertices: hg.n_vertices(),
        columns: hg.hyperedges().to_vec(),
        rows: hg.vertex_edges(),
    }
}

/// Vertex/edge degrees and the cached propagation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeNormalization {
    /// d(v) = Σ_e w(e)·h(v, e)
    pub vertex_degrees: Vec<f64>,
    /// δ(e) = Σ_v h(v, e)
    pub edge_degrees: Vec<f64>,
    pub propagation: Matrix,
}

pub fn degree_normalization(h: &IncidenceMatrix, weights: &[f64]) -> Result<DegreeNormalization> {
    let (n, m) = (h.n_vertices(), h.n_edges());
    if weights.len() != m {
        return Err(Error::dim(format!("{} weights for {m} hyperedges", weights.len())));
    }
    let edge_degrees: Vec<f64> = h.columns.iter().map(|c| c.len() as f64).collect();
    if let Some(e) = edge_degrees.iter().position(|&d| d == 0.0) {
        return Err(Error::invalid(format!("hyperedge {e} has zero degree")));
    }
    let mut vertex_degrees = vec![0.0; n];
    for (e, members) in h.columns.iter().enumerate() {
        for &v in members {
            vertex_degrees[v] += weights[e];
        }
    }
    if let Some(v) = vertex_degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::invalid(format!("vertex {v} has zero degree")));
    }

    let mut p = Matrix::zeros(n, n);
    for (e, members) in h.columns.iter().enumerate() {
        let s = weights[e] / edge_degrees[e];
        for &i in members {
            for &j in members {
                p[(i, j)] += s;
            }
        }
    }
    let inv_sqrt: Vec<f64> = vertex_degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] != 0.0 {
                p[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Ok(DegreeNormalization {
        vertex_degrees,
        edge_degrees,
        propagation: p,
    })
}

/// Binary co-membership adjacency with an empty diagonal.
pub fn adjacency_from_incidence(h: &IncidenceMatrix) -> Matrix {
    let n = h.n_vertices();
    let mut a = Matrix::zeros(n, n);
    for members in &h.columns {
        for &i in members {
            for &j in members {
                if i != j {
                    a[(i, j)] = 1.0;
                }
            }
        }
    }
    a
}
