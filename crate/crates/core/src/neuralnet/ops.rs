use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::hypergraph::Hypergraph;
use crate::{Error, Matrix, Result};

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// i.i.d. N(0, sd²) matrix, drawn row-major from a seeded stream.
pub fn gaussian_noise(rows: usize, cols: usize, sd: f64, seed: u64) -> Matrix {
    if sd == 0.0 {
        return Matrix::zeros(rows, cols);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("finite non-negative sd");
    let vals: Vec<f64> = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
    Matrix::from_row_slice(rows, cols, &vals)
}

/// `L + Z` with Z ~ N(0, sd²) elementwise.
pub fn add_noise(l: &Matrix, noise_sd: f64, seed: u64) -> Result<Matrix> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid("noise_sd must be finite and non-negative"));
    }
    Ok(l + gaussian_noise(l.nrows(), l.ncols(), noise_sd, seed))
}

/// Mean of squared differences over all entries.
pub fn mse_loss(x: &Matrix, recon: &Matrix) -> Result<f64> {
    if x.shape() != recon.shape() {
        return Err(Error::dim(format!("{:?} vs {:?}", x.shape(), recon.shape())));
    }
    if x.is_empty() {
        return Err(Error::dim("empty matrices"));
    }
    let sum: f64 = x.iter().zip(recon.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Z·Zᵀ`, exactly symmetric.
pub fn gram(z: &Matrix) -> Matrix {
    let mut g = z * z.transpose();
    // the product is symmetric in exact arithmetic; mirror to make it so in floats
    let n = g.nrows();
    for i in 0..n {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// `σ(Z·Zᵀ)`.
pub fn similarity_decode(z: &Matrix) -> Matrix {
    gram(z).map(sigmoid)
}

/// Logit at which the probability clamp engages: `σ(±LOGIT_CLAMP)` is
/// `1 − BCE_CLAMP` and `BCE_CLAMP`.
pub fn logit_clamp() -> f64 {
    ((1.0 - BCE_CLAMP) / BCE_CLAMP).ln()
}

/// `ln(1 + eˣ)` without overflow or cancellation.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Ratio of zero to one entries in `a`, or 1 when `a` has no ones.
pub fn default_pos_weight(a: &Matrix) -> f64 {
    let ones = a.iter().filter(|&&v| v > 0.5).count();
    let zeros = a.len() - ones;
    if ones == 0 {
        1.0
    } else {
        zeros as f64 / ones as f64
    }
}

/// Weighted binary cross-entropy averaged over all N² entries, with weight
/// `pos_weight` on entries where `A = 1`.
pub fn weighted_bce_loss(s: &Matrix, a: &Matrix, pos_weight: f64) -> Result<f64> {
    if s.shape() != a.shape() {
        return Err(Error::dim(format!("S {:?} vs A {:?}", s.shape(), a.shape())));
    }
    if s.is_empty() {
        return Err(Error::dim("empty matrices"));
    }
    let mut sum = 0.0;
    for (&sv, &av) in s.iter().zip(a.iter()) {
        let p = sv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        sum += if av > 0.5 { pos_weight * p.ln() } else { (1.0 - p).ln() };
    }
    Ok(-sum / s.len() as f64)
}

/// [`weighted_bce_loss`] of `σ(logits)`, evaluated in logit space so that
/// probabilities near 0 or 1 keep full precision. The clamp is applied to
/// the logits at ±[`logit_clamp`].
pub fn weighted_bce_from_logits(logits: &Matrix, a: &Matrix, pos_weight: f64) -> Result<f64> {
    if logits.shape() != a.shape() {
        return Err(Error::dim(format!("logits {:?} vs A {:?}", logits.shape(), a.shape())));
    }
    if logits.is_empty() {
        return Err(Error::dim("empty matrices"));
    }
    let c = logit_clamp();
    let mut sum = 0.0;
    for (&u, &av) in logits.iter().zip(a.iter()) {
        let u = u.clamp(-c, c);
        // −ln σ(u) = softplus(−u), −ln(1 − σ(u)) = softplus(u)
        sum += if av > 0.5 { pos_weight * softplus(-u) } else { softplus(u) };
    }
    Ok(sum / logits.len() as f64)
}

fn check_rows(x: &Matrix, want: usize, what: &str) -> Result<()> {
    if x.nrows() != want {
        return Err(Error::dim(format!("{what}: {} rows, expected {want}", x.nrows())));
    }
    Ok(())
}

/// Vertex → hyperedge stage: each hyperedge takes the mean of its members'
/// rows.
pub fn node_to_edge_aggregate(xv: &Matrix, hg: &Hypergraph) -> Result<Matrix> {
    check_rows(xv, hg.n_vertices(), "vertex features")?;
    let mut he = Matrix::zeros(hg.n_edges(), xv.ncols());
    for (e, members) in hg.hyperedges().iter().enumerate() {
        if members.is_empty() {
            return Err(Error::invalid(format!("hyperedge {e} is empty")));
        }
        let mut row = he.row_mut(e);
        for &v in members {
            row += xv.row(v);
        }
        row /= members.len() as f64;
    }
    Ok(he)
}

/// Hyperedge → vertex stage: each vertex takes the mean of its incident
/// hyperedges' rows.
pub fn edge_to_node_aggregate(he: &Matrix, hg: &Hypergraph) -> Result<Matrix> {
    check_rows(he, hg.n_edges(), "hyperedge features")?;
    let incident = hg.vertex_edges();
    let mut xv = Matrix::zeros(hg.n_vertices(), he.ncols());
    for (v, edges) in incident.iter().enumerate() {
        if edges.is_empty() {
            return Err(Error::invalid(format!("vertex {v} is isolated")));
        }
        let mut row = xv.row_mut(v);
        for &e in edges {
            row += he.row(e);
        }
        row /= edges.len() as f64;
    }
    Ok(xv)
}
