//! Forward and reverse passes for the joint model.
//!
//! ```text
//! L_h  = E(X)                      dense encoder
//! Z_h  = HGCN(X, P)                act(P·H·Θ) per layer
//! X′   = D([L_h + Z ‖ Z_h])        dense decoder on noisy latent + spatial latent
//! loss = mse(X, X′) + λ · bce_w(σ(Z_h Z_hᵀ), A)
//! ```

use super::ops::{gram, logit_clamp, mse_loss, sigmoid, weighted_bce_from_logits};
use super::params::{Activation, DenseLayer, GraphLayer, ModelParams};
use crate::{Error, Matrix, Result};

/// Inputs that stay fixed for a forward/backward evaluation.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub x: &'a Matrix,
    /// Propagation operator P (N × N).
    pub propagation: &'a Matrix,
    /// Binary adjacency A (N × N).
    pub adjacency: &'a Matrix,
    /// Noise Z added to the denoising latent (N × R).
    pub noise: &'a Matrix,
    pub pos_weight: f64,
    pub lambda_re: f64,
}

/// Which loss terms feed the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Joint,
    /// Reconstruction term only, hypergraph encoder frozen.
    DenoisingOnly,
    /// Adjacency term only, denoising autoencoder untouched.
    GraphOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub mse: f64,
    pub bce: f64,
    pub total: f64,
}

struct DenseCache {
    input: Matrix,
    pre: Matrix,
}

struct GraphCache {
    /// P·H for the layer input H.
    propagated: Matrix,
    pre: Matrix,
}

pub(crate) struct Forward {
    enc: Vec<DenseCache>,
    dec: Vec<DenseCache>,
    graph: Vec<GraphCache>,
    pub spatial: Matrix,
    pub recon: Matrix,
    /// `Z_h·Z_hᵀ`; the similarity is its elementwise sigmoid.
    pub logits: Matrix,
    pub loss: LossParts,
}

fn add_bias(m: &mut Matrix, bias: &Matrix) {
    for mut row in m.row_iter_mut() {
        row += bias;
    }
}

fn dense_forward(layers: &[DenseLayer], input: &Matrix) -> (Matrix, Vec<DenseCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = input.clone();
    for l in layers {
        let mut pre = &h * &l.weight;
        add_bias(&mut pre, &l.bias);
        let out = pre.map(|v| l.activation.apply(v));
        caches.push(DenseCache { input: h, pre });
        h = out;
    }
    (h, caches)
}

fn graph_forward(layers: &[GraphLayer], p: &Matrix, input: &Matrix) -> (Matrix, Vec<GraphCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = input.clone();
    for l in layers {
        let propagated = p * &h;
        let pre = &propagated * &l.weight;
        let out = pre.map(|v| l.activation.apply(v));
        caches.push(GraphCache { propagated, pre });
        h = out;
    }
    (h, caches)
}

fn act_grad(upstream: &Matrix, pre: &Matrix, act: Activation) -> Matrix {
    match act {
        Activation::Identity => upstream.clone(),
        _ => upstream.zip_map(pre, |g, z| g * act.derivative(z)),
    }
}

/// Returns the gradient w.r.t. the network input.
fn dense_backward(layers: &[DenseLayer], caches: &[DenseCache], upstream: Matrix, grads: &mut [DenseLayer]) -> Matrix {
    let mut g = upstream;
    for ((l, c), gl) in layers.iter().zip(caches).zip(grads.iter_mut()).rev() {
        let dpre = act_grad(&g, &c.pre, l.activation);
        gl.weight += c.input.tr_mul(&dpre);
        gl.bias += dpre.row_sum();
        g = &dpre * l.weight.transpose();
    }
    g
}

fn graph_backward(layers: &[GraphLayer], caches: &[GraphCache], p: &Matrix, upstream: Matrix, grads: &mut [GraphLayer]) {
    let mut g = upstream;
    for (i, ((l, c), gl)) in layers.iter().zip(caches).zip(grads.iter_mut()).enumerate().rev() {
        let dpre = act_grad(&g, &c.pre, l.activation);
        gl.weight += c.propagated.tr_mul(&dpre);
        if i > 0 {
            g = p.tr_mul(&(&dpre * l.weight.transpose()));
        }
    }
}

pub(crate) fn concat_columns(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, ca, cb) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Matrix::zeros(n, ca + cb);
    out.view_mut((0, 0), (n, ca)).copy_from(a);
    out.view_mut((0, ca), (n, cb)).copy_from(b);
    out
}

pub(crate) fn check_batch(params: &ModelParams, b: &Batch) -> Result<()> {
    let n = b.x.nrows();
    if b.x.ncols() != params.n_genes() {
        return Err(Error::dim(format!(
            "expression has {} genes, model expects {}",
            b.x.ncols(),
            params.n_genes()
        )));
    }
    if b.propagation.shape() != (n, n) || b.adjacency.shape() != (n, n) {
        return Err(Error::dim(format!("propagation and adjacency must be {n}×{n}")));
    }
    if b.noise.shape() != (n, params.latent_dim()) {
        return Err(Error::dim(format!("noise must be {n}×{}", params.latent_dim())));
    }
    Ok(())
}

pub(crate) fn forward(params: &ModelParams, b: &Batch) -> Result<Forward> {
    check_batch(params, b)?;
    let (latent, enc) = dense_forward(&params.dae_encoder, b.x);
    let (spatial, graph) = graph_forward(&params.hgcn, b.propagation, b.x);
    let noisy = &latent + b.noise;
    let (recon, dec) = dense_forward(&params.dae_decoder, &concat_columns(&noisy, &spatial));
    let logits = gram(&spatial);
    let mse = mse_loss(b.x, &recon)?;
    let bce = weighted_bce_from_logits(&logits, b.adjacency, b.pos_weight)?;
    let loss = LossParts {
        mse,
        bce,
        total: mse + b.lambda_re * bce,
    };
    Ok(Forward {
        enc,
        dec,
        graph,
        spatial,
        recon,
        logits,
        loss,
    })
}

pub(crate) fn backward(params: &ModelParams, b: &Batch, f: &Forward, objective: Objective) -> ModelParams {
    let mut grads = params.zeros_like();
    let n = b.x.nrows();
    let r = params.latent_dim();
    let r2 = params.spatial_dim();

    let mut d_spatial = Matrix::zeros(n, r2);
    if objective != Objective::GraphOnly {
        let scale = 2.0 / b.x.len() as f64;
        let d_recon = (&f.recon - b.x) * scale;
        let d_input = dense_backward(&params.dae_decoder, &f.dec, d_recon, &mut grads.dae_decoder);
        let d_latent = d_input.columns(0, r).into_owned();
        dense_backward(&params.dae_encoder, &f.enc, d_latent, &mut grads.dae_encoder);
        d_spatial += d_input.columns(r, r2);
    }
    if objective != Objective::DenoisingOnly && b.lambda_re != 0.0 {
        // d/du of the weighted BCE on logits u = z_i·z_j is w_ij (σ(u) − a_ij),
        // zero where the clamp is active
        let scale = b.lambda_re / (n * n) as f64;
        let c = logit_clamp();
        let d_logits = Matrix::from_fn(n, n, |i, j| {
            let u = f.logits[(i, j)];
            if !(-c..=c).contains(&u) {
                return 0.0;
            }
            let a = b.adjacency[(i, j)];
            let w = if a > 0.5 { b.pos_weight } else { 1.0 };
            scale * w * (sigmoid(u) - a)
        });
        let sym = &d_logits + d_logits.transpose();
        d_spatial += sym * &f.spatial;
    }
    if objective == Objective::DenoisingOnly {
        return grads;
    }
    graph_backward(&params.hgcn, &f.graph, b.propagation, d_spatial, &mut grads.hgcn);
    grads
}

/// Loss and analytic gradient at `params`.
pub fn loss_and_gradient(params: &ModelParams, b: &Batch) -> Result<(LossParts, ModelParams)> {
    let f = forward(params, b)?;
    let g = backward(params, b, &f, Objective::Joint);
    Ok((f.loss, g))
}

pub fn loss(params: &ModelParams, b: &Batch) -> Result<LossParts> {
    Ok(forward(params, b)?.loss)
}

/// Sign pattern of every piecewise-linear pre-activation and the clamp state
/// of every similarity entry. Two parameter points with equal signatures lie
/// in the same smooth region of the loss.
pub(crate) fn regime_signature(params: &ModelParams, f: &Forward) -> Vec<bool> {
    let mut sig = Vec::new();
    let dense = params.dae_encoder.iter().zip(&f.enc).chain(params.dae_decoder.iter().zip(&f.dec));
    for (l, c) in dense {
        if l.activation.is_piecewise() {
            sig.extend(c.pre.iter().map(|&v| v >= 0.0));
        }
    }
    for (l, c) in params.hgcn.iter().zip(&f.graph) {
        if l.activation.is_piecewise() {
            sig.extend(c.pre.iter().map(|&v| v >= 0.0));
        }
    }
    let c = logit_clamp();
    sig.extend(f.logits.iter().map(|&u| (-c..=c).contains(&u)));
    sig
}

/// Denoising autoencoder pass: returns the clean latent `L_h` and the
/// reconstruction from `[L_h + Z ‖ spatial]`.
pub fn dae_forward(
    x: &Matrix,
    params: &ModelParams,
    spatial: &Matrix,
    noise_sd: f64,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    if x.ncols() != params.n_genes() {
        return Err(Error::dim(format!("expression has {} genes, model expects {}", x.ncols(), params.n_genes())));
    }
    if spatial.ncols() != params.spatial_dim() || spatial.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "spatial embedding is {:?}, expected ({}, {})",
            spatial.shape(),
            x.nrows(),
            params.spatial_dim()
        )));
    }
    let (latent, _) = dense_forward(&params.dae_encoder, x);
    let noisy = super::ops::add_noise(&latent, noise_sd, seed)?;
    let (recon, _) = dense_forward(&params.dae_decoder, &concat_columns(&noisy, spatial));
    Ok((latent, recon))
}

/// Clean denoising latent `E(X)`.
pub fn encode(x: &Matrix, params: &ModelParams) -> Result<Matrix> {
    if x.ncols() != params.n_genes() {
        return Err(Error::dim("expression width does not match the encoder"));
    }
    Ok(dense_forward(&params.dae_encoder, x).0)
}

/// Hypergraph convolutional encoder `Z_h = HGCN(X, P)`.
pub fn hgcn_forward(x: &Matrix, propagation: &Matrix, params: &ModelParams) -> Result<Matrix> {
    let n = x.nrows();
    if propagation.shape() != (n, n) {
        return Err(Error::dim(format!("propagation must be {n}×{n}")));
    }
    if x.ncols() != params.hgcn[0].weight.nrows() {
        return Err(Error::dim(format!(
            "input has {} columns, first graph layer expects {}",
            x.ncols(),
            params.hgcn[0].weight.nrows()
        )));
    }
    Ok(graph_forward(&params.hgcn, propagation, x).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::params::Architecture;

    fn linear_params(enc: Matrix, dec: Matrix, theta: Matrix) -> ModelParams {
        let (ec, dc) = (enc.ncols(), dec.ncols());
        ModelParams {
            dae_encoder: vec![DenseLayer {
                weight: enc,
                bias: Matrix::zeros(1, ec),
                activation: Activation::Identity,
            }],
            dae_decoder: vec![DenseLayer {
                weight: dec,
                bias: Matrix::zeros(1, dc),
                activation: Activation::Identity,
            }],
            hgcn: vec![GraphLayer {
                weight: theta,
                activation: Activation::Identity,
            }],
        }
    }

    #[test]
    fn hgcn_identity_map() {
        let x = Matrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 4.0, 0.0]);
        let p = linear_params(Matrix::identity(2, 1), Matrix::zeros(2, 2), Matrix::identity(2, 2));
        assert_eq!(hgcn_forward(&x, &Matrix::identity(3, 3), &p).unwrap(), x);
    }

    #[test]
    fn hgcn_uniform_propagation_gives_column_means() {
        let x = Matrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0]);
        let j = Matrix::from_element(4, 4, 0.25);
        let p = linear_params(Matrix::identity(2, 1), Matrix::zeros(2, 2), Matrix::identity(2, 2));
        let z = hgcn_forward(&x, &j, &p).unwrap();
        for i in 0..4 {
            assert!((z[(i, 0)] - 4.0).abs() < 1e-15);
            assert!((z[(i, 1)] - 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hgcn_preserves_constant_rows_on_single_edge() {
        let x = Matrix::from_fn(5, 3, |_, j| j as f64 + 0.5);
        let j = Matrix::from_element(5, 5, 0.2);
        let p = ModelParams::init(&Architecture::new(3, 2, 2).with_hidden(4), 9).unwrap();
        let z = hgcn_forward(&x, &j, &p).unwrap();
        for i in 1..5 {
            assert!((z.row(i) - z.row(0)).amax() < 1e-12);
        }
    }

    #[test]
    fn dae_zero_weights_reconstruct_zero() {
        let mut p = ModelParams::init(&Architecture::new(3, 2, 2).with_hidden(4), 1).unwrap();
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        let x = Matrix::from_element(4, 3, 1.5);
        let (_, recon) = dae_forward(&x, &p, &Matrix::from_element(4, 2, 0.3), 0.5, 7).unwrap();
        assert_eq!(recon, Matrix::zeros(4, 3));
    }

    #[test]
    fn dae_duplicated_rows_match() {
        let p = ModelParams::init(&Architecture::new(3, 2, 2).with_hidden(4), 1).unwrap();
        let x = Matrix::from_row_slice(2, 3, &[0.2, 1.0, 3.0, 0.2, 1.0, 3.0]);
        let z = Matrix::from_row_slice(2, 2, &[0.1, -0.4, 0.1, -0.4]);
        let (l, recon) = dae_forward(&x, &p, &z, 0.0, 0).unwrap();
        assert_eq!(l.row(0), l.row(1));
        assert_eq!(recon.row(0), recon.row(1));
    }

    #[test]
    fn dae_hand_computed_linear_chain() {
        // encoder 2→1, decoder (1+1)→2
        let enc = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let dec = Matrix::from_row_slice(2, 2, &[1.0, 0.5, -1.0, 3.0]);
        let p = linear_params(enc, dec, Matrix::from_row_slice(2, 1, &[1.0, 0.0]));
        let x = Matrix::from_row_slice(1, 2, &[3.0, 1.0]);
        let spatial = Matrix::from_row_slice(1, 1, &[2.0]);
        let (l, recon) = dae_forward(&x, &p, &spatial, 0.0, 0).unwrap();
        // L = 3 + 2 = 5; decoder input [5, 2]
        assert_eq!(l[(0, 0)], 5.0);
        assert_eq!(recon[(0, 0)], 5.0 * 1.0 + 2.0 * -1.0);
        assert_eq!(recon[(0, 1)], 5.0 * 0.5 + 2.0 * 3.0);
    }

    #[test]
    fn dae_rejects_wrong_spatial_width() {
        let p = ModelParams::init(&Architecture::new(3, 2, 2).with_hidden(4), 1).unwrap();
        let x = Matrix::zeros(2, 3);
        assert!(dae_forward(&x, &p, &Matrix::zeros(2, 3), 0.0, 0).is_err());
    }
}
