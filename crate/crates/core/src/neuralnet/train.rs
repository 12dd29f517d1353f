use std::io::Write;
use std::path::Path;

use super::model::{backward, concat_columns, encode, forward, hgcn_forward, Batch, LossParts, Objective};
use super::ops::{default_pos_weight, gaussian_noise};
use super::params::{Architecture, ModelParams};
use crate::dataio::table;
use crate::hypergraph::DegreeNormalization;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Standard deviation of the Gaussian noise added to the latent.
    pub noise_sd: f64,
    pub lambda_re: f64,
    pub seed: u64,
    /// Weight on positive adjacency entries; `None` uses #zeros / #ones.
    pub pos_weight: Option<f64>,
    /// Train the hypergraph encoder first, then the denoising autoencoder,
    /// instead of both at once.
    pub phased: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 1e-3,
            noise_sd: 0.1,
            lambda_re: 1.0,
            seed: 0,
            pos_weight: None,
            phased: false,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda_re >= 0.0 && self.lambda_re.is_finite()) {
            return Err(Error::invalid("lambda_re must be non-negative"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be non-negative"));
        }
        if let Some(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("pos_weight must be positive"));
            }
        }
        Ok(())
    }
}

/// Adaptive-moment optimiser state, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.nrows(), t.ncols()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

// keeps the noise draw independent of weight initialisation under one seed
const NOISE_STREAM: u64 = 0x6e6f_6973_655f_5a00;

/// Latent representations after training; rows follow spot order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    /// Clean denoising latent `L_h` (N × R).
    pub latent: Matrix,
    /// Hypergraph latent `Z_h` (N × R′).
    pub spatial: Matrix,
    /// `[L_h ‖ Z_h]`.
    pub fused: Matrix,
}

impl EmbeddingBundle {
    pub fn compute(x: &Matrix, propagation: &Matrix, params: &ModelParams) -> Result<Self> {
        let latent = encode(x, params)?;
        let spatial = hgcn_forward(x, propagation, params)?;
        let fused = concat_columns(&latent, &spatial);
        if fused.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding".into()));
        }
        Ok(EmbeddingBundle { latent, spatial, fused })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub mse: f64,
    pub bce: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub embeddings: EmbeddingBundle,
    /// Loss at the start of each epoch, before that epoch's update.
    pub trace: Vec<LossRecord>,
}

/// Full-batch joint training of both autoencoders on
/// `mse + lambda_re · weighted_bce`. The latent noise is drawn once from
/// `config.seed`, so every epoch descends the same objective.
pub fn train_joint(
    x: &Matrix,
    norm: &DegreeNormalization,
    adjacency: &Matrix,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if arch.n_genes != x.ncols() {
        return Err(Error::dim("architecture gene count does not match expression"));
    }
    let params = ModelParams::init(arch, config.seed)?;
    train_from(params, x, norm, adjacency, config)
}

/// As [`train_joint`], starting from given parameters.
pub fn train_from(
    mut params: ModelParams,
    x: &Matrix,
    norm: &DegreeNormalization,
    adjacency: &Matrix,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    let n = x.nrows();
    let pos_weight = config.pos_weight.unwrap_or_else(|| default_pos_weight(adjacency));
    let phases: &[Objective] = if config.phased {
        &[Objective::GraphOnly, Objective::DenoisingOnly]
    } else {
        &[Objective::Joint]
    };

    let mut adam = Adam::new(&params, config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    let mut trace = Vec::with_capacity(config.epochs * phases.len());
    let noise = gaussian_noise(n, params.latent_dim(), config.noise_sd, config.seed ^ NOISE_STREAM);
    let mut epoch = 0;
    for &objective in phases {
        for _ in 0..config.epochs {
            let batch = Batch {
                x,
                propagation: &norm.propagation,
                adjacency,
                noise: &noise,
                pos_weight,
                lambda_re: config.lambda_re,
            };
            let f = forward(&params, &batch)?;
            let LossParts { mse, bce, total } = f.loss;
            if !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at epoch {epoch} (learning rate {} may be too high)",
                    config.learning_rate
                )));
            }
            trace.push(LossRecord { epoch, mse, bce, total });
            let grads = backward(&params, &batch, &f, objective);
            adam.update(&mut params, &grads);
            epoch += 1;
        }
    }
    if params.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric(format!(
            "parameters diverged (learning rate {} may be too high)",
            config.learning_rate
        )));
    }
    let embeddings = EmbeddingBundle::compute(x, &norm.propagation, &params)?;
    Ok(TrainOutcome {
        params,
        embeddings,
        trace,
    })
}

/// Loss trace as CSV: `epoch,mse,bce,total`.
pub fn write_trace<W: Write>(mut w: W, trace: &[LossRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,mse,bce,total")?;
    for r in trace {
        writeln!(w, "{},{},{},{}", r.epoch, r.mse, r.bce, r.total)?;
    }
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let mut w = table::create(path)?;
    write_trace(&mut w, trace)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{adjacency_from_incidence, degree_normalization, incidence_matrix, Hypergraph};

    fn small_problem() -> (Matrix, DegreeNormalization, Matrix) {
        let n = 16;
        let edges: Vec<Vec<usize>> = (0..n).map(|i| vec![i, (i + 1) % n, (i + 2) % n]).collect();
        let h = incidence_matrix(&Hypergraph::new(n, edges).unwrap());
        let norm = degree_normalization(&h, &vec![1.0; n]).unwrap();
        let a = adjacency_from_incidence(&h);
        let x = Matrix::from_fn(n, 6, |i, j| if (i / 8) == (j % 2) { 2.0 } else { 0.5 });
        (x, norm, a)
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let (x, norm, a) = small_problem();
        let arch = Architecture::new(6, 3, 3).with_hidden(8);
        let a1 = train_joint(&x, &norm, &a, &arch, &cfg(150)).unwrap();
        let a2 = train_joint(&x, &norm, &a, &arch, &cfg(150)).unwrap();
        assert_eq!(a1.trace, a2.trace);
        assert_eq!(a1.params, a2.params);
        assert!(a1.trace.last().unwrap().total < a1.trace[0].total);
        assert_eq!(a1.embeddings.fused.shape(), (16, 6));
    }

    #[test]
    fn zero_lambda_excludes_graph_term() {
        let (x, norm, a) = small_problem();
        let arch = Architecture::new(6, 3, 3).with_hidden(8);
        let out = train_joint(&x, &norm, &a, &arch, &TrainConfig { lambda_re: 0.0, ..cfg(20) }).unwrap();
        assert!(out.trace.iter().all(|r| r.total == r.mse));
        assert!(out.trace.iter().all(|r| r.bce > 0.0));
    }

    #[test]
    fn phased_training_records_both_phases() {
        let (x, norm, a) = small_problem();
        let arch = Architecture::new(6, 3, 3).with_hidden(8);
        let out = train_joint(&x, &norm, &a, &arch, &TrainConfig { phased: true, ..cfg(30) }).unwrap();
        assert_eq!(out.trace.len(), 60);
        // graph phase does not touch the denoising autoencoder
        let init = ModelParams::init(&arch, 3).unwrap();
        let mid = train_joint(&x, &norm, &a, &arch, &TrainConfig { phased: true, epochs: 1, ..cfg(1) }).unwrap();
        assert_ne!(mid.params.hgcn, init.hgcn);
    }

    #[test]
    fn overflowing_loss_is_numeric_error() {
        let (mut x, norm, a) = small_problem();
        x *= 1e200;
        let arch = Architecture::new(6, 3, 3).with_hidden(8);
        let err = train_joint(&x, &norm, &a, &arch, &TrainConfig { learning_rate: 10.0, ..cfg(50) }).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    fn invalid_config_rejected() {
        let (x, norm, a) = small_problem();
        let arch = Architecture::new(6, 3, 3);
        for bad in [
            TrainConfig { epochs: 0, ..cfg(1) },
            TrainConfig { learning_rate: 0.0, ..cfg(1) },
            TrainConfig { lambda_re: -1.0, ..cfg(1) },
        ] {
            assert!(train_joint(&x, &norm, &a, &arch, &bad).is_err());
        }
    }

    #[test]
    fn trace_csv_format() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[LossRecord { epoch: 0, mse: 1.5, bce: 0.25, total: 1.75 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,mse,bce,total\n0,1.5,0.25,1.75\n");
    }
}
