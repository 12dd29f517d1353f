//! Synthetic spatial datasets with planted domains.
//!
//! Each domain is a Gaussian cloud of spots around its own centre. Centres
//! sit on a circle spaced eight spatial standard deviations apart. Every
//! gene has a shared baseline level; gene `g` is a marker for domain
//! `g % n_domains` and is raised by [`MARKER_LIFT`] in that domain, so the
//! domain signatures are linearly separable.
//!
//! Draw order is fixed (positions, baselines, noise, then mixing) so that
//! datasets differing only in `mix` share layout, signatures and noise.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ExpressionMatrix, GroundTruthLabels, SpatialCoords};
use crate::{Error, Matrix, Result};

const SPATIAL_SD: f64 = 1.0;
const CENTER_GAP: f64 = 8.0 * SPATIAL_SD;
const MARKER_LIFT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_domains: usize,
    pub spots_per_domain: usize,
    pub n_genes: usize,
    pub noise_sd: f64,
    /// Fraction of spots whose expression comes from a random other domain.
    pub mix: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(n_domains: usize, spots_per_domain: usize, n_genes: usize, noise_sd: f64, mix: f64, seed: u64) -> Self {
        SynthParams {
            n_domains,
            spots_per_domain,
            n_genes,
            noise_sd,
            mix,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_domains == 0 || self.spots_per_domain == 0 || self.n_genes == 0 {
            return Err(Error::invalid("synthetic counts must all be positive"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.mix) {
            return Err(Error::invalid("mix must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn domain_center(d: usize, n_domains: usize) -> (f64, f64) {
    if n_domains == 1 {
        return (0.0, 0.0);
    }
    let step = std::f64::consts::TAU / n_domains as f64;
    // chord between neighbouring centres equals CENTER_GAP
    let radius = CENTER_GAP / (2.0 * (step / 2.0).sin());
    let a = step * d as f64;
    (radius * a.cos(), radius * a.sin())
}

/// Generates expression, coordinates and planted labels.
pub fn generate_synthetic(p: &SynthParams) -> Result<(ExpressionMatrix, SpatialCoords, GroundTruthLabels)> {
    p.validate()?;
    let n = p.n_domains * p.spots_per_domain;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let labels: Vec<usize> = (0..n).map(|i| i / p.spots_per_domain).collect();

    let mut positions = Matrix::zeros(n, 2);
    for (i, &d) in labels.iter().enumerate() {
        let (cx, cy) = domain_center(d, p.n_domains);
        positions[(i, 0)] = cx + SPATIAL_SD * std_normal.sample(&mut rng);
        positions[(i, 1)] = cy + SPATIAL_SD * std_normal.sample(&mut rng);
    }

    let baseline: Vec<f64> = (0..p.n_genes).map(|_| rng.random_range(0.5..1.5)).collect();
    let signature = |d: usize, g: usize| {
        if g % p.n_domains == d {
            baseline[g] + MARKER_LIFT
        } else {
            baseline[g]
        }
    };

    let mut noise = Matrix::zeros(n, p.n_genes);
    for i in 0..n {
        for g in 0..p.n_genes {
            noise[(i, g)] = p.noise_sd * std_normal.sample(&mut rng);
        }
    }

    let mut source = labels.clone();
    if p.n_domains > 1 {
        let n_mixed = (p.mix * n as f64).round() as usize;
        let mut mixed = sample(&mut rng, n, n_mixed).into_vec();
        mixed.sort_unstable();
        for i in mixed {
            // uniform over the other domains
            let shift = rng.random_range(1..p.n_domains);
            source[i] = (labels[i] + shift) % p.n_domains;
        }
    }

    let mut values = Matrix::zeros(n, p.n_genes);
    for i in 0..n {
        for g in 0..p.n_genes {
            values[(i, g)] = (signature(source[i], g) + noise[(i, g)]).max(0.0);
        }
    }

    let spot_ids: Vec<String> = (0..n).map(|i| format!("spot_{i:04}")).collect();
    let gene_ids: Vec<String> = (0..p.n_genes).map(|g| format!("gene_{g:03}")).collect();
    let expr = ExpressionMatrix::new(values, spot_ids.clone(), gene_ids)?;
    let coords = SpatialCoords::new(positions, spot_ids)?;
    let truth = GroundTruthLabels::new(labels, p.n_domains)?;
    Ok((expr, coords, truth))
}
