use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{backward, forward, regime_signature, Batch, Objective};
use super::params::ModelParams;
use crate::{Error, Result};

/// Coordinates compared by [`gradient_check`].
pub const DEFAULT_COORDS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates rejected because ±ε crossed a kink.
    pub skipped: usize,
}

/// Central-difference check of the analytic gradient of the total loss over
/// [`DEFAULT_COORDS`] random parameters.
pub fn gradient_check(params: &ModelParams, batch: &Batch, epsilon: f64) -> Result<f64> {
    let f = forward(params, batch)?;
    let analytic = backward(params, batch, &f, Objective::Joint);
    let report = compare_gradients(params, batch, &analytic, epsilon, DEFAULT_COORDS, 0)?;
    Ok(report.max_relative_error)
}

/// Compares `analytic` against central differences on `n_coords` random
/// coordinates (all of them if the model is smaller).
///
/// Relative error is `|g_a − g_f| / max(|g_a|, |g_f|, 1e-8)`. A coordinate
/// whose ±ε evaluations fall in different piecewise regions (a leaky-rectifier
/// sign flip or a change in the probability clamp) is skipped and another is
/// drawn.
pub fn compare_gradients(
    params: &ModelParams,
    batch: &Batch,
    analytic: &ModelParams,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid("epsilon must lie in [1e-7, 1e-3]"));
    }
    if analytic.n_parameters() != params.n_parameters() {
        return Err(Error::dim("gradient shape differs from parameters"));
    }
    let total = params.n_parameters();
    let want = n_coords.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    // partial Fisher–Yates: candidates drawn without replacement
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for k in 0..total {
        if report.checked == want {
            break;
        }
        let pick = rng.random_range(k..total);
        order.swap(k, pick);
        let idx = order[k];

        let orig = params.get_flat(idx);
        work.set_flat(idx, orig + epsilon);
        let plus = forward(&work, batch)?;
        work.set_flat(idx, orig - epsilon);
        let minus = forward(&work, batch)?;
        work.set_flat(idx, orig);

        if regime_signature(params, &plus) != regime_signature(params, &minus) {
            report.skipped += 1;
            continue;
        }
        let fd = (plus.loss.total - minus.loss.total) / (2.0 * epsilon);
        let an = analytic.get_flat(idx);
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
