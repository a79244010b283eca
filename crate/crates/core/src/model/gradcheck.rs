use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{batch_loss, batch_loss_and_grad, Example};
use super::Params;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that pairs of near-zero
/// gradients compare by absolute difference.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub n_checked: usize,
    /// Coordinates where both gradients were below `REL_FLOOR`, so the error
    /// is absolute.
    pub n_floored: usize,
    /// Tensor name, flat index, analytic and numeric gradient of the worst
    /// coordinate.
    pub worst: (String, usize, f64, f64),
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare analytic gradients of the mean batch loss with central
/// differences on `n_samples` random coordinates. Embedding rows the batch
/// never reads are skipped since their gradient is identically zero.
pub fn grad_check(
    params: &Params,
    batch: &[Example],
    n_samples: usize,
    seed: u64,
) -> GradCheckReport {
    let (_, grad) = batch_loss_and_grad(params, batch);
    let used_rows: BTreeSet<usize> = batch
        .iter()
        .flat_map(|ex| ex.input_ids.iter().chain(&ex.prev_rows))
        .map(|&r| r as usize)
        .collect();
    let e = params.emb.ncols();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (t, (name, _, data)) in params.tensors().into_iter().enumerate() {
        for i in 0..data.len() {
            if name == "emb" && !used_rows.contains(&(i / e)) {
                continue;
            }
            candidates.push((t, i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let grads: Vec<Vec<f64>> = grad.tensors().into_iter().map(|t| t.2.to_vec()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        n_checked: 0,
        n_floored: 0,
        worst: (String::new(), 0, 0.0, 0.0),
    };
    for _ in 0..n_samples {
        let (t, i) = candidates[rng.random_range(0..candidates.len())];
        let orig = params.tensors()[t].2[i];
        let eval = |probe: &mut Params, x: f64| {
            probe.tensors_mut()[t].1[i] = x;
            batch_loss(probe, batch)
        };
        let plus = eval(&mut probe, orig + STEP);
        let minus = eval(&mut probe, orig - STEP);
        probe.tensors_mut()[t].1[i] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = grads[t][i];
        let err = relative_error(analytic, numeric);
        report.n_checked += 1;
        if analytic.abs().max(numeric.abs()) < REL_FLOOR {
            report.n_floored += 1;
        }
        if err > report.max_rel_error || report.worst.0.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = (Params::NAMES[t].to_string(), i, analytic, numeric);
        }
    }
    report
}
