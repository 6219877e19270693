use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumError, ParamSet, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst scalar.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Scalars left out because the loss reported a non-smooth point.
    pub skipped: usize,
}

/// Gradients below this magnitude are compared in absolute terms. Central
/// differences of a summed objective carry rounding noise of a few 1e-10,
/// so smaller values cannot be resolved to a relative tolerance.
pub const ZERO_FLOOR: f64 = 1e-5;

/// Compares the analytic gradients already stored in `params` against
/// central differences of `loss`, one scalar at a time.
///
/// The relative error per scalar is `|a - n| / max(|a|, |n|, ZERO_FLOOR)`;
/// the report carries the maximum over every scalar of every parameter.
pub fn gradient_check(
    params: &ParamSet<f64>,
    eps: f64,
    mut loss: impl FnMut(&ParamSet<f64>) -> f64,
) -> Result<GradCheckReport> {
    let coords = (0..params.len()).flat_map(|pi| (0..params[pi].tensor.len()).map(move |i| (pi, i)));
    check_coords(params, eps, coords, |p| Some(loss(p)))
}

/// Like [`gradient_check`], but tensors with more than `max_per_tensor`
/// scalars are checked at that many distinct indices drawn with `seed`.
/// Smaller tensors are checked exhaustively.
///
/// `loss` returns `None` when the probe point is not on the same smooth piece
/// as `params` (a ReLU changed sign, say); such scalars are skipped and
/// counted in [`GradCheckReport::skipped`].
pub fn gradient_check_sampled(
    params: &ParamSet<f64>,
    eps: f64,
    max_per_tensor: usize,
    seed: u64,
    loss: impl FnMut(&ParamSet<f64>) -> Option<f64>,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for pi in 0..params.len() {
        let len = params[pi].tensor.len();
        if len <= max_per_tensor {
            coords.extend((0..len).map(|i| (pi, i)));
        } else {
            let mut picked = sample(&mut rng, len, max_per_tensor).into_vec();
            picked.sort_unstable();
            coords.extend(picked.into_iter().map(|i| (pi, i)));
        }
    }
    check_coords(params, eps, coords, loss)
}

fn check_coords(
    params: &ParamSet<f64>,
    eps: f64,
    coords: impl IntoIterator<Item = (usize, usize)>,
    mut loss: impl FnMut(&ParamSet<f64>) -> Option<f64>,
) -> Result<GradCheckReport> {
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (pi, i) in coords {
        let name = &params[pi].name;
        let orig = params[pi].tensor.data()[i];
        probe[pi].tensor.data_mut()[i] = orig + eps;
        let plus = loss(&probe);
        probe[pi].tensor.data_mut()[i] = orig - eps;
        let minus = loss(&probe);
        probe[pi].tensor.data_mut()[i] = orig;
        let (Some(plus), Some(minus)) = (plus, minus) else {
            report.skipped += 1;
            continue;
        };
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumError::NonFinite(format!("loss while perturbing {name}[{i}]")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = params[pi].tensor.grad()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ZERO_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some((name.clone(), i));
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
