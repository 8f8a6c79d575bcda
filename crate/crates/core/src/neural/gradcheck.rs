//! Central finite-difference verification of the analytic gradients.
//!
//! ReLU and max pooling are only piecewise smooth. When a `±h` probe moves
//! any sample across a kink (a ReLU changes state or a pooling window
//! changes winner) the difference quotient no longer estimates the
//! derivative; such entries are re-probed with a step small enough to stay
//! on one side and counted in [`GradCheck::kink_retries`].

use rand_chacha::ChaCha8Rng;

use super::model::Model;
use crate::error::Result;

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose `±h` probe crossed a kink.
    pub kink_retries: usize,
    /// Tensor and element index of the worst entry.
    pub worst: (usize, usize),
    /// Analytic and numeric values at the worst entry.
    pub worst_values: (f64, f64),
    /// Largest error with a fixed 1e-12 floor instead of the scale floor.
    pub max_unscaled_error: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor relative to the largest gradient entry. The central
/// difference carries an `O(h^2)` truncation error that does not shrink
/// with the gradient, so entries many orders below the gradient's scale
/// are judged against that scale instead of their own magnitude.
pub const SCALE_FLOOR: f64 = 1e-3;

type Signature = Vec<(Vec<bool>, Vec<usize>)>;

fn loss_and_signature(model: &Model, inputs: &[&[f64]], targets: &[usize], masks: Option<&[u64]>) -> Result<(f64, Signature)> {
    let mut loss = 0.0;
    let mut sig = Vec::with_capacity(inputs.len());
    for (i, (x, &t)) in inputs.iter().zip(targets).enumerate() {
        let cache = match masks {
            Some(seeds) => model.forward(x, Some(&mut crate::rng::stream(seeds[i], &[])))?,
            None => model.forward::<ChaCha8Rng>(x, None)?,
        };
        loss -= cache.probs[t].max(f64::MIN_POSITIVE).ln();
        sig.push(cache.kink_signature());
    }
    Ok((loss / inputs.len() as f64, sig))
}

/// Compares the batch-mean cross-entropy gradient against central
/// differences with step `h` for every parameter of `model`. `masks`
/// fixes the dropout streams (as in training) when given.
pub fn check_model(model: &Model, inputs: &[&[f64]], targets: &[usize], masks: Option<&[u64]>, h: f64) -> Result<GradCheck> {
    let (_, _, grads) = model.batch_loss_and_grad(inputs, targets, masks)?;
    let (_, base) = loss_and_signature(model, inputs, targets, masks)?;
    let scale = grads.iter().flat_map(|g| g.data.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (SCALE_FLOOR * scale).max(1e-12);
    let mut probe = model.clone();
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, kink_retries: 0, worst: (0, 0), worst_values: (0.0, 0.0), max_unscaled_error: 0.0 };
    for (k, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.params[k][i];
            let mut step = h;
            let numeric = loop {
                probe.params[k][i] = orig + step;
                let (plus, sig_plus) = loss_and_signature(&probe, inputs, targets, masks)?;
                probe.params[k][i] = orig - step;
                let (minus, sig_minus) = loss_and_signature(&probe, inputs, targets, masks)?;
                probe.params[k][i] = orig;
                if (sig_plus == base && sig_minus == base) || step < h * 1e-6 {
                    break (plus - minus) / (2.0 * step);
                }
                if step == h {
                    out.kink_retries += 1;
                }
                step *= 0.1;
            };
            let err = relative_error(g[i], numeric, floor);
            out.max_unscaled_error = out.max_unscaled_error.max(relative_error(g[i], numeric, 1e-12));
            if err > out.max_rel_error {
                out.max_rel_error = err;
                out.worst = (k, i);
                out.worst_values = (g[i], numeric);
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
