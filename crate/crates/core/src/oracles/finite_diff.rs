use crate::error::{Error, Result};
use crate::oracles::LossFunction;
use crate::vector::ModelVector;

/// Denominator floor for the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// Central-difference gradient with step `h`.
pub fn central_difference(loss: &dyn LossFunction, x: &ModelVector, h: f64) -> ModelVector {
    let base = x.as_slice();
    let mut probe = base.to_vec();
    let g = (0..base.len())
        .map(|i| {
            probe[i] = base[i] + h;
            let up = loss.eval(&ModelVector::from_vec_unchecked(probe.clone()));
            probe[i] = base[i] - h;
            let down = loss.eval(&ModelVector::from_vec_unchecked(probe.clone()));
            probe[i] = base[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    ModelVector::from_vec_unchecked(g)
}

/// Worst per-coordinate relative error between the analytic gradient and
/// central differences, `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check(loss: &dyn LossFunction, x: &ModelVector, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step h must be > 0, got {h}")));
    }
    x.ensure_dim(loss.dim(), "finite_diff_check")?;
    let analytic = loss.grad(x);
    let numeric = central_difference(loss, x, h);
    Ok(analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max))
}
