use super::mlp::MlpParams;
use crate::error::{Error, Result};

/// Largest relative error between an analytic gradient and central finite differences.
///
/// `loss_fn` returns the loss and its analytic gradient at the given parameters. The
/// relative error of one coordinate is `|ga - gn| / max(|ga|, |gn|, 1e-8)`.
pub fn grad_check<F>(loss_fn: F, params: &MlpParams, eps: f64) -> Result<f64>
where
    F: Fn(&MlpParams) -> Result<(f64, MlpParams)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    let analytic = analytic.to_flat();
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut eval = |flat: &[f64]| -> Result<f64> {
        probe.set_flat(flat)?;
        let (l, _) = loss_fn(&probe)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::Numeric(format!("loss is {l} under perturbation")))
        }
    };
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        flat[k] = base[k] + eps;
        let plus = eval(&flat)?;
        flat[k] = base[k] - eps;
        let minus = eval(&flat)?;
        flat[k] = base[k];
        let numeric = (plus - minus) / (2.0 * eps);
        let ga = analytic[k];
        let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
