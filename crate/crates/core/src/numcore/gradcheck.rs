use super::tensor::Tensor;
use crate::error::Result;

/// Compares the analytic gradient returned by `loss_fn` against central
/// differences, coordinate by coordinate.
///
/// Returns `max |analytic − numeric| / max(1, |analytic|, |numeric|)` over all
/// parameter entries. `loss_fn` must return the scalar loss together with its
/// gradient, one tensor per parameter.
pub fn grad_check<F>(loss_fn: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    assert!((1e-7..=1e-4).contains(&eps), "eps {eps} outside [1e-7, 1e-4]");
    let (_, analytic) = loss_fn(params)?;
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        for i in 0..params[t].len() {
            let orig = params[t].data()[i];
            probe[t].data_mut()[i] = orig + eps;
            let (plus, _) = loss_fn(&probe)?;
            probe[t].data_mut()[i] = orig - eps;
            let (minus, _) = loss_fn(&probe)?;
            probe[t].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[t].data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
