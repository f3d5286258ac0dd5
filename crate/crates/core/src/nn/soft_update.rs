use super::mlp::Mlp;
use crate::error::{shape_err, Error, Result};

/// Exponential moving average of parameters: `target <- tau * source + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
    }
    if !target.same_architecture(source) {
        return Err(shape_err!(
            "target dims {:?} differ from source dims {:?}",
            target.dims(),
            source.dims()
        ));
    }
    if tau == 0.0 {
        return Ok(());
    }
    if tau == 1.0 {
        target.clone_from(source);
        return Ok(());
    }
    for (t, s) in target.tensors_mut().zip(source.tensors()) {
        for (t, &s) in t.iter_mut().zip(s) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
    Ok(())
}
