//! Plain gradient descent with exponential learning-rate decay.

use crate::error::{Error, Result};
use crate::numerics::dense::Dense2D;

/// Learning-rate schedule: `base * decay^epoch`.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
}

impl LrSchedule {
    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.base * self.decay.powi(epoch as i32)
    }
}

/// In-place SGD step: p <- p - lr * g for each (param, grad) pair.
/// Gradients may be absent for parameters off the loss path.
pub fn apply_gradients<'a>(
    params: impl IntoIterator<Item = (&'a mut Dense2D, Option<&'a Dense2D>)>,
    lr: f64,
) -> Result<()> {
    for (p, g) in params {
        let Some(g) = g else { continue };
        if g.shape() != p.shape() {
            return Err(Error::dimension("apply_gradients", p.shape(), g.shape()));
        }
        for (pv, gv) in p.values_mut().iter_mut().zip(g.values()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}
