//! Central finite-difference gradient verification.
//!
//! The check rebuilds the forward pass from scratch for every perturbed
//! entry, so it stays independent of the backward implementation it
//! verifies. Used by unit tests and the acceptance suite.

use crate::error::Result;
use crate::numerics::dense::Dense2D;
use crate::numerics::tape::{NodeId, Tape};

pub const FD_STEP: f64 = 1e-5;
pub const FD_MAX_REL_ERR: f64 = 1e-3;

/// Outcome of one gradient check: the worst relative error seen over all
/// tracked entries.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < FD_MAX_REL_ERR
    }
}

/// Compare analytic gradients against central differences.
///
/// `build` receives a fresh tape plus one tracked node per input matrix
/// and must return a scalar loss node. Relative error is measured
/// against `max(|analytic|, |numeric|, 1.0)` per entry so near-zero
/// gradients compare absolutely.
pub fn check_gradients(
    inputs: &[Dense2D],
    build: impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
) -> Result<GradCheck> {
    let eval = |points: &[Dense2D]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = points.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        Ok(tape.value(loss).get(0, 0))
    };

    // analytic pass
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut max_rel_err: f64 = 0.0;
    let mut entries = 0;
    for (pi, input) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[pi]);
        for i in 0..input.rows() {
            for j in 0..input.cols() {
                let mut plus = inputs.to_vec();
                plus[pi].set(i, j, input.get(i, j) + FD_STEP);
                let mut minus = inputs.to_vec();
                minus[pi].set(i, j, input.get(i, j) - FD_STEP);
                let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
                let a = analytic.map_or(0.0, |g| g.get(i, j));
                let scale = a.abs().max(numeric.abs()).max(1.0);
                max_rel_err = max_rel_err.max((a - numeric).abs() / scale);
                entries += 1;
            }
        }
    }
    Ok(GradCheck { max_rel_err, entries })
}
