//! Nonnegative matrix factorization via Lee-Seung multiplicative updates
//! under the Frobenius objective. Deterministic for a fixed seed and
//! fixed initializers; an epsilon floor keeps denominators positive.

use crate::error::{Error, Result};
use crate::numerics::dense::Dense2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Denominator floor for the multiplicative updates.
const EPS: f64 = 1e-12;

/// Magnitude of the seed-driven perturbation applied to provided
/// initializers; this is the stochastic part of adjacency proposals.
const INIT_JITTER: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct NmfResult {
    /// Basis factor, n x k, entrywise nonnegative.
    pub w: Dense2D,
    /// Coefficient factor, k x m, entrywise nonnegative.
    pub h: Dense2D,
    /// Frobenius reconstruction error after each iteration; non-increasing.
    pub reconstruction_errors: Vec<f64>,
}

impl NmfResult {
    pub fn final_error(&self) -> f64 {
        self.reconstruction_errors.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct NmfOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions { max_iters: 500, tol: 1e-8 }
    }
}

/// Factorize a nonnegative `target` as W (n x k) times H (k x m).
///
/// Provided initializers are clamped at zero and perturbed by uniform
/// seed-driven noise in [0, 0.01]; absent initializers are drawn uniform
/// in (0, 1]. Stops at `max_iters` or when the per-iteration error
/// improvement drops below `tol`.
pub fn nmf(
    target: &Dense2D,
    k: usize,
    opts: &NmfOptions,
    seed: u64,
    init_w: Option<&Dense2D>,
    init_h: Option<&Dense2D>,
) -> Result<NmfResult> {
    let (n, m) = target.shape();
    if target.min() < 0.0 {
        return Err(Error::Domain("NMF target has negative entries".into()));
    }
    if k == 0 || k > n.min(m) {
        return Err(Error::Domain(format!(
            "NMF rank {} out of range for a {}x{} target",
            k, n, m
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = init_factor(init_w, n, k, "init_W", &mut rng)?;
    let mut h = init_factor(init_h, k, m, "init_H", &mut rng)?;

    let mut errors = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_iters {
        // H <- H .* (W^T V) ./ (W^T W H + eps)
        let wt = w.transpose();
        let numer_h = wt.matmul(target)?;
        let denom_h = wt.matmul(&w)?.matmul(&h)?;
        h = update(&h, &numer_h, &denom_h)?;

        // W <- W .* (V H^T) ./ (W H H^T + eps)
        let ht = h.transpose();
        let numer_w = target.matmul(&ht)?;
        let denom_w = w.matmul(&h)?.matmul(&ht)?;
        w = update(&w, &numer_w, &denom_w)?;

        let err = target.frobenius_distance(&w.matmul(&h)?)?;
        errors.push(err);
        if prev - err < opts.tol {
            break;
        }
        prev = err;
    }
    if errors.is_empty() {
        errors.push(target.frobenius_distance(&w.matmul(&h)?)?);
    }
    Ok(NmfResult { w, h, reconstruction_errors: errors })
}

fn init_factor(
    init: Option<&Dense2D>,
    rows: usize,
    cols: usize,
    name: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Dense2D> {
    match init {
        Some(m) => {
            if m.shape() != (rows, cols) {
                return Err(Error::Domain(format!(
                    "{} is {}x{}, expected {}x{}",
                    name,
                    m.shape().0,
                    m.shape().1,
                    rows,
                    cols
                )));
            }
            let mut out = m.map(|v| v.max(0.0));
            for v in out.values_mut() {
                *v += rng.gen::<f64>() * INIT_JITTER;
            }
            Ok(out)
        }
        None => {
            let mut out = Dense2D::zeros(rows, cols);
            for v in out.values_mut() {
                *v = 1.0 - rng.gen::<f64>(); // uniform in (0, 1]
            }
            Ok(out)
        }
    }
}

fn update(base: &Dense2D, numer: &Dense2D, denom: &Dense2D) -> Result<Dense2D> {
    let scaled = numer.zip(denom, "nmf_update", |n, d| n / (d + EPS))?;
    base.hadamard(&scaled)
}
