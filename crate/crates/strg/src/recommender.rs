//! Self-growing neighborhood recommender: soft attention over the fused
//! feature map, stochastic NMF adjacency proposals, band generation and
//! selection, and the inter-window social state update.

use crate::error::{Error, Result};
use crate::numerics::{nmf, Dense2D, NmfOptions, NodeId, Tape};
use rayon::prelude::*;

/// Factorization rank for adjacency proposals (clamped to the crowd size).
pub const PROPOSAL_RANK: usize = 8;

/// Adjacency entries below this are treated as absent edges in
/// cardinality statistics; also the degeneracy floor for proposal
/// normalization.
pub const EDGE_EPS: f64 = 1e-6;

/// Row-stochastic soft attention over the fused feature map, scaled by
/// the inverse square root of the feature width before normalization.
pub fn soft_attention(tape: &mut Tape, f_hat: NodeId) -> NodeId {
    let cols = tape.value(f_hat).cols();
    let scaled = tape.scale(f_hat, 1.0 / (cols as f64).sqrt());
    tape.softmax_rows(scaled)
}

/// Attention-weighted context features: each pedestrian's context row
/// becomes a convex mixture of every pedestrian's features.
pub fn weight_context(tape: &mut Tape, attention: NodeId, f_o: NodeId) -> Result<NodeId> {
    tape.matmul(attention, f_o)
}

/// One stochastic adjacency proposal.
#[derive(Debug, Clone)]
pub struct AdjacencyProposal {
    /// Symmetric n x n adjacency with entries in [0, 1].
    pub adjacency: Dense2D,
    pub seed: u64,
    pub index: usize,
    /// True when the factorization collapsed and the adjacency is all
    /// zeros instead of being normalized by its (vanishing) maximum.
    pub degenerate: bool,
}

/// Build the factorization target from the pooled context map: the gram
/// matrix of the map, cropped or zero-padded to the crowd size.
fn proposal_target(c_map: &Dense2D, n: usize) -> Result<Dense2D> {
    let gram = c_map.matmul(&c_map.transpose())?;
    Ok(Dense2D::from_fn(n, n, |i, j| {
        if i < gram.rows() && j < gram.cols() {
            gram.get(i, j).max(0.0)
        } else {
            0.0
        }
    }))
}

/// Propose a social adjacency by factorizing the context gram matrix,
/// warm-started from the attention map and the hidden states. The seed
/// perturbs the initializers, so different seeds explore different
/// factorizations of the same window.
pub fn propose_adjacency(
    attention: &Dense2D,
    c_map: &Dense2D,
    hidden: &Dense2D,
    seed: u64,
    index: usize,
    opts: &NmfOptions,
) -> Result<AdjacencyProposal> {
    let n = attention.rows();
    if attention.cols() != n {
        return Err(Error::dimension("propose_adjacency", attention.shape(), (n, n)));
    }
    if hidden.rows() != n {
        return Err(Error::dimension("propose_adjacency hidden", hidden.shape(), (n, hidden.cols())));
    }
    let target = proposal_target(c_map, n)?;
    let k = PROPOSAL_RANK.min(n);

    // warm starts: attention columns for the basis, hidden-state
    // magnitudes for the coefficients (zero-filled past the state width)
    let init_w = Dense2D::from_fn(n, k, |i, j| attention.get(i, j).max(0.0));
    let init_h = Dense2D::from_fn(k, n, |i, j| {
        if i < hidden.cols() {
            hidden.get(j, i).abs()
        } else {
            0.0
        }
    });

    let factors = nmf(&target, k, opts, seed, Some(&init_w), Some(&init_h))?;
    let gram = factors.w.matmul(&factors.w.transpose())?;
    let max = gram.max();
    if max <= EDGE_EPS {
        return Ok(AdjacencyProposal {
            adjacency: Dense2D::zeros(n, n),
            seed,
            index,
            degenerate: true,
        });
    }
    Ok(AdjacencyProposal { adjacency: gram.scale(1.0 / max), seed, index, degenerate: false })
}

/// Generate `count` proposals in parallel with seeds
/// `base_seed .. base_seed + count`.
pub fn generate_band(
    attention: &Dense2D,
    c_map: &Dense2D,
    hidden: &Dense2D,
    base_seed: u64,
    count: usize,
    opts: &NmfOptions,
) -> Result<Vec<AdjacencyProposal>> {
    if count == 0 {
        return Err(Error::Usage("proposal band must contain at least one proposal".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            propose_adjacency(attention, c_map, hidden, base_seed + i as u64, i, opts)
        })
        .collect()
}

/// A scored band: proposals, their decoded trajectories, and their
/// prediction errors.
#[derive(Debug, Clone)]
pub struct ProposalBand {
    pub proposals: Vec<AdjacencyProposal>,
    /// Per proposal, per pedestrian: pred x 2 decoded positions.
    pub trajectories: Vec<Vec<Dense2D>>,
    /// Per proposal: masked mean displacement against ground truth.
    pub errors: Vec<f64>,
}

/// Index of the lowest finite error; ties break toward the lower index.
pub fn select_best(errors: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &e) in errors.iter().enumerate() {
        if !e.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Domain("no proposal produced a finite error".into()))
}

/// Mix the carried hidden states through an adjacency: H* = A H.
pub fn update_states(adjacency: &Dense2D, hidden: &Dense2D) -> Result<Dense2D> {
    adjacency.matmul(hidden)
}

/// How a variant derives its social adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyRule {
    /// Edge weight is the inverse pairwise distance, capped, zero on
    /// the diagonal.
    InverseDistance,
    /// Row softmax of a learned projection of the hidden states.
    SoftmaxHidden,
    /// The lowest-error proposal from a scored band.
    MinError,
}

/// Materialize an adjacency under the given rule. `projection` is the
/// hidden-to-crowd weight for [`AdjacencyRule::SoftmaxHidden`]; `band`
/// supplies scored proposals for [`AdjacencyRule::MinError`].
pub fn adjacency_policy(
    rule: AdjacencyRule,
    positions: &[(f64, f64)],
    hidden: &Dense2D,
    projection: Option<&Dense2D>,
    band: Option<&ProposalBand>,
) -> Result<Dense2D> {
    let n = positions.len();
    match rule {
        AdjacencyRule::InverseDistance => Ok(Dense2D::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                1.0 / (dx * dx + dy * dy).sqrt().max(EDGE_EPS)
            }
        })),
        AdjacencyRule::SoftmaxHidden => {
            let w = projection
                .ok_or_else(|| Error::Usage("softmax adjacency needs a projection weight".into()))?;
            if hidden.rows() != n || w.cols() != n {
                return Err(Error::dimension("adjacency_policy", hidden.shape(), w.shape()));
            }
            let mut tape = Tape::new();
            let h = tape.constant(hidden.clone());
            let wn = tape.constant(w.clone());
            let scores = tape.matmul(h, wn)?;
            let soft = tape.softmax_rows(scores);
            Ok(tape.value(soft).clone())
        }
        AdjacencyRule::MinError => {
            let band = band
                .ok_or_else(|| Error::Usage("min-error adjacency needs a scored band".into()))?;
            let best = select_best(&band.errors)?;
            Ok(band.proposals[best].adjacency.clone())
        }
    }
}

/// Serialize a scored band as CSV, one proposal per line.
pub fn band_to_csv(band: &ProposalBand) -> String {
    let mut out = String::from("index,seed,degenerate,error\n");
    for (p, e) in band.proposals.iter().zip(&band.errors) {
        out.push_str(&format!("{},{},{},{:.17}\n", p.index, p.seed, p.degenerate as u8, e));
    }
    out
}
