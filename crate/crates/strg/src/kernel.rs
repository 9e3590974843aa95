//! The prediction kernel: fused feature map, rectified interaction
//! gradients, the MLP trajectory decoder, and the model-variant table
//! that decides which inputs each pipeline configuration consumes.

use crate::error::{Error, Result};
use crate::numerics::{Dense2D, NodeId, Tape};

/// Model variants. STR variants run the neighborhood recommender;
/// GGRNN variants consume the static scene; V variants consume vislets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantId {
    LstmO,
    St,
    StV,
    StGgrnn,
    StGgrnnV,
    Str,
    StrV,
    StrGgrnn,
    StrGgrnnV,
    GgrnnV,
}

pub const ALL_VARIANTS: [VariantId; 10] = [
    VariantId::LstmO,
    VariantId::St,
    VariantId::StV,
    VariantId::StGgrnn,
    VariantId::StGgrnnV,
    VariantId::Str,
    VariantId::StrV,
    VariantId::StrGgrnn,
    VariantId::StrGgrnnV,
    VariantId::GgrnnV,
];

/// How the carried hidden state is mixed between windows in variants
/// that do not run the recommender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseAdjacency {
    /// No social mixing; each pedestrian keeps their own state.
    Identity,
    /// Fully-connected graph: every state becomes the crowd mean.
    FullyConnected,
}

/// Resolved pipeline configuration for one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub vislets: bool,
    pub scene: bool,
    pub recommender: bool,
    /// Whether the visuospatial cell runs (context-aware variants).
    pub visuospatial: bool,
    pub base_adjacency: BaseAdjacency,
}

impl VariantId {
    pub fn spec(self) -> VariantSpec {
        use BaseAdjacency::*;
        match self {
            // positions only, no graph mixing
            VariantId::LstmO => VariantSpec {
                vislets: false,
                scene: false,
                recommender: false,
                visuospatial: false,
                base_adjacency: Identity,
            },
            // fully-connected graph over positions
            VariantId::St => VariantSpec {
                vislets: false,
                scene: false,
                recommender: false,
                visuospatial: false,
                base_adjacency: FullyConnected,
            },
            VariantId::StV => VariantSpec {
                vislets: true,
                scene: false,
                recommender: false,
                visuospatial: false,
                base_adjacency: FullyConnected,
            },
            VariantId::StGgrnn => VariantSpec {
                vislets: false,
                scene: true,
                recommender: false,
                visuospatial: true,
                base_adjacency: FullyConnected,
            },
            VariantId::StGgrnnV => VariantSpec {
                vislets: true,
                scene: true,
                recommender: false,
                visuospatial: true,
                base_adjacency: FullyConnected,
            },
            // static context only, no social graph
            VariantId::GgrnnV => VariantSpec {
                vislets: true,
                scene: true,
                recommender: false,
                visuospatial: true,
                base_adjacency: Identity,
            },
            VariantId::Str => VariantSpec {
                vislets: false,
                scene: false,
                recommender: true,
                visuospatial: true,
                base_adjacency: Identity,
            },
            VariantId::StrV => VariantSpec {
                vislets: true,
                scene: false,
                recommender: true,
                visuospatial: true,
                base_adjacency: Identity,
            },
            VariantId::StrGgrnn => VariantSpec {
                vislets: false,
                scene: true,
                recommender: true,
                visuospatial: true,
                base_adjacency: Identity,
            },
            VariantId::StrGgrnnV => VariantSpec {
                vislets: true,
                scene: true,
                recommender: true,
                visuospatial: true,
                base_adjacency: Identity,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantId::LstmO => "lstm_o",
            VariantId::St => "st",
            VariantId::StV => "st_v",
            VariantId::StGgrnn => "st_ggrnn",
            VariantId::StGgrnnV => "st_ggrnn_v",
            VariantId::Str => "str",
            VariantId::StrV => "str_v",
            VariantId::StrGgrnn => "str_ggrnn",
            VariantId::StrGgrnnV => "str_ggrnn_v",
            VariantId::GgrnnV => "ggrnn_v",
        }
    }
}

impl std::str::FromStr for VariantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        ALL_VARIANTS
            .iter()
            .copied()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Usage(format!("unknown variant '{}'", s)))
    }
}

impl std::fmt::Display for VariantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fused feature map F_hat: the pedestrian/vislet projection multiplied
/// with the coupling map, modulated elementwise by the context grid.
///
/// `social_vis` is `[f_S, V_hat]` (column concatenation) or plain `f_S`
/// when vislets are off; `c_map_resized` is the context grid already
/// broadcast to the pairwise shape, or `None` for context-free variants.
pub fn kernel_features(
    tape: &mut Tape,
    social_vis: NodeId,
    coupling: NodeId,
    w_v: NodeId,
    b_v: NodeId,
    w_r: NodeId,
    c_map_resized: Option<NodeId>,
) -> Result<NodeId> {
    let projected = tape.matmul(social_vis, w_v)?;
    let projected = tape.add_row(projected, b_v)?;
    let gated = tape.matmul(w_r, coupling)?;
    let product = tape.matmul(projected, gated)?;
    match c_map_resized {
        Some(c) => tape.mul(product, c),
        None => Ok(product),
    }
}

/// Rectified interaction gradient for the recommender path.
///
/// Defined as the derivative of the multiplicative coupling
/// `sum((f_S W_v) .* f_O)` with respect to `f_O`, passed through ReLU.
/// The derivative is evaluated through the differentiation engine on a
/// scratch tape rather than from the closed form.
pub fn interaction_gradient(f_s: &Dense2D, f_o: &Dense2D, w_v: &Dense2D) -> Result<Dense2D> {
    let mut tape = Tape::new();
    let fs = tape.constant(f_s.clone());
    let wv = tape.constant(w_v.clone());
    let fo = tape.param(f_o.clone());
    let projected = tape.matmul(fs, wv)?;
    if tape.value(projected).shape() != f_o.shape() {
        return Err(Error::dimension(
            "interaction_gradient",
            tape.value(projected).shape(),
            f_o.shape(),
        ));
    }
    let coupled = tape.mul(projected, fo)?;
    let loss = tape.sum(coupled);
    let grads = tape.backward(loss)?;
    let j = grads
        .get(fo)
        .ok_or_else(|| Error::Usage("coupling does not reach f_O".into()))?;
    Ok(j.map(|v| v.max(0.0)))
}

/// Tape-side twin of [`interaction_gradient`] used inside training
/// forwards; equality of the two routes is asserted in tests.
pub fn interaction_gradient_node(
    tape: &mut Tape,
    f_s: NodeId,
    w_v: NodeId,
) -> Result<NodeId> {
    let projected = tape.matmul(f_s, w_v)?;
    Ok(tape.relu(projected))
}

/// Context-path interaction gradient:
/// `ReLU((W_v F + b_v) .* C_map)` with the context grid already
/// broadcast to F's shape (`None` leaves the term unmodulated).
pub fn context_gradient(
    tape: &mut Tape,
    coupling: NodeId,
    w_v: NodeId,
    b_v: NodeId,
    c_map_resized: Option<NodeId>,
) -> Result<NodeId> {
    let lin = tape.matmul(w_v, coupling)?;
    let lin = tape.add_row(lin, b_v)?;
    let modulated = match c_map_resized {
        Some(c) => tape.mul(lin, c)?,
        None => lin,
    };
    Ok(tape.relu(modulated))
}

/// Where decoded offsets are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Offsets added to each pedestrian's last observed position.
    Residual,
    /// Raw decoder output taken as absolute coordinates.
    Absolute,
}

/// Two-layer linear decoder: per-pedestrian future steps flattened as
/// rows of width 2*l. Residual mode tiles the last observed position
/// across all steps and adds the decoded offsets to it.
pub fn decode_trajectory(
    tape: &mut Tape,
    j_theta: NodeId,
    w_c: NodeId,
    w_o: NodeId,
    last_positions: &[(f64, f64)],
    pred_len: usize,
    mode: DecodeMode,
) -> Result<NodeId> {
    let hidden = tape.matmul(j_theta, w_c)?;
    let offsets = tape.matmul(hidden, w_o)?;
    let (n, width) = tape.value(offsets).shape();
    if width != 2 * pred_len || n != last_positions.len() {
        return Err(Error::dimension("decode_trajectory", (n, width), (last_positions.len(), 2 * pred_len)));
    }
    match mode {
        DecodeMode::Absolute => Ok(offsets),
        DecodeMode::Residual => {
            let base = Dense2D::from_fn(n, 2 * pred_len, |i, j| {
                if j % 2 == 0 { last_positions[i].0 } else { last_positions[i].1 }
            });
            let base = tape.constant(base);
            tape.add(offsets, base)
        }
    }
}

/// Split a flattened [n x 2l] prediction row block into per-pedestrian
/// [l x 2] trajectories.
pub fn split_trajectories(flat: &Dense2D, pred_len: usize) -> Vec<Dense2D> {
    (0..flat.rows())
        .map(|i| Dense2D::from_fn(pred_len, 2, |s, c| flat.get(i, 2 * s + c)))
        .collect()
}
