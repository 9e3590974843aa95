//! Feature encoders: trajectory/vislet embeddings, the two-dimensional
//! grid LSTM cells, static-context convolution, and neighborhood fusion.
//!
//! Every encoder builds its computation on a [`Tape`] so the training
//! loop can backpropagate through it; parameters arrive as tracked
//! nodes, fixed inputs as constants.

use crate::data::{GridMask, SceneMap};
use crate::error::{Error, Result};
use crate::numerics::{Dense2D, NodeId, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Observation length the embedding operates at; shorter windows are
/// front-padded by repeating the first position.
pub const EMBED_OBS: usize = 8;
/// Trajectory embedding target shape is EMBED_ROWS x EMBED_COLS.
pub const EMBED_ROWS: usize = 10;
pub const EMBED_COLS: usize = 10;
/// Vislet embedding is 2 x EMBED_COLS.
pub const VIS_ROWS: usize = 2;

/// Flattened per-pedestrian feature widths fed to the social cell.
pub const TRAJ_FEAT: usize = EMBED_ROWS * EMBED_COLS;
pub const VIS_FEAT: usize = VIS_ROWS * EMBED_COLS;

/// Side of the pooled context map C_map.
pub const CTX_SIDE: usize = 8;
pub const CTX_FEAT: usize = CTX_SIDE * CTX_SIDE;

/// Front-pad an observation block to [`EMBED_OBS`] rows by repeating
/// the first position.
pub fn pad_observation(obs: &Dense2D) -> Result<Dense2D> {
    if obs.cols() != 2 || obs.rows() == 0 || obs.rows() > EMBED_OBS {
        return Err(Error::dimension("pad_observation", obs.shape(), (EMBED_OBS, 2)));
    }
    if obs.rows() == EMBED_OBS {
        return Ok(obs.clone());
    }
    let pad = EMBED_OBS - obs.rows();
    Ok(Dense2D::from_fn(EMBED_OBS, 2, |i, j| {
        if i < pad {
            obs.get(0, j)
        } else {
            obs.get(i - pad, j)
        }
    }))
}

/// Nested linear trajectory embedding: X_hat = W_left (10x8) . X (8x2) . W_right (2x10).
pub fn embed_trajectory(
    tape: &mut Tape,
    x: NodeId,
    w_left: NodeId,
    w_right: NodeId,
) -> Result<NodeId> {
    if !tape.value(x).is_finite() {
        return Err(Error::NonFinite("trajectory embedding input".into()));
    }
    let inner = tape.matmul(w_left, x)?;
    tape.matmul(inner, w_right)
}

/// Vislet embedding: V_hat = V^T (2x8) . W_vis (8x10).
pub fn embed_vislets(tape: &mut Tape, v: NodeId, w_vis: NodeId) -> Result<NodeId> {
    let vt = tape.transpose(v);
    tape.matmul(vt, w_vis)
}

/// Row-axis concatenation of the embedded cues; without vislets the
/// trajectory embedding passes through unchanged.
pub fn fuse_inputs(tape: &mut Tape, x_hat: NodeId, v_hat: Option<NodeId>) -> Result<NodeId> {
    match v_hat {
        Some(v) => tape.concat_rows(x_hat, v),
        None => Ok(x_hat),
    }
}

/// Hidden-state initialization policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateInit {
    Zeros,
    Gaussian,
}

/// Per-dimension hidden and memory blocks of a grid LSTM cell,
/// each n x hidden.
#[derive(Debug, Clone)]
pub struct GridLstmState {
    pub h1: Dense2D,
    pub m1: Dense2D,
    pub h2: Dense2D,
    pub m2: Dense2D,
}

impl GridLstmState {
    pub fn zeros(n: usize, hidden: usize) -> Self {
        GridLstmState {
            h1: Dense2D::zeros(n, hidden),
            m1: Dense2D::zeros(n, hidden),
            h2: Dense2D::zeros(n, hidden),
            m2: Dense2D::zeros(n, hidden),
        }
    }

    /// Standard-normal hidden states, zero memory.
    pub fn gaussian(n: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |_: usize, _: usize| StandardNormal.sample(&mut rng);
        let h1 = Dense2D::from_fn(n, hidden, &mut draw);
        let h2 = Dense2D::from_fn(n, hidden, &mut draw);
        GridLstmState { h1, m1: Dense2D::zeros(n, hidden), h2, m2: Dense2D::zeros(n, hidden) }
    }

    pub fn init(kind: StateInit, n: usize, hidden: usize, seed: u64) -> Self {
        match kind {
            StateInit::Zeros => Self::zeros(n, hidden),
            StateInit::Gaussian => Self::gaussian(n, hidden, seed),
        }
    }
}

/// Tape handles for one grid dimension's gates: four weight blocks of
/// shape (2*hidden + input) x hidden, four 1 x hidden biases, and the
/// hidden-to-output projection.
#[derive(Debug, Clone, Copy)]
pub struct GridLstmGateIds {
    pub w_input: NodeId,
    pub w_forget: NodeId,
    pub w_output: NodeId,
    pub w_cand: NodeId,
    pub b_input: NodeId,
    pub b_forget: NodeId,
    pub b_output: NodeId,
    pub b_cand: NodeId,
    pub w_out: NodeId,
}

/// Both dimensions of a grid LSTM cell on the tape.
#[derive(Debug, Clone, Copy)]
pub struct GridLstmIds {
    pub dim1: GridLstmGateIds,
    pub dim2: GridLstmGateIds,
}

/// State nodes for one step (constants for the carried state, or nodes
/// produced by a previous step on the same tape).
#[derive(Debug, Clone, Copy)]
pub struct GridLstmStateIds {
    pub h1: NodeId,
    pub m1: NodeId,
    pub h2: NodeId,
    pub m2: NodeId,
}

impl GridLstmStateIds {
    pub fn constants(tape: &mut Tape, state: &GridLstmState) -> Self {
        GridLstmStateIds {
            h1: tape.constant(state.h1.clone()),
            m1: tape.constant(state.m1.clone()),
            h2: tape.constant(state.h2.clone()),
            m2: tape.constant(state.m2.clone()),
        }
    }
}

/// Outputs of one grid LSTM step: per-dimension feature projections and
/// the updated state nodes.
#[derive(Debug, Clone, Copy)]
pub struct GridLstmStep {
    pub f1: NodeId,
    pub f2: NodeId,
    pub state: GridLstmStateIds,
}

fn gate_dim(
    tape: &mut Tape,
    z: NodeId,
    input: NodeId,
    m: NodeId,
    gates: &GridLstmGateIds,
) -> Result<(NodeId, NodeId, NodeId)> {
    let zi = tape.concat_cols(z, input)?;
    let pre_i = tape.matmul(zi, gates.w_input)?;
    let pre_i = tape.add_row(pre_i, gates.b_input)?;
    let i = tape.sigmoid(pre_i);
    let pre_f = tape.matmul(zi, gates.w_forget)?;
    let pre_f = tape.add_row(pre_f, gates.b_forget)?;
    let f = tape.sigmoid(pre_f);
    let pre_o = tape.matmul(zi, gates.w_output)?;
    let pre_o = tape.add_row(pre_o, gates.b_output)?;
    let o = tape.sigmoid(pre_o);
    let pre_g = tape.matmul(zi, gates.w_cand)?;
    let pre_g = tape.add_row(pre_g, gates.b_cand)?;
    let g = tape.tanh(pre_g);

    let keep = tape.mul(f, m)?;
    let write = tape.mul(i, g)?;
    let m_next = tape.add(keep, write)?;
    let m_act = tape.tanh(m_next);
    let h_next = tape.mul(o, m_act)?;
    let f_out = tape.matmul(h_next, gates.w_out)?;
    Ok((h_next, m_next, f_out))
}

/// One step of the two-dimensional grid LSTM. The shared context is the
/// column concatenation of both hidden blocks; each dimension gates its
/// own memory against its own input stream.
pub fn grid_lstm_step(
    tape: &mut Tape,
    input1: NodeId,
    input2: NodeId,
    state: GridLstmStateIds,
    ids: &GridLstmIds,
) -> Result<GridLstmStep> {
    let shared = tape.concat_cols(state.h1, state.h2)?;
    let (h1, m1, f1) = gate_dim(tape, shared, input1, state.m1, &ids.dim1)?;
    let (h2, m2, f2) = gate_dim(tape, shared, input2, state.m2, &ids.dim2)?;
    Ok(GridLstmStep { f1, f2, state: GridLstmStateIds { h1, m1, h2, m2 } })
}

/// Run the social cell over a window's pedestrians. Dimension 1 carries
/// flattened trajectory embeddings, dimension 2 flattened vislet
/// embeddings (zeros when absent). Returns the social feature grid and
/// the updated state.
pub fn encode_social(
    tape: &mut Tape,
    traj_feats: NodeId,
    vis_feats: NodeId,
    state: GridLstmStateIds,
    ids: &GridLstmIds,
) -> Result<GridLstmStep> {
    grid_lstm_step(tape, traj_feats, vis_feats, state, ids)
}

/// Static-context encoding: one 3x3 convolution over the scene,
/// average-pooled to 8x8, additively modulated by a learned projection
/// of the social features, then gated by the grid mask.
#[allow(clippy::too_many_arguments)]
pub fn encode_context(
    tape: &mut Tape,
    scene: &SceneMap,
    f_s: NodeId,
    h_s: NodeId,
    mask: &GridMask,
    kernel: NodeId,
    bias: NodeId,
    w_proj: NodeId,
) -> Result<NodeId> {
    let scene_node = tape.constant(scene.cells.clone());
    let conv = tape.conv3x3(scene_node, kernel, bias)?;
    let pooled = tape.avg_pool(conv, CTX_SIDE, CTX_SIDE)?;

    // mean social feature row, projected onto the context grid
    let n = tape.value(f_s).rows();
    let feats = tape.concat_cols(f_s, h_s)?;
    let mean_row = tape.constant(Dense2D::filled(1, n, 1.0 / n as f64));
    let mean = tape.matmul(mean_row, feats)?;
    let proj = tape.matmul(mean, w_proj)?;
    let proj_grid = tape.reshape(proj, CTX_SIDE, CTX_SIDE)?;

    let modulated = tape.add(pooled, proj_grid)?;
    let mask_node = tape.constant(mask.cells.clone());
    tape.mul(modulated, mask_node)
}

/// Broadcast the flattened context map to one row per pedestrian.
pub fn broadcast_context(tape: &mut Tape, c_map: NodeId, n: usize) -> Result<NodeId> {
    let flat = tape.reshape(c_map, 1, CTX_FEAT)?;
    let ones = tape.constant(Dense2D::filled(n, 1, 1.0));
    tape.matmul(ones, flat)
}

/// Visuospatial encoding: a grid LSTM step whose dimension 1 reads the
/// broadcast context map and dimension 2 the vislet features.
pub fn encode_visuospatial(
    tape: &mut Tape,
    c_map: NodeId,
    vis_feats: NodeId,
    state: GridLstmStateIds,
    ids: &GridLstmIds,
) -> Result<GridLstmStep> {
    let n = tape.value(vis_feats).rows();
    let ctx_rows = broadcast_context(tape, c_map, n)?;
    grid_lstm_step(tape, ctx_rows, vis_feats, state, ids)
}

/// Final neighborhood representation F = f_S . f_O^T, the
/// pedestrian-pairwise coupling map.
pub fn combine_neighborhood(tape: &mut Tape, f_s: NodeId, f_o: NodeId) -> Result<NodeId> {
    let f_o_t = tape.transpose(f_o);
    tape.matmul(f_s, f_o_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_gradients;

    fn ident_extension(rows: usize, cols: usize) -> Dense2D {
        Dense2D::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn embed_zero_trajectory_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::zeros(8, 2));
        let wl = t.constant(Dense2D::filled(10, 8, 0.3));
        let wr = t.constant(Dense2D::filled(2, 10, -0.7));
        let e = embed_trajectory(&mut t, x, wl, wr).unwrap();
        assert_eq!(t.value(e).shape(), (10, 10));
        assert_eq!(t.value(e).max_abs(), 0.0);
    }

    #[test]
    fn embed_identity_extension_copies_block() {
        let mut t = Tape::new();
        let x_val = Dense2D::from_fn(8, 2, |i, j| (i * 2 + j) as f64);
        let x = t.constant(x_val.clone());
        let wl = t.constant(ident_extension(10, 8));
        let wr = t.constant(ident_extension(2, 10));
        let e = embed_trajectory(&mut t, x, wl, wr).unwrap();
        for i in 0..8 {
            for j in 0..2 {
                assert_eq!(t.value(e).get(i, j), x_val.get(i, j));
            }
        }
        assert_eq!(t.value(e).get(9, 9), 0.0);
    }

    #[test]
    fn embed_matches_product_oracle() {
        let mut t = Tape::new();
        let mut s = 5u64;
        let mut r = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x_val = Dense2D::from_fn(8, 2, |_, _| r());
        let wl_val = Dense2D::from_fn(10, 8, |_, _| r());
        let wr_val = Dense2D::from_fn(2, 10, |_, _| r());
        let x = t.constant(x_val.clone());
        let wl = t.constant(wl_val.clone());
        let wr = t.constant(wr_val.clone());
        let e = embed_trajectory(&mut t, x, wl, wr).unwrap();
        let oracle = wl_val.matmul(&x_val).unwrap().matmul(&wr_val).unwrap();
        for (a, b) in t.value(e).values().iter().zip(oracle.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_vislets_identity_extension() {
        let mut t = Tape::new();
        let v_val = Dense2D::from_fn(8, 2, |i, j| (i * 2 + j) as f64 * 0.1);
        let v = t.constant(v_val.clone());
        let w = t.constant(ident_extension(8, 10));
        let e = embed_vislets(&mut t, v, w).unwrap();
        assert_eq!(t.value(e).shape(), (2, 10));
        for i in 0..2 {
            for j in 0..8 {
                assert_eq!(t.value(e).get(i, j), v_val.get(j, i));
            }
        }
    }

    #[test]
    fn fuse_shapes() {
        let mut t = Tape::new();
        let x = t.constant(Dense2D::zeros(10, 10));
        let v = t.constant(Dense2D::zeros(2, 10));
        let f = fuse_inputs(&mut t, x, Some(v)).unwrap();
        assert_eq!(t.value(f).shape(), (12, 10));
        let alone = fuse_inputs(&mut t, x, None).unwrap();
        assert_eq!(alone, x);
    }

    #[test]
    fn pad_observation_repeats_first_position() {
        let obs = Dense2D::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let padded = pad_observation(&obs).unwrap();
        assert_eq!(padded.shape(), (8, 2));
        for i in 0..4 {
            assert_eq!(padded.row(i), &[1.0, 2.0]);
        }
        assert_eq!(padded.row(7), &[7.0, 8.0]);
    }

    fn zero_gates(t: &mut Tape, hidden: usize, input: usize, out: usize) -> GridLstmGateIds {
        let zcols = 2 * hidden + input;
        GridLstmGateIds {
            w_input: t.param(Dense2D::zeros(zcols, hidden)),
            w_forget: t.param(Dense2D::zeros(zcols, hidden)),
            w_output: t.param(Dense2D::zeros(zcols, hidden)),
            w_cand: t.param(Dense2D::zeros(zcols, hidden)),
            b_input: t.param(Dense2D::zeros(1, hidden)),
            b_forget: t.param(Dense2D::zeros(1, hidden)),
            b_output: t.param(Dense2D::zeros(1, hidden)),
            b_cand: t.param(Dense2D::zeros(1, hidden)),
            w_out: t.param(Dense2D::zeros(hidden, out)),
        }
    }

    #[test]
    fn zero_weights_halve_memory() {
        // with all weights zero: i=f=o=0.5, g=0, so m' = m/2 and
        // h' = 0.5 tanh(m/2)
        let (n, hidden) = (3, 4);
        let mut t = Tape::new();
        let ids = GridLstmIds {
            dim1: zero_gates(&mut t, hidden, 2, 2),
            dim2: zero_gates(&mut t, hidden, 2, 2),
        };
        let mut state = GridLstmState::zeros(n, hidden);
        state.m1 = Dense2D::from_fn(n, hidden, |i, j| (i + j) as f64 * 0.3 - 0.5);
        let sids = GridLstmStateIds::constants(&mut t, &state);
        let in1 = t.constant(Dense2D::zeros(n, 2));
        let in2 = t.constant(Dense2D::zeros(n, 2));
        let step = grid_lstm_step(&mut t, in1, in2, sids, &ids).unwrap();
        for i in 0..n {
            for j in 0..hidden {
                let m = state.m1.get(i, j);
                assert!((t.value(step.state.m1).get(i, j) - 0.5 * m).abs() < 1e-12);
                let expect_h = 0.5 * (0.5 * m).tanh();
                assert!((t.value(step.state.h1).get(i, j) - expect_h).abs() < 1e-12);
            }
        }
        assert_eq!(t.value(step.f1).max_abs(), 0.0);
    }

    #[test]
    fn zero_everything_gives_zero_outputs() {
        let mut t = Tape::new();
        let ids = GridLstmIds {
            dim1: zero_gates(&mut t, 2, 3, 2),
            dim2: zero_gates(&mut t, 2, 3, 2),
        };
        let sids = GridLstmStateIds::constants(&mut t, &GridLstmState::zeros(2, 2));
        let in1 = t.constant(Dense2D::zeros(2, 3));
        let in2 = t.constant(Dense2D::zeros(2, 3));
        let step = grid_lstm_step(&mut t, in1, in2, sids, &ids).unwrap();
        assert_eq!(t.value(step.f1).max_abs(), 0.0);
        assert_eq!(t.value(step.f2).max_abs(), 0.0);
        assert_eq!(t.value(step.state.h1).max_abs(), 0.0);
    }

    #[test]
    fn scalar_cell_matches_hand_computed_oracle() {
        // n=1, hidden=1, inputs scalar: every gate is a scalar affine map
        let (wi, wf, wo, wg) = (0.3, -0.2, 0.5, 0.7);
        let (bi, bf, bo, bg) = (0.1, 0.2, -0.1, 0.05);
        let (h1v, m1v, h2v, x1) = (0.4, -0.3, 0.2, 0.9);
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());

        let mut t = Tape::new();
        let fill = |t: &mut Tape, zc: usize, v: f64| t.param(Dense2D::filled(zc, 1, v));
        let gates1 = GridLstmGateIds {
            w_input: fill(&mut t, 3, wi),
            w_forget: fill(&mut t, 3, wf),
            w_output: fill(&mut t, 3, wo),
            w_cand: fill(&mut t, 3, wg),
            b_input: t.param(Dense2D::filled(1, 1, bi)),
            b_forget: t.param(Dense2D::filled(1, 1, bf)),
            b_output: t.param(Dense2D::filled(1, 1, bo)),
            b_cand: t.param(Dense2D::filled(1, 1, bg)),
            w_out: t.param(Dense2D::filled(1, 1, 1.0)),
        };
        let gates2 = zero_gates(&mut t, 1, 1, 1);
        let ids = GridLstmIds { dim1: gates1, dim2: gates2 };
        let mut state = GridLstmState::zeros(1, 1);
        state.h1.set(0, 0, h1v);
        state.m1.set(0, 0, m1v);
        state.h2.set(0, 0, h2v);
        let sids = GridLstmStateIds::constants(&mut t, &state);
        let in1 = t.constant(Dense2D::filled(1, 1, x1));
        let in2 = t.constant(Dense2D::zeros(1, 1));
        let step = grid_lstm_step(&mut t, in1, in2, sids, &ids).unwrap();

        // oracle: z = [h1, h2, x1], gate pre-activation = w * sum(z) + b
        let zsum = h1v + h2v + x1;
        let i = sig(wi * zsum + bi);
        let f = sig(wf * zsum + bf);
        let o = sig(wo * zsum + bo);
        let g = (wg * zsum + bg).tanh();
        let m_next = f * m1v + i * g;
        let h_next = o * m_next.tanh();
        assert!((t.value(step.state.m1).get(0, 0) - m_next).abs() < 1e-12);
        assert!((t.value(step.state.h1).get(0, 0) - h_next).abs() < 1e-12);
        assert!((t.value(step.f1).get(0, 0) - h_next).abs() < 1e-12);
    }

    #[test]
    fn hidden_states_bounded_by_one() {
        let mut t = Tape::new();
        let mut s = 77u64;
        let mut r = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 6.0
        };
        let zc = 2 * 3 + 2;
        let big_gates = |t: &mut Tape, r: &mut dyn FnMut() -> f64| GridLstmGateIds {
            w_input: t.param(Dense2D::from_fn(zc, 3, |_, _| r())),
            w_forget: t.param(Dense2D::from_fn(zc, 3, |_, _| r())),
            w_output: t.param(Dense2D::from_fn(zc, 3, |_, _| r())),
            w_cand: t.param(Dense2D::from_fn(zc, 3, |_, _| r())),
            b_input: t.param(Dense2D::from_fn(1, 3, |_, _| r())),
            b_forget: t.param(Dense2D::from_fn(1, 3, |_, _| r())),
            b_output: t.param(Dense2D::from_fn(1, 3, |_, _| r())),
            b_cand: t.param(Dense2D::from_fn(1, 3, |_, _| r())),
            w_out: t.param(Dense2D::from_fn(3, 2, |_, _| r())),
        };
        let ids = GridLstmIds { dim1: big_gates(&mut t, &mut r), dim2: big_gates(&mut t, &mut r) };
        let mut sids = GridLstmStateIds::constants(&mut t, &GridLstmState::zeros(4, 3));
        for _ in 0..5 {
            let in1 = t.constant(Dense2D::from_fn(4, 2, |_, _| r()));
            let in2 = t.constant(Dense2D::from_fn(4, 2, |_, _| r()));
            let step = grid_lstm_step(&mut t, in1, in2, sids, &ids).unwrap();
            sids = step.state;
            assert!(t.value(sids.h1).max_abs() <= 1.0);
            assert!(t.value(sids.h2).max_abs() <= 1.0);
        }
    }

    #[test]
    fn context_zero_mask_zeroes_map() {
        let mut t = Tape::new();
        let scene = SceneMap::uniform(16, 16, 0.5);
        let f_s = t.constant(Dense2D::zeros(4, 2));
        let h_s = t.constant(Dense2D::zeros(4, 3));
        // a mask of zeros is invalid via GridMask::new; build directly
        let mask = GridMask { cells: Dense2D::zeros(8, 8) };
        let kernel = t.param(Dense2D::filled(3, 3, 0.2));
        let bias = t.param(Dense2D::filled(1, 1, 0.3));
        let w_proj = t.param(Dense2D::filled(5, 64, 0.1));
        let c = encode_context(&mut t, &scene, f_s, h_s, &mask, kernel, bias, w_proj).unwrap();
        assert_eq!(t.value(c).max_abs(), 0.0);
    }

    #[test]
    fn context_zero_kernel_leaves_bias() {
        let mut t = Tape::new();
        let scene = SceneMap::uniform(16, 16, 0.7);
        let f_s = t.constant(Dense2D::zeros(4, 2));
        let h_s = t.constant(Dense2D::zeros(4, 3));
        let mask = GridMask::all_active();
        let kernel = t.param(Dense2D::zeros(3, 3));
        let bias = t.param(Dense2D::filled(1, 1, 0.25));
        let w_proj = t.param(Dense2D::zeros(5, 64));
        let c = encode_context(&mut t, &scene, f_s, h_s, &mask, kernel, bias, w_proj).unwrap();
        for v in t.value(c).values() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn context_rejects_tiny_scene() {
        let mut t = Tape::new();
        let scene = SceneMap::uniform(2, 2, 0.5);
        let f_s = t.constant(Dense2D::zeros(1, 1));
        let h_s = t.constant(Dense2D::zeros(1, 1));
        let mask = GridMask::all_active();
        let kernel = t.param(Dense2D::zeros(3, 3));
        let bias = t.param(Dense2D::zeros(1, 1));
        let w_proj = t.param(Dense2D::zeros(2, 64));
        assert!(encode_context(&mut t, &scene, f_s, h_s, &mask, kernel, bias, w_proj).is_err());
    }

    #[test]
    fn combine_neighborhood_shape_and_zero_rows() {
        let mut t = Tape::new();
        let mut f_s_val = Dense2D::filled(5, 3, 1.0);
        for j in 0..3 {
            f_s_val.set(2, j, 0.0);
        }
        let f_s = t.constant(f_s_val);
        let f_o = t.constant(Dense2D::filled(5, 3, 2.0));
        let f = combine_neighborhood(&mut t, f_s, f_o).unwrap();
        assert_eq!(t.value(f).shape(), (5, 5));
        for j in 0..5 {
            assert_eq!(t.value(f).get(2, j), 0.0);
        }
    }

    #[test]
    fn grid_lstm_gradients_match_finite_differences() {
        // small cell: n=2, hidden=2, inputs 2 wide; all weight blocks tracked
        let zc = 2 * 2 + 2;
        let mut s = 31u64;
        let mut r = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let blocks: Vec<Dense2D> = (0..9)
            .map(|k| match k {
                0..=3 => Dense2D::from_fn(zc, 2, |_, _| r()),
                4..=7 => Dense2D::from_fn(1, 2, |_, _| r()),
                _ => Dense2D::from_fn(2, 2, |_, _| r()),
            })
            .collect();
        let in1_val = Dense2D::from_fn(2, 2, |_, _| r());
        let in2_val = Dense2D::from_fn(2, 2, |_, _| r());
        let check = check_gradients(&blocks, |t, p| {
            let gates1 = GridLstmGateIds {
                w_input: p[0],
                w_forget: p[1],
                w_output: p[2],
                w_cand: p[3],
                b_input: p[4],
                b_forget: p[5],
                b_output: p[6],
                b_cand: p[7],
                w_out: p[8],
            };
            let gates2 = gates1;
            let ids = GridLstmIds { dim1: gates1, dim2: gates2 };
            let sids = GridLstmStateIds::constants(t, &GridLstmState::zeros(2, 2));
            let in1 = t.constant(in1_val.clone());
            let in2 = t.constant(in2_val.clone());
            let step = grid_lstm_step(t, in1, in2, sids, &ids)?;
            let both = t.add(step.f1, step.f2)?;
            Ok(t.sum(both))
        })
        .unwrap();
        assert!(check.passed(), "max rel err {}", check.max_rel_err);
    }
}
