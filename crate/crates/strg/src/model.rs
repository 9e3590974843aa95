//! Model assembly: the named parameter set, per-variant parameter
//! shapes, and the full forward pass over one trajectory window.
//!
//! Every window is padded to a fixed crowd capacity so parameter shapes
//! do not depend on how many pedestrians a window happens to hold;
//! padded rows are masked out of the loss and all reported metrics.

use crate::data::{GridMask, SceneMap, TrajectoryWindow};
use crate::encoders::{
    self, GridLstmGateIds, GridLstmIds, GridLstmState, GridLstmStateIds, StateInit, CTX_FEAT,
    CTX_SIDE, TRAJ_FEAT, VIS_FEAT,
};
use crate::error::{Error, Result};
use crate::kernel::{self, BaseAdjacency, DecodeMode, VariantId};
use crate::numerics::{Dense2D, NmfOptions, NodeId, Tape};
use crate::recommender::{self, ProposalBand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ordered, named parameter blocks. Order is fixed at construction and
/// defines the checkpoint layout.
#[derive(Debug, Clone)]
pub struct ParamSet {
    entries: Vec<(String, Dense2D)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn insert(&mut self, name: &str, value: Dense2D) {
        debug_assert!(self.get(name).is_none(), "duplicate parameter {name}");
        self.entries.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<&Dense2D> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Dense2D> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Dense2D)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Dense2D)> {
        self.entries.iter_mut().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.rows() * v.cols()).sum()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Architecture and size configuration.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub variant: VariantId,
    /// Crowd capacity per window; windows are padded up to this.
    pub max_size: usize,
    /// Hidden width of each grid LSTM dimension.
    pub hidden: usize,
    /// Feature width produced by each cell.
    pub out: usize,
    /// Future steps decoded per pedestrian.
    pub pred_len: usize,
    /// Width of the decoder's intermediate layer.
    pub decoder_hidden: usize,
    /// Proposals per recommender band.
    pub band_size: usize,
    pub decode: DecodeMode,
    /// Initialization of the visuospatial cell's carried state.
    pub state_init: StateInit,
    pub nmf: NmfOptions,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: VariantId::Str,
            max_size: 20,
            hidden: 128,
            out: 8,
            pred_len: 12,
            decoder_hidden: 64,
            band_size: 20,
            decode: DecodeMode::Residual,
            state_init: StateInit::Gaussian,
            nmf: NmfOptions::default(),
            init_scale: 0.1,
            seed: 7,
        }
    }
}

impl ModelConfig {
    /// Width of the social/vislet block fed to the fused feature map.
    fn social_vis_width(&self) -> usize {
        if self.variant.spec().vislets {
            self.out + VIS_FEAT
        } else {
            self.out
        }
    }

    /// Width of the decoder input for this variant.
    fn decoder_input_width(&self) -> usize {
        if self.variant.spec().recommender {
            self.out
        } else {
            self.max_size
        }
    }
}

/// Carried state between consecutive windows.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Social cell state.
    pub nu: GridLstmState,
    /// Visuospatial cell state.
    pub omega: GridLstmState,
}

impl ModelState {
    pub fn init(config: &ModelConfig) -> Self {
        ModelState {
            nu: GridLstmState::zeros(config.max_size, config.hidden),
            omega: GridLstmState::init(
                config.state_init,
                config.max_size,
                config.hidden,
                config.seed ^ 0x9e3779b97f4a7c15,
            ),
        }
    }
}

/// A trained (or training) model: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

fn init_cell(params: &mut ParamSet, prefix: &str, in1: usize, in2: usize, hidden: usize, out: usize, rng: &mut ChaCha8Rng, scale: f64) {
    for (dim, input) in [(1usize, in1), (2usize, in2)] {
        let zc = 2 * hidden + input;
        for gate in ["input", "forget", "output", "cand"] {
            params.insert(&format!("{prefix}.d{dim}.w_{gate}"), uniform(zc, hidden, rng, scale));
            params.insert(&format!("{prefix}.d{dim}.b_{gate}"), Dense2D::zeros(1, hidden));
        }
        params.insert(&format!("{prefix}.d{dim}.w_out"), uniform(hidden, out, rng, scale));
    }
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng, scale: f64) -> Dense2D {
    let mut m = Dense2D::zeros(rows, cols);
    for v in m.values_mut() {
        *v = rng.gen_range(-scale..=scale);
    }
    m
}

impl Model {
    /// Build a model with seeded uniform weights and zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.max_size == 0 || config.hidden == 0 || config.out == 0 || config.pred_len == 0 {
            return Err(Error::Usage("model dimensions must be positive".into()));
        }
        let spec = config.variant.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = config.init_scale;
        let mut params = ParamSet::new();

        params.insert("embed.w_left", uniform(10, 8, &mut rng, scale));
        params.insert("embed.w_right", uniform(2, 10, &mut rng, scale));
        if spec.vislets {
            params.insert("embed.w_vis", uniform(8, 10, &mut rng, scale));
        }

        init_cell(&mut params, "nu", TRAJ_FEAT, VIS_FEAT, config.hidden, config.out, &mut rng, scale);

        if spec.scene {
            params.insert("ctx.kernel", uniform(3, 3, &mut rng, scale));
            params.insert("ctx.bias", Dense2D::zeros(1, 1));
            params.insert("ctx.w_proj", uniform(config.out + config.hidden, CTX_FEAT, &mut rng, scale));
        }
        if spec.visuospatial {
            init_cell(&mut params, "omega", CTX_FEAT, VIS_FEAT, config.hidden, config.out, &mut rng, scale);
        }

        let n = config.max_size;
        if spec.recommender {
            params.insert("kern.w_v", uniform(config.social_vis_width(), n, &mut rng, scale));
            params.insert("kern.b_v", Dense2D::zeros(1, n));
            params.insert("kern.w_r", uniform(n, n, &mut rng, scale));
            params.insert("kern.w_couple", uniform(config.out, config.out, &mut rng, scale));
            params.insert("rec.w_hs", uniform(2 * config.hidden, config.out, &mut rng, scale));
        } else {
            params.insert("kern.w_ctx", uniform(n, n, &mut rng, scale));
            params.insert("kern.b_ctx", Dense2D::zeros(1, n));
        }

        params.insert(
            "dec.w_c",
            uniform(config.decoder_input_width(), config.decoder_hidden, &mut rng, scale),
        );
        params.insert(
            "dec.w_o",
            uniform(config.decoder_hidden, 2 * config.pred_len, &mut rng, scale),
        );

        Ok(Model { config, params })
    }
}

/// Per-forward options.
#[derive(Debug, Clone)]
pub struct ForwardOptions {
    /// Apply dropout masks to the cell outputs.
    pub training: bool,
    pub dropout_keep: f64,
    pub dropout_seed: u64,
    /// Base seed for the proposal band.
    pub band_seed: u64,
    /// Score proposals and build a loss against the window's future
    /// block. When false (blind inference) the first proposal is kept
    /// and no loss node is produced.
    pub use_ground_truth: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            training: false,
            dropout_keep: 0.8,
            dropout_seed: 0,
            band_seed: 0,
            use_ground_truth: true,
        }
    }
}

/// Everything produced by one forward pass.
pub struct Forward {
    pub tape: Tape,
    /// Tracked parameter nodes, in checkpoint order.
    pub param_nodes: Vec<(String, NodeId)>,
    /// Selected flattened prediction, capacity x 2*pred.
    pub prediction: NodeId,
    /// Decoded pred x 2 trajectories for the real pedestrians.
    pub trajectories: Vec<Dense2D>,
    /// Scored proposal band (recommender variants with ground truth).
    pub band: Option<ProposalBand>,
    /// Index of the selected proposal (0 outside recommender variants).
    pub selected: usize,
    /// Scalar loss node when ground truth was used and at least one
    /// future step is present.
    pub loss: Option<NodeId>,
    /// Masked mean displacement of the selected prediction.
    pub displacement: Option<f64>,
    pub next_state: ModelState,
}

fn node(map: &[(String, NodeId)], name: &str) -> NodeId {
    map.iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("parameter {name} missing from tape"))
        .1
}

fn cell_ids(map: &[(String, NodeId)], prefix: &str) -> GridLstmIds {
    let dim = |d: usize| GridLstmGateIds {
        w_input: node(map, &format!("{prefix}.d{d}.w_input")),
        w_forget: node(map, &format!("{prefix}.d{d}.w_forget")),
        w_output: node(map, &format!("{prefix}.d{d}.w_output")),
        w_cand: node(map, &format!("{prefix}.d{d}.w_cand")),
        b_input: node(map, &format!("{prefix}.d{d}.b_input")),
        b_forget: node(map, &format!("{prefix}.d{d}.b_forget")),
        b_output: node(map, &format!("{prefix}.d{d}.b_output")),
        b_cand: node(map, &format!("{prefix}.d{d}.b_cand")),
        w_out: node(map, &format!("{prefix}.d{d}.w_out")),
    };
    GridLstmIds { dim1: dim(1), dim2: dim(2) }
}

/// Masked mean Euclidean displacement of a flattened prediction block
/// against a window's future block. `None` when no step is present.
pub fn masked_mean_displacement(pred: &Dense2D, window: &TrajectoryWindow) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, mask) in window.presence.iter().enumerate() {
        for (s, &present) in mask.iter().enumerate() {
            if !present {
                continue;
            }
            let dx = pred.get(p, 2 * s) - window.future[p].get(s, 0);
            let dy = pred.get(p, 2 * s + 1) - window.future[p].get(s, 1);
            total += (dx * dx + dy * dy).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        None
    } else {
        Some(total / count as f64)
    }
}

fn dropout_mask(n: usize, cols: usize, keep: f64, rng: &mut ChaCha8Rng) -> Dense2D {
    let mut m = Dense2D::zeros(n, cols);
    for v in m.values_mut() {
        *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
    }
    m
}

/// Tape-side masked mean displacement: per-step Euclidean distances,
/// masked by presence, averaged over the present steps.
fn loss_node(
    tape: &mut Tape,
    pred: NodeId,
    window: &TrajectoryWindow,
    capacity: usize,
) -> Result<Option<NodeId>> {
    let l = window.pred_len();
    let truth = Dense2D::from_fn(capacity, 2 * l, |p, j| {
        if p < window.future.len() {
            window.future[p].get(j / 2, j % 2)
        } else {
            0.0
        }
    });
    let mask = Dense2D::from_fn(capacity, l, |p, s| {
        if p < window.presence.len() && window.presence[p][s] {
            1.0
        } else {
            0.0
        }
    });
    let count = mask.sum();
    if count == 0.0 {
        return Ok(None);
    }
    // pair selector folds (x, y) squared differences into one column
    let selector = Dense2D::from_fn(2 * l, l, |j, s| if j / 2 == s { 1.0 } else { 0.0 });

    let truth = tape.constant(truth);
    let diff = tape.sub(pred, truth)?;
    let sq = tape.mul(diff, diff)?;
    let sel = tape.constant(selector);
    let dist2 = tape.matmul(sq, sel)?;
    let dist = tape.sqrt(dist2)?;
    let mask = tape.constant(mask);
    let masked = tape.mul(dist, mask)?;
    let total = tape.sum(masked);
    Ok(Some(tape.scale(total, 1.0 / count)))
}

impl Model {
    /// Run the full pipeline over one window and (optionally) build the
    /// training loss. The returned tape backpropagates through the
    /// selected proposal's branch.
    pub fn forward(
        &self,
        window: &TrajectoryWindow,
        scene: Option<&SceneMap>,
        mask: Option<&GridMask>,
        state: &ModelState,
        opts: &ForwardOptions,
    ) -> Result<Forward> {
        let spec = self.config.variant.spec();
        let capacity = self.config.max_size;
        let n_real = window.ped_ids.len();
        if n_real == 0 {
            return Err(Error::Usage("window holds no pedestrians".into()));
        }
        if n_real > capacity {
            return Err(Error::Usage(format!(
                "window holds {} pedestrians, capacity is {}",
                n_real, capacity
            )));
        }
        if window.pred_len() != self.config.pred_len {
            return Err(Error::Usage(format!(
                "window predicts {} steps, model decodes {}",
                window.pred_len(),
                self.config.pred_len
            )));
        }
        if spec.vislets && window.vislets.is_none() {
            return Err(Error::Usage(format!(
                "variant {} requires vislet columns, none in the stream",
                self.config.variant
            )));
        }
        if spec.scene && scene.is_none() {
            return Err(Error::Usage(format!(
                "variant {} requires a scene map",
                self.config.variant
            )));
        }

        let mut tape = Tape::new();
        let param_nodes: Vec<(String, NodeId)> = self
            .params
            .iter()
            .map(|(name, value)| (name.to_string(), tape.param(value.clone())))
            .collect();
        let map = &param_nodes;

        // per-pedestrian embeddings, padded to capacity
        let w_left = node(map, "embed.w_left");
        let w_right = node(map, "embed.w_right");
        let mut traj_feats: Option<NodeId> = None;
        for p in 0..capacity {
            let row = if p < n_real {
                let padded = encoders::pad_observation(&window.observed[p])?;
                let x = tape.constant(padded);
                let e = encoders::embed_trajectory(&mut tape, x, w_left, w_right)?;
                tape.reshape(e, 1, TRAJ_FEAT)?
            } else {
                tape.constant(Dense2D::zeros(1, TRAJ_FEAT))
            };
            traj_feats = Some(match traj_feats {
                Some(acc) => tape.concat_rows(acc, row)?,
                None => row,
            });
        }
        let traj_feats = traj_feats.expect("capacity >= 1");

        let vis_feats = if spec.vislets {
            let w_vis = node(map, "embed.w_vis");
            let vislets = window.vislets.as_ref().expect("checked above");
            let mut acc: Option<NodeId> = None;
            for p in 0..capacity {
                let row = if p < n_real {
                    let padded = encoders::pad_observation(&vislets[p])?;
                    let v = tape.constant(padded);
                    let e = encoders::embed_vislets(&mut tape, v, w_vis)?;
                    tape.reshape(e, 1, VIS_FEAT)?
                } else {
                    tape.constant(Dense2D::zeros(1, VIS_FEAT))
                };
                acc = Some(match acc {
                    Some(a) => tape.concat_rows(a, row)?,
                    None => row,
                });
            }
            acc.expect("capacity >= 1")
        } else {
            tape.constant(Dense2D::zeros(capacity, VIS_FEAT))
        };

        // social cell
        let nu_ids = cell_ids(map, "nu");
        let nu_state = GridLstmStateIds::constants(&mut tape, &state.nu);
        let nu_step = encoders::encode_social(&mut tape, traj_feats, vis_feats, nu_state, &nu_ids)?;
        let mut f_s = tape.add(nu_step.f1, nu_step.f2)?;

        // static context map
        let all_active = GridMask::all_active();
        let mask = mask.unwrap_or(&all_active);
        let c_map = if spec.scene {
            let scene = scene.expect("checked above");
            Some(encoders::encode_context(
                &mut tape,
                scene,
                f_s,
                nu_step.state.h1,
                mask,
                node(map, "ctx.kernel"),
                node(map, "ctx.bias"),
                node(map, "ctx.w_proj"),
            )?)
        } else if spec.visuospatial {
            Some(tape.constant(Dense2D::filled(CTX_SIDE, CTX_SIDE, 1.0)))
        } else {
            None
        };

        // visuospatial cell
        let omega_step = if spec.visuospatial {
            let omega_ids = cell_ids(map, "omega");
            let omega_state = GridLstmStateIds::constants(&mut tape, &state.omega);
            Some(encoders::encode_visuospatial(
                &mut tape,
                c_map.expect("visuospatial implies a context map"),
                vis_feats,
                omega_state,
                &omega_ids,
            )?)
        } else {
            None
        };
        let mut f_o = match &omega_step {
            Some(step) => tape.add(step.f1, step.f2)?,
            None => f_s,
        };

        if opts.training {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.dropout_seed);
            let m_s = dropout_mask(capacity, self.config.out, opts.dropout_keep, &mut rng);
            let m_o = dropout_mask(capacity, self.config.out, opts.dropout_keep, &mut rng);
            let m_s = tape.constant(m_s);
            let m_o = tape.constant(m_o);
            f_s = tape.mul(f_s, m_s)?;
            f_o = tape.mul(f_o, m_o)?;
        }

        let coupling = encoders::combine_neighborhood(&mut tape, f_s, f_o)?;
        let c_resized = match (spec.scene, c_map) {
            (true, Some(c)) => Some(tape.resize(c, capacity, capacity)?),
            _ => None,
        };

        let last_positions: Vec<(f64, f64)> = (0..capacity)
            .map(|p| if p < n_real { window.last_observed(p) } else { (0.0, 0.0) })
            .collect();
        let w_c = node(map, "dec.w_c");
        let w_o = node(map, "dec.w_o");
        let decode = |tape: &mut Tape, j: NodeId| {
            kernel::decode_trajectory(
                tape,
                j,
                w_c,
                w_o,
                &last_positions,
                self.config.pred_len,
                self.config.decode,
            )
        };

        let (prediction, band, selected) = if spec.recommender {
            // fused features and soft attention feed the proposal band
            let social_vis = if spec.vislets {
                tape.concat_cols(f_s, vis_feats)?
            } else {
                f_s
            };
            let f_hat = kernel::kernel_features(
                &mut tape,
                social_vis,
                coupling,
                node(map, "kern.w_v"),
                node(map, "kern.b_v"),
                node(map, "kern.w_r"),
                c_resized,
            )?;
            let attention = recommender::soft_attention(&mut tape, f_hat);
            let f_o_weighted = recommender::weight_context(&mut tape, attention, f_o)?;

            let hidden_cat = tape.concat_cols(nu_step.state.h1, nu_step.state.h2)?;
            let c_map_value = match c_map {
                Some(c) => tape.value(c).clone(),
                None => Dense2D::filled(CTX_SIDE, CTX_SIDE, 1.0),
            };
            let attention_value = tape.value(attention).clone();
            let hidden_value = tape.value(hidden_cat).clone();
            let proposals = recommender::generate_band(
                &attention_value,
                &c_map_value,
                &hidden_value,
                opts.band_seed,
                self.config.band_size,
                &self.config.nmf,
            )?;

            let w_hs = node(map, "rec.w_hs");
            let w_couple = node(map, "kern.w_couple");
            let mut branch_preds = Vec::with_capacity(proposals.len());
            let mut trajectories = Vec::with_capacity(proposals.len());
            let mut errors = Vec::with_capacity(proposals.len());
            for proposal in &proposals {
                let a = tape.constant(proposal.adjacency.clone());
                let mixed = tape.matmul(a, hidden_cat)?;
                let mixed = tape.matmul(mixed, w_hs)?;
                let f_s_p = tape.add(f_s, mixed)?;
                let base = tape.add(f_s_p, f_o_weighted)?;
                let j = kernel::interaction_gradient_node(&mut tape, base, w_couple)?;
                let pred = decode(&mut tape, j)?;
                let traj: Vec<Dense2D> = kernel::split_trajectories(tape.value(pred), self.config.pred_len)
                    [..n_real]
                    .to_vec();
                let err = if opts.use_ground_truth {
                    masked_mean_displacement(tape.value(pred), window).unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                };
                branch_preds.push(pred);
                trajectories.push(traj);
                errors.push(err);
            }
            let selected = if opts.use_ground_truth {
                recommender::select_best(&errors)?
            } else {
                0
            };
            let prediction = branch_preds[selected];
            let band = ProposalBand { proposals, trajectories, errors };
            (prediction, Some(band), selected)
        } else {
            let j = kernel::context_gradient(
                &mut tape,
                coupling,
                node(map, "kern.w_ctx"),
                node(map, "kern.b_ctx"),
                c_resized,
            )?;
            let prediction = decode(&mut tape, j)?;
            (prediction, None, 0usize)
        };

        let loss = if opts.use_ground_truth {
            loss_node(&mut tape, prediction, window, capacity)?
        } else {
            None
        };
        let displacement = masked_mean_displacement(tape.value(prediction), window);
        let trajectories: Vec<Dense2D> =
            kernel::split_trajectories(tape.value(prediction), self.config.pred_len)[..n_real]
                .to_vec();

        // carried state: the selected adjacency (or the variant's fixed
        // graph) mixes the social hidden blocks; memories stay per-ped
        let adjacency = if spec.recommender {
            band.as_ref().expect("recommender band").proposals[selected].adjacency.clone()
        } else {
            match spec.base_adjacency {
                BaseAdjacency::Identity => Dense2D::identity(capacity),
                BaseAdjacency::FullyConnected => {
                    Dense2D::filled(capacity, capacity, 1.0 / capacity as f64)
                }
            }
        };
        let nu_next = GridLstmState {
            h1: recommender::update_states(&adjacency, tape.value(nu_step.state.h1))?,
            m1: tape.value(nu_step.state.m1).clone(),
            h2: recommender::update_states(&adjacency, tape.value(nu_step.state.h2))?,
            m2: tape.value(nu_step.state.m2).clone(),
        };
        let omega_next = match &omega_step {
            Some(step) => GridLstmState {
                h1: tape.value(step.state.h1).clone(),
                m1: tape.value(step.state.m1).clone(),
                h2: tape.value(step.state.h2).clone(),
                m2: tape.value(step.state.m2).clone(),
            },
            None => state.omega.clone(),
        };

        Ok(Forward {
            tape,
            param_nodes,
            prediction,
            trajectories,
            band,
            selected,
            loss,
            displacement,
            next_state: ModelState { nu: nu_next, omega: omega_next },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_windows;
    use crate::data::FrameRecord;

    fn small_config(variant: VariantId) -> ModelConfig {
        ModelConfig {
            variant,
            max_size: 4,
            hidden: 6,
            out: 4,
            pred_len: 4,
            decoder_hidden: 5,
            band_size: 3,
            nmf: NmfOptions { max_iters: 30, tol: 1e-8 },
            seed: 11,
            ..ModelConfig::default()
        }
    }

    fn line_records(peds: usize, frames: usize, vislets: bool) -> Vec<FrameRecord> {
        let mut recs = Vec::new();
        for p in 0..peds {
            for f in 0..frames {
                recs.push(FrameRecord {
                    frame_id: f as i64,
                    ped_id: p as i64,
                    x: 0.5 * f as f64 + p as f64,
                    y: 0.25 * f as f64 - p as f64,
                    vislet: if vislets { Some((0.1 * p as f64, -0.05)) } else { None },
                });
            }
        }
        recs
    }

    fn one_window(peds: usize, vislets: bool) -> TrajectoryWindow {
        let recs = line_records(peds, 8, vislets);
        build_windows(&recs, 4, 4, 8, 20).unwrap().remove(0)
    }

    #[test]
    fn every_variant_constructs_with_finite_params() {
        for v in kernel::ALL_VARIANTS {
            let m = Model::new(small_config(v)).unwrap();
            assert!(m.params.len() > 10, "{v}");
            for (name, p) in m.params.iter() {
                assert!(p.is_finite(), "{v}: {name}");
            }
            let again = Model::new(small_config(v)).unwrap();
            for ((n1, p1), (n2, p2)) in m.params.iter().zip(again.params.iter()) {
                assert_eq!(n1, n2);
                assert_eq!(p1.values(), p2.values());
            }
        }
    }

    #[test]
    fn recommender_variants_have_no_context_gradient_weights() {
        let rec = Model::new(small_config(VariantId::Str)).unwrap();
        assert!(rec.params.get("kern.w_couple").is_some());
        assert!(rec.params.get("kern.w_ctx").is_none());
        let plain = Model::new(small_config(VariantId::St)).unwrap();
        assert!(plain.params.get("kern.w_ctx").is_some());
        assert!(plain.params.get("kern.w_couple").is_none());
        assert!(plain.params.get("rec.w_hs").is_none());
    }

    #[test]
    fn forward_plain_variant_shapes_and_backward() {
        let model = Model::new(small_config(VariantId::St)).unwrap();
        let window = one_window(2, false);
        let state = ModelState::init(&model.config);
        let fwd = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .unwrap();
        assert_eq!(fwd.trajectories.len(), 2);
        assert_eq!(fwd.trajectories[0].shape(), (4, 2));
        assert!(fwd.band.is_none());
        let loss = fwd.loss.expect("ground truth present");
        assert!(fwd.tape.value(loss).get(0, 0).is_finite());
        let grads = fwd.tape.backward(loss).unwrap();
        for (name, id) in &fwd.param_nodes {
            if let Some(g) = grads.get(*id) {
                assert!(g.is_finite(), "{name}");
            }
        }
        // decoder weights always sit on the loss path
        let wo = fwd.param_nodes.iter().find(|(n, _)| n == "dec.w_o").unwrap().1;
        assert!(grads.get(wo).unwrap().max_abs() > 0.0);
    }

    #[test]
    fn loss_matches_displacement_of_selected_prediction() {
        let model = Model::new(small_config(VariantId::St)).unwrap();
        let window = one_window(3, false);
        let state = ModelState::init(&model.config);
        let fwd = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .unwrap();
        let loss = fwd.tape.value(fwd.loss.unwrap()).get(0, 0);
        assert!((loss - fwd.displacement.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_decoder_residual_predicts_last_position() {
        let mut model = Model::new(small_config(VariantId::St)).unwrap();
        *model.params.get_mut("dec.w_o").unwrap() = Dense2D::zeros(5, 8);
        let window = one_window(2, false);
        let state = ModelState::init(&model.config);
        let fwd = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .unwrap();
        for (p, traj) in fwd.trajectories.iter().enumerate() {
            let (lx, ly) = window.last_observed(p);
            for s in 0..4 {
                assert_eq!(traj.get(s, 0), lx);
                assert_eq!(traj.get(s, 1), ly);
            }
        }
    }

    #[test]
    fn fully_connected_mixing_equalizes_hidden_rows() {
        let model = Model::new(small_config(VariantId::St)).unwrap();
        let window = one_window(3, false);
        let state = ModelState::init(&model.config);
        let fwd = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .unwrap();
        let h1 = &fwd.next_state.nu.h1;
        for i in 1..h1.rows() {
            for j in 0..h1.cols() {
                assert!((h1.get(i, j) - h1.get(0, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_mixing_keeps_rows_distinct() {
        let model = Model::new(small_config(VariantId::LstmO)).unwrap();
        let window = one_window(2, false);
        let state = ModelState::init(&model.config);
        let fwd = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .unwrap();
        // identity mixing returns the cell's own rows, which differ for
        // pedestrians with different inputs
        let h1 = &fwd.next_state.nu.h1;
        assert!((0..h1.cols()).any(|j| (h1.get(0, j) - h1.get(1, j)).abs() > 1e-9));
    }

    #[test]
    fn missing_required_inputs_are_usage_errors() {
        let model = Model::new(small_config(VariantId::StV)).unwrap();
        let window = one_window(2, false); // no vislets
        let state = ModelState::init(&model.config);
        let err = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .err()
            .expect("vislet-free stream must be rejected");
        assert!(matches!(err, Error::Usage(_)));

        let model = Model::new(small_config(VariantId::StGgrnn)).unwrap();
        let window = one_window(2, false);
        let err = model
            .forward(&window, None, None, &ModelState::init(&model.config), &ForwardOptions::default())
            .err()
            .expect("missing scene map must be rejected");
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn recommender_band_is_scored_and_selected() {
        let model = Model::new(small_config(VariantId::Str)).unwrap();
        let window = one_window(3, false);
        let state = ModelState::init(&model.config);
        let opts = ForwardOptions { band_seed: 5, ..ForwardOptions::default() };
        let fwd = model.forward(&window, None, None, &state, &opts).unwrap();
        let band = fwd.band.as_ref().unwrap();
        assert_eq!(band.proposals.len(), 3);
        assert_eq!(band.errors.len(), 3);
        assert_eq!(band.trajectories.len(), 3);
        // selection is the argmin of the band errors
        let best = recommender::select_best(&band.errors).unwrap();
        assert_eq!(fwd.selected, best);
        // the reported loss equals the selected proposal's error
        let loss = fwd.tape.value(fwd.loss.unwrap()).get(0, 0);
        assert!((loss - band.errors[best]).abs() < 1e-12);
        // trajectories of the selected branch are the reported ones
        for (a, b) in fwd.trajectories.iter().zip(&band.trajectories[best]) {
            assert_eq!(a.values(), b.values());
        }
        // backward through the selected branch succeeds
        let grads = fwd.tape.backward(fwd.loss.unwrap()).unwrap();
        let w_hs = fwd.param_nodes.iter().find(|(n, _)| n == "rec.w_hs").unwrap().1;
        assert!(grads.get(w_hs).is_some());
    }

    #[test]
    fn forward_is_deterministic() {
        let model = Model::new(small_config(VariantId::Str)).unwrap();
        let window = one_window(2, false);
        let state = ModelState::init(&model.config);
        let opts = ForwardOptions { band_seed: 9, ..ForwardOptions::default() };
        let a = model.forward(&window, None, None, &state, &opts).unwrap();
        let b = model.forward(&window, None, None, &state, &opts).unwrap();
        assert_eq!(a.selected, b.selected);
        for (x, y) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(x.values(), y.values());
        }
        assert_eq!(
            a.tape.value(a.loss.unwrap()).get(0, 0),
            b.tape.value(b.loss.unwrap()).get(0, 0)
        );
    }

    #[test]
    fn blind_inference_keeps_first_proposal_and_skips_loss() {
        let model = Model::new(small_config(VariantId::Str)).unwrap();
        let window = one_window(2, false);
        let state = ModelState::init(&model.config);
        let opts = ForwardOptions { use_ground_truth: false, ..ForwardOptions::default() };
        let fwd = model.forward(&window, None, None, &state, &opts).unwrap();
        assert_eq!(fwd.selected, 0);
        assert!(fwd.loss.is_none());
        assert!(fwd.band.unwrap().errors.iter().all(|e| e.is_nan()));
    }

    #[test]
    fn scene_variant_runs_with_map_and_vislets() {
        let model = Model::new(small_config(VariantId::StrGgrnnV)).unwrap();
        let window = one_window(2, true);
        let scene = SceneMap::uniform(16, 16, 0.5);
        let state = ModelState::init(&model.config);
        let fwd = model
            .forward(&window, Some(&scene), None, &state, &ForwardOptions::default())
            .unwrap();
        assert!(fwd.tape.value(fwd.loss.unwrap()).get(0, 0).is_finite());
        assert!(fwd.tape.first_non_finite().is_none());
    }

    #[test]
    fn dropout_changes_activations_but_not_eval_mode() {
        let model = Model::new(small_config(VariantId::St)).unwrap();
        let window = one_window(2, false);
        let state = ModelState::init(&model.config);
        let eval = model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .unwrap();
        let train_opts =
            ForwardOptions { training: true, dropout_seed: 3, ..ForwardOptions::default() };
        let train = model.forward(&window, None, None, &state, &train_opts).unwrap();
        let le = eval.tape.value(eval.loss.unwrap()).get(0, 0);
        let lt = train.tape.value(train.loss.unwrap()).get(0, 0);
        assert_ne!(le, lt);
        // same dropout seed reproduces the same masked loss
        let train2 = model.forward(&window, None, None, &state, &train_opts).unwrap();
        assert_eq!(lt, train2.tape.value(train2.loss.unwrap()).get(0, 0));
    }

    #[test]
    fn capacity_overflow_rejected() {
        let mut cfg = small_config(VariantId::St);
        cfg.max_size = 2;
        let model = Model::new(cfg).unwrap();
        let window = one_window(3, false);
        let state = ModelState::init(&model.config);
        assert!(model
            .forward(&window, None, None, &state, &ForwardOptions::default())
            .is_err());
    }
}
