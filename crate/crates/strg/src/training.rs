//! Online training: the displacement loss, dropout, one-update-per-window
//! streaming optimization with exponential learning-rate decay, run
//! logging, and binary checkpoints.

use crate::data::{GridMask, SceneMap, TrajectoryWindow};
use crate::encoders::StateInit;
use crate::error::{Error, Result};
use crate::eval;
use crate::kernel::{DecodeMode, VariantId};
use crate::model::{Forward, ForwardOptions, Model, ModelConfig, ModelState, ParamSet};
use crate::numerics::{apply_gradients, Dense2D, LrSchedule, NmfOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::io::{Read as _, Write as _};
use std::path::Path;

/// Training-loop configuration. Model architecture lives in
/// [`ModelConfig`]; this covers the optimization schedule.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub lr: f64,
    pub decay: f64,
    pub dropout_keep: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig { lr: 5e-3, decay: 0.95, dropout_keep: 0.8, epochs: 1, seed: 1234 }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Usage(format!(
                "dropout keep probability {} outside (0, 1]",
                self.dropout_keep
            )));
        }
        if self.lr <= 0.0 || self.decay <= 0.0 || self.epochs == 0 {
            return Err(Error::Usage("lr, decay, and epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { base: self.lr, decay: self.decay }
    }
}

/// Mean Euclidean displacement over the unmasked (pedestrian, step)
/// pairs — the training objective, identical to the ADE metric.
pub fn loss(pred: &[Dense2D], truth: &[Dense2D], presence: &[Vec<bool>]) -> Result<f64> {
    eval::ade(pred, truth, presence)
}

/// Inverted-scale dropout. During training each entry survives with
/// probability `keep` and is scaled by `1/keep`; at evaluation the
/// features pass through unchanged.
pub fn apply_dropout(features: &Dense2D, keep: f64, seed: u64, training: bool) -> Result<Dense2D> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::Usage(format!("dropout keep probability {} outside (0, 1]", keep)));
    }
    if !training || keep == 1.0 {
        return Ok(features.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = features.clone();
    for v in out.values_mut() {
        *v = if rng.gen::<f64>() < keep { *v / keep } else { 0.0 };
    }
    Ok(out)
}

/// Seed mixer for deriving independent per-step seeds.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Result of one training step.
pub struct StepOutcome {
    pub loss: f64,
    pub ade: f64,
    pub fde: f64,
    pub selected: usize,
    pub next_state: ModelState,
    pub forward: Forward,
}

/// One immediate update: forward (band generation and selection for
/// recommender variants), backward through the selected branch, SGD
/// step, and the carried-state handoff.
pub fn train_step(
    model: &mut Model,
    window: &TrajectoryWindow,
    scene: Option<&SceneMap>,
    mask: Option<&GridMask>,
    state: &ModelState,
    cfg: &TrainerConfig,
    lr: f64,
    step_index: u64,
) -> Result<StepOutcome> {
    cfg.validate()?;
    let opts = ForwardOptions {
        training: true,
        dropout_keep: cfg.dropout_keep,
        dropout_seed: mix_seed(cfg.seed, step_index.wrapping_mul(2)),
        band_seed: mix_seed(cfg.seed, step_index.wrapping_mul(2) + 1),
        use_ground_truth: true,
    };
    let fwd = model.forward(window, scene, mask, state, &opts)?;
    if let Some(idx) = fwd.tape.first_non_finite() {
        return Err(Error::NonFinite(format!(
            "forward produced a non-finite value at tape node {} (step {})",
            idx, step_index
        )));
    }

    let (loss_value, ade, fde) = match fwd.loss {
        Some(loss_node) => {
            let value = fwd.tape.value(loss_node).get(0, 0);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("loss is {} at step {}", value, step_index)));
            }
            let grads = fwd.tape.backward(loss_node)?;
            let updates = model
                .params
                .iter_mut()
                .zip(&fwd.param_nodes)
                .map(|((_, p), (_, id))| (p, grads.get(*id)));
            apply_gradients(updates, lr)?;
            let (a, f) = eval::window_metrics(&fwd.trajectories, window)?;
            (value, a, f)
        }
        // every future step masked: nothing to learn from this window
        None => (f64::NAN, f64::NAN, f64::NAN),
    };

    Ok(StepOutcome {
        loss: loss_value,
        ade,
        fde,
        selected: fwd.selected,
        next_state: fwd.next_state.clone(),
        forward: fwd,
    })
}

/// One row of a training run log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub window_id: u64,
    pub loss: f64,
    pub ade: f64,
    pub fde: f64,
    pub proposal_index: usize,
    pub wall_ms: f64,
}

/// Append-only training log with monotone window ids.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    records: Vec<RunRecord>,
}

impl RunLog {
    pub fn new() -> Self {
        RunLog { records: Vec::new() }
    }

    pub fn push(&mut self, record: RunRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.window_id > last.window_id, "run log ids must be monotone");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.records.last().map_or(0, |r| r.window_id + 1)
    }

    /// CSV serialization. Wall time can be excluded so logs from equal
    /// runs compare byte-for-byte.
    pub fn to_csv(&self, include_wall: bool) -> String {
        let mut out = String::from(if include_wall {
            "window_id,loss,ade,fde,proposal_idx,wall_ms\n"
        } else {
            "window_id,loss,ade,fde,proposal_idx\n"
        });
        for r in &self.records {
            if include_wall {
                let _ = writeln!(
                    out,
                    "{},{:.9},{:.9},{:.9},{},{:.3}",
                    r.window_id, r.loss, r.ade, r.fde, r.proposal_index, r.wall_ms
                );
            } else {
                let _ = writeln!(
                    out,
                    "{},{:.9},{:.9},{:.9},{}",
                    r.window_id, r.loss, r.ade, r.fde, r.proposal_index
                );
            }
        }
        out
    }
}

/// Stream the windows through the model for `cfg.epochs` passes, one
/// update per window, appending to `log` (ids continue monotonically).
/// The learning rate decays once per epoch; carried state resets at
/// each epoch boundary.
pub fn online_run(
    model: &mut Model,
    windows: &[TrajectoryWindow],
    scene: Option<&SceneMap>,
    mask: Option<&GridMask>,
    cfg: &TrainerConfig,
    log: &mut RunLog,
) -> Result<()> {
    cfg.validate()?;
    if windows.is_empty() {
        eprintln!("warning: training stream is empty, nothing to do");
        return Ok(());
    }
    let schedule = cfg.schedule();
    for epoch in 0..cfg.epochs {
        let lr = schedule.rate_at(epoch);
        let mut state = ModelState::init(&model.config);
        for window in windows {
            let id = log.next_id();
            let start = std::time::Instant::now();
            let outcome = train_step(model, window, scene, mask, &state, cfg, lr, id)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            state = outcome.next_state;
            log.push(RunRecord {
                window_id: id,
                loss: outcome.loss,
                ade: outcome.ade,
                fde: outcome.fde,
                proposal_index: outcome.selected,
                wall_ms,
            });
        }
    }
    Ok(())
}

const CKPT_MAGIC: &[u8; 8] = b"STRGCKPT";
const CKPT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format("checkpoint holds non-UTF-8 text".into()))
    }
}

/// Serialize a model (configuration plus named parameter blocks) into
/// the flat checkpoint layout.
pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let c = &model.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut buf, CKPT_VERSION);
    put_str(&mut buf, c.variant.name());
    for dim in [c.max_size, c.hidden, c.out, c.pred_len, c.decoder_hidden, c.band_size] {
        put_u32(&mut buf, dim as u32);
    }
    buf.push(match c.decode {
        DecodeMode::Residual => 0,
        DecodeMode::Absolute => 1,
    });
    buf.push(match c.state_init {
        StateInit::Zeros => 0,
        StateInit::Gaussian => 1,
    });
    put_u32(&mut buf, c.nmf.max_iters as u32);
    put_f64(&mut buf, c.nmf.tol);
    put_f64(&mut buf, c.init_scale);
    put_u64(&mut buf, c.seed);

    put_u32(&mut buf, model.params.len() as u32);
    for (name, block) in model.params.iter() {
        put_str(&mut buf, name);
        put_u32(&mut buf, block.rows() as u32);
        put_u32(&mut buf, block.cols() as u32);
        for &v in block.values() {
            put_f64(&mut buf, v);
        }
    }
    buf
}

/// Parse checkpoint bytes back into a model, validating the layout
/// against a freshly constructed parameter set for the same
/// configuration.
pub fn model_from_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CKPT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", version)));
    }
    let variant: VariantId = cur.str()?.parse()?;
    let max_size = cur.u32()? as usize;
    let hidden = cur.u32()? as usize;
    let out = cur.u32()? as usize;
    let pred_len = cur.u32()? as usize;
    let decoder_hidden = cur.u32()? as usize;
    let band_size = cur.u32()? as usize;
    let decode = match cur.take(1)?[0] {
        0 => DecodeMode::Residual,
        1 => DecodeMode::Absolute,
        b => return Err(Error::Format(format!("unknown decode mode {}", b))),
    };
    let state_init = match cur.take(1)?[0] {
        0 => StateInit::Zeros,
        1 => StateInit::Gaussian,
        b => return Err(Error::Format(format!("unknown state init {}", b))),
    };
    let nmf = NmfOptions { max_iters: cur.u32()? as usize, tol: cur.f64()? };
    let init_scale = cur.f64()?;
    let seed = cur.u64()?;
    let config = ModelConfig {
        variant,
        max_size,
        hidden,
        out,
        pred_len,
        decoder_hidden,
        band_size,
        decode,
        state_init,
        nmf,
        init_scale,
        seed,
    };

    let expected = Model::new(config.clone())?;
    let count = cur.u32()? as usize;
    if count != expected.params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameter blocks, variant {} needs {}",
            count,
            variant,
            expected.params.len()
        )));
    }
    let mut params = ParamSet::new();
    for (exp_name, exp_block) in expected.params.iter() {
        let name = cur.str()?;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        if name != exp_name || (rows, cols) != exp_block.shape() {
            return Err(Error::Format(format!(
                "checkpoint block '{}' ({}x{}) does not match expected '{}' {:?}",
                name,
                rows,
                cols,
                exp_name,
                exp_block.shape()
            )));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(cur.f64()?);
        }
        params.insert(&name, Dense2D::from_vec(rows, cols, values)?);
    }
    Ok(Model { config, params })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model);
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    model_from_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_windows, FrameRecord};

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

    fn line_window(peds: usize) -> TrajectoryWindow {
        let mut recs = Vec::new();
        for p in 0..peds {
            for f in 0..8 {
                recs.push(FrameRecord {
                    frame_id: f,
                    ped_id: p as i64,
                    x: 0.4 * f as f64 + p as f64,
                    y: 0.2 * f as f64 - p as f64,
                    vislet: None,
                });
            }
        }
        build_windows(&recs, 4, 4, 8, 20).unwrap().remove(0)
    }

    #[test]
    fn loss_zero_at_truth_and_constant_offset() {
        let truth = vec![Dense2D::from_fn(4, 2, |s, c| (s + c) as f64)];
        let mask = vec![vec![true; 4]];
        assert_eq!(loss(&truth, &truth, &mask).unwrap(), 0.0);
        let pred = vec![Dense2D::from_fn(4, 2, |s, c| {
            (s + c) as f64 + if c == 0 { 0.3 } else { 0.4 }
        })];
        assert!((loss(&pred, &truth, &mask).unwrap() - 0.5).abs() < 1e-15);
        let empty_mask = vec![vec![false; 4]];
        assert!(matches!(loss(&pred, &truth, &empty_mask), Err(Error::Usage(_))));
    }

    #[test]
    fn dropout_identity_determinism_and_expectation() {
        let x = Dense2D::filled(6, 6, 2.0);
        let same = apply_dropout(&x, 1.0, 0, true).unwrap();
        assert_eq!(same.values(), x.values());
        let eval_mode = apply_dropout(&x, 0.5, 3, false).unwrap();
        assert_eq!(eval_mode.values(), x.values());

        let a = apply_dropout(&x, 0.5, 9, true).unwrap();
        let b = apply_dropout(&x, 0.5, 9, true).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|&v| v == 0.0 || v == 4.0));

        // inverted scaling keeps the expected value
        let mut total = 0.0;
        for seed in 0..10_000u64 {
            total += apply_dropout(&x, 0.8, seed, true).unwrap().sum();
        }
        let mean = total / 10_000.0 / 36.0;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean {mean}");

        assert!(apply_dropout(&x, 0.0, 0, true).is_err());
        assert!(apply_dropout(&x, 1.5, 0, true).is_err());
    }

    #[test]
    fn zero_decoder_step_reports_constant_position_ade() {
        let mut model = Model::new(small_config(VariantId::St)).unwrap();
        *model.params.get_mut("dec.w_o").unwrap() = Dense2D::zeros(5, 8);
        let window = line_window(2);
        let state = ModelState::init(&model.config);
        let cfg = TrainerConfig { dropout_keep: 1.0, ..TrainerConfig::default() };
        let out = train_step(&mut model, &window, None, None, &state, &cfg, 0.0, 0).unwrap();
        // residual decoding with a zero decoder holds the last observed
        // position; its ADE is the ground-truth displacement from it
        let mut expect = 0.0;
        let mut n = 0;
        for (p, mask) in window.presence.iter().enumerate() {
            let (lx, ly) = window.last_observed(p);
            for (s, &m) in mask.iter().enumerate() {
                if m {
                    let dx = window.future[p].get(s, 0) - lx;
                    let dy = window.future[p].get(s, 1) - ly;
                    expect += dx.hypot(dy);
                    n += 1;
                }
            }
        }
        assert!((out.loss - expect / n as f64).abs() < 1e-12);
    }

    #[test]
    fn repeated_training_decreases_loss() {
        let mut model = Model::new(small_config(VariantId::St)).unwrap();
        let window = line_window(3);
        let cfg = TrainerConfig { dropout_keep: 1.0, ..TrainerConfig::default() };
        let mut state = ModelState::init(&model.config);
        let mut losses = Vec::new();
        for step in 0..10 {
            let out =
                train_step(&mut model, &window, None, None, &state, &cfg, cfg.lr, step).unwrap();
            losses.push(out.loss);
            state = ModelState::init(&model.config); // same window, fresh state
        }
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "loss did not decrease: {:?}", losses);
        }
    }

    #[test]
    fn decoder_gradient_matches_finite_differences() {
        let model = Model::new(small_config(VariantId::St)).unwrap();
        let window = line_window(2);
        let state = ModelState::init(&model.config);
        let opts = ForwardOptions::default();
        let fwd = model.forward(&window, None, None, &state, &opts).unwrap();
        let loss_node = fwd.loss.unwrap();
        let grads = fwd.tape.backward(loss_node).unwrap();
        let wo_id = fwd.param_nodes.iter().find(|(n, _)| n == "dec.w_o").unwrap().1;
        let analytic = grads.get(wo_id).unwrap().clone();

        let h = 1e-5;
        for &(i, j) in &[(0usize, 0usize), (2, 3), (4, 7)] {
            let eval_at = |delta: f64| {
                let mut m = model.clone();
                let w = m.params.get_mut("dec.w_o").unwrap();
                w.set(i, j, w.get(i, j) + delta);
                let f = m.forward(&window, None, None, &state, &opts).unwrap();
                f.tape.value(f.loss.unwrap()).get(0, 0)
            };
            let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            let a = analytic.get(i, j);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            assert!(rel < 1e-3, "({i},{j}): analytic {a}, numeric {numeric}");
        }
    }

    #[test]
    fn non_finite_forward_aborts_with_node_index() {
        let mut model = Model::new(small_config(VariantId::St)).unwrap();
        for v in model.params.get_mut("kern.w_ctx").unwrap().values_mut() {
            *v = 1e308;
        }
        let window = line_window(2);
        let state = ModelState::init(&model.config);
        let cfg = TrainerConfig { dropout_keep: 1.0, ..TrainerConfig::default() };
        let err = train_step(&mut model, &window, None, None, &state, &cfg, cfg.lr, 0)
            .err()
            .expect("overflowing weights must abort");
        match err {
            Error::NonFinite(msg) => assert!(msg.contains("node"), "{msg}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn online_run_shape_and_determinism() {
        let windows: Vec<TrajectoryWindow> = vec![line_window(2), line_window(3)];
        let cfg = TrainerConfig { epochs: 2, dropout_keep: 1.0, ..TrainerConfig::default() };
        let run = |cfg: &TrainerConfig| {
            let mut model = Model::new(small_config(VariantId::Str)).unwrap();
            let mut log = RunLog::new();
            online_run(&mut model, &windows, None, None, cfg, &mut log).unwrap();
            (model, log)
        };
        let (m1, log1) = run(&cfg);
        let (m2, log2) = run(&cfg);
        assert_eq!(log1.len(), windows.len() * cfg.epochs);
        assert_eq!(
            log1.records().iter().map(|r| r.window_id).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert_eq!(log1.to_csv(false), log2.to_csv(false));
        assert_eq!(checkpoint_bytes(&m1), checkpoint_bytes(&m2));
    }

    #[test]
    fn empty_stream_leaves_log_empty() {
        let mut model = Model::new(small_config(VariantId::St)).unwrap();
        let mut log = RunLog::new();
        online_run(&mut model, &[], None, None, &TrainerConfig::default(), &mut log).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn checkpoint_round_trips_bit_for_bit() {
        let model = Model::new(small_config(VariantId::StrGgrnnV)).unwrap();
        let bytes = checkpoint_bytes(&model);
        let restored = model_from_checkpoint(&bytes).unwrap();
        assert_eq!(restored.config.variant, model.config.variant);
        assert_eq!(restored.params.len(), model.params.len());
        for ((n1, p1), (n2, p2)) in model.params.iter().zip(restored.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(p1.values(), p2.values());
        }
        assert_eq!(checkpoint_bytes(&restored), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(checkpoint_bytes(&loaded), bytes);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let model = Model::new(small_config(VariantId::St)).unwrap();
        let mut bytes = checkpoint_bytes(&model);
        assert!(matches!(model_from_checkpoint(&bytes[..20]), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(model_from_checkpoint(&bytes), Err(Error::Format(_))));
        let missing = load_checkpoint(Path::new("/nonexistent/model.ckpt"));
        assert!(matches!(missing, Err(Error::Io { .. })));
    }

    #[test]
    fn run_log_enforces_monotone_ids() {
        let mut log = RunLog::new();
        let rec = |id| RunRecord {
            window_id: id,
            loss: 0.0,
            ade: 0.0,
            fde: 0.0,
            proposal_index: 0,
            wall_ms: 1.0,
        };
        log.push(rec(0));
        log.push(rec(1));
        assert_eq!(log.next_id(), 2);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            let mut l = log.clone();
            l.push(rec(1));
        }));
        assert!(result.is_err());
    }
}
