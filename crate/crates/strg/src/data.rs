//! Trajectory stream ingestion, window construction, scene maps, and
//! leave-one-out dataset splits.
//!
//! The canonical trajectory format is whitespace-separated columns
//! `frame ped x y [vx vy]` in world meters, head pose in radians.

use crate::error::{Error, Result};
use crate::numerics::Dense2D;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

/// One annotated observation: pedestrian position at a frame, with an
/// optional head-pose (vislet) pair in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: i64,
    pub ped_id: i64,
    pub x: f64,
    pub y: f64,
    pub vislet: Option<(f64, f64)>,
}

/// One observation/prediction slice of a scene.
#[derive(Debug, Clone)]
pub struct TrajectoryWindow {
    pub ped_ids: Vec<i64>,
    /// Per pedestrian, obs x 2 positions in meters.
    pub observed: Vec<Dense2D>,
    /// Per pedestrian, pred x 2 ground-truth future positions. Steps the
    /// pedestrian is absent from hold the last known position and are
    /// masked out of loss and metrics.
    pub future: Vec<Dense2D>,
    /// Per pedestrian, obs x 2 head-pose radians, when available.
    pub vislets: Option<Vec<Dense2D>>,
    /// Per pedestrian, per future step: true when ground truth exists.
    pub presence: Vec<Vec<bool>>,
}

impl TrajectoryWindow {
    pub fn obs_len(&self) -> usize {
        self.observed.first().map_or(0, |m| m.rows())
    }

    pub fn pred_len(&self) -> usize {
        self.future.first().map_or(0, |m| m.rows())
    }

    pub fn last_observed(&self, ped: usize) -> (f64, f64) {
        let obs = &self.observed[ped];
        let last = obs.rows() - 1;
        (obs.get(last, 0), obs.get(last, 1))
    }
}

/// Grayscale occupancy grid with all cells in [0, 1].
#[derive(Debug, Clone)]
pub struct SceneMap {
    pub cells: Dense2D,
}

impl SceneMap {
    pub fn uniform(height: usize, width: usize, v: f64) -> Self {
        SceneMap { cells: Dense2D::filled(height, width, v) }
    }
}

/// Binary 8x8 mask marking active neighborhoods in the pooled context.
#[derive(Debug, Clone)]
pub struct GridMask {
    pub cells: Dense2D,
}

pub const GRID_MASK_SIDE: usize = 8;

impl GridMask {
    pub fn all_active() -> Self {
        GridMask { cells: Dense2D::filled(GRID_MASK_SIDE, GRID_MASK_SIDE, 1.0) }
    }

    pub fn new(cells: Dense2D) -> Result<Self> {
        if cells.shape() != (GRID_MASK_SIDE, GRID_MASK_SIDE) {
            return Err(Error::dimension("grid mask", cells.shape(), (8, 8)));
        }
        if cells.values().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain("grid mask cells must be binary".into()));
        }
        if cells.max() < 1.0 {
            return Err(Error::Domain("grid mask has no active cell".into()));
        }
        Ok(GridMask { cells })
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(s)
}

/// Load a trajectory file. Lines have 4 or 6 whitespace-separated
/// numeric columns; the column count must be consistent across the file.
/// Records come back sorted by (frame_id, ped_id).
pub fn load_trajectories(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = read_to_string(path)?;
    let mut records = Vec::new();
    let mut column_count: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 6 {
            return Err(Error::Format(format!(
                "{}:{}: expected 4 or 6 columns, found {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        match column_count {
            None => column_count = Some(fields.len()),
            Some(n) if n != fields.len() => {
                return Err(Error::Format(format!(
                    "{}:{}: mixed column counts ({} then {})",
                    path.display(),
                    lineno + 1,
                    n,
                    fields.len()
                )));
            }
            _ => {}
        }
        let nums: Vec<f64> = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Format(format!(
                        "{}:{}: non-numeric field '{}'",
                        path.display(),
                        lineno + 1,
                        f
                    ))
                })
            })
            .collect::<Result<_>>()?;
        records.push(FrameRecord {
            frame_id: nums[0] as i64,
            ped_id: nums[1] as i64,
            x: nums[2],
            y: nums[3],
            vislet: if nums.len() == 6 { Some((nums[4], nums[5])) } else { None },
        });
    }
    if records.is_empty() {
        eprintln!("warning: {} contains no trajectory records", path.display());
    }
    records.sort_by_key(|r| (r.frame_id, r.ped_id));
    Ok(records)
}

/// Serialize records in the canonical column format.
pub fn write_trajectories(records: &[FrameRecord]) -> String {
    let mut out = String::new();
    for r in records {
        match r.vislet {
            Some((vx, vy)) => {
                let _ = writeln!(out, "{} {} {} {} {} {}", r.frame_id, r.ped_id, r.x, r.y, vx, vy);
            }
            None => {
                let _ = writeln!(out, "{} {} {} {}", r.frame_id, r.ped_id, r.x, r.y);
            }
        }
    }
    out
}

/// Maximum pedestrians carried per window.
pub const DEFAULT_MAX_SIZE: usize = 20;

/// Slide windows of `obs` observed plus `pred` future frames over the
/// stream. A pedestrian joins a window only if present in every
/// observation frame; absent future steps are masked. When more than
/// `max_size` pedestrians qualify, the ones with the most future
/// presence are kept, ties broken by lower id.
pub fn build_windows(
    records: &[FrameRecord],
    obs: usize,
    pred: usize,
    stride: usize,
    max_size: usize,
) -> Result<Vec<TrajectoryWindow>> {
    if obs == 0 || pred == 0 || stride == 0 {
        return Err(Error::Usage("obs, pred, and stride must be >= 1".into()));
    }
    // frames in order; the stream is assumed uniformly sampled
    let mut frames: Vec<i64> = records.iter().map(|r| r.frame_id).collect();
    frames.sort_unstable();
    frames.dedup();

    let mut by_frame: BTreeMap<i64, BTreeMap<i64, &FrameRecord>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame_id).or_default().insert(r.ped_id, r);
    }
    let has_vislets = records.iter().any(|r| r.vislet.is_some());

    let span = obs + pred;
    let mut windows = Vec::new();
    if frames.len() >= span {
        let mut start = 0;
        while start + span <= frames.len() {
            let obs_frames = &frames[start..start + obs];
            let fut_frames = &frames[start + obs..start + span];

            // pedestrians present in every observation frame
            let mut eligible: Vec<i64> = by_frame[&obs_frames[0]].keys().copied().collect();
            eligible.retain(|p| obs_frames.iter().all(|f| by_frame[f].contains_key(p)));

            if !eligible.is_empty() {
                // rank by future presence, ties by lower id
                let mut ranked: Vec<(usize, i64)> = eligible
                    .iter()
                    .map(|&p| {
                        let presence =
                            fut_frames.iter().filter(|f| by_frame[f].contains_key(&p)).count();
                        (presence, p)
                    })
                    .collect();
                ranked.sort_by_key(|&(presence, id)| (std::cmp::Reverse(presence), id));
                ranked.truncate(max_size);
                ranked.sort_by_key(|&(_, id)| id);

                let mut ped_ids = Vec::new();
                let mut observed = Vec::new();
                let mut future = Vec::new();
                let mut vislets = Vec::new();
                let mut presence = Vec::new();
                for &(_, ped) in &ranked {
                    ped_ids.push(ped);
                    let mut obs_m = Dense2D::zeros(obs, 2);
                    let mut vis_m = Dense2D::zeros(obs, 2);
                    for (i, f) in obs_frames.iter().enumerate() {
                        let r = by_frame[f][&ped];
                        obs_m.set(i, 0, r.x);
                        obs_m.set(i, 1, r.y);
                        if let Some((vx, vy)) = r.vislet {
                            vis_m.set(i, 0, vx);
                            vis_m.set(i, 1, vy);
                        }
                    }
                    let mut fut_m = Dense2D::zeros(pred, 2);
                    let mut mask = Vec::with_capacity(pred);
                    let (mut lx, mut ly) =
                        (obs_m.get(obs - 1, 0), obs_m.get(obs - 1, 1));
                    for (i, f) in fut_frames.iter().enumerate() {
                        match by_frame[f].get(&ped) {
                            Some(r) => {
                                fut_m.set(i, 0, r.x);
                                fut_m.set(i, 1, r.y);
                                lx = r.x;
                                ly = r.y;
                                mask.push(true);
                            }
                            None => {
                                fut_m.set(i, 0, lx);
                                fut_m.set(i, 1, ly);
                                mask.push(false);
                            }
                        }
                    }
                    observed.push(obs_m);
                    future.push(fut_m);
                    vislets.push(vis_m);
                    presence.push(mask);
                }
                windows.push(TrajectoryWindow {
                    ped_ids,
                    observed,
                    future,
                    vislets: if has_vislets { Some(vislets) } else { None },
                    presence,
                });
            }
            start += stride;
        }
    }
    if windows.is_empty() {
        eprintln!("warning: no complete {}+{} windows in stream", obs, pred);
    }
    Ok(windows)
}

/// Load a scene map from a PGM (P2/P5) image or a numeric CSV grid,
/// rescaled to [0, 1].
pub fn load_scene_map(path: &Path) -> Result<SceneMap> {
    let bytes = std::fs::read(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes, path)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{}: not valid UTF-8 CSV", path.display())))?;
        parse_csv_grid(&text, path)
    }
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<SceneMap> {
    let binary = bytes.starts_with(b"P5");
    // header tokens: magic, width, height, maxval; '#' comments allowed
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if tokens.len() < 4 {
        return Err(Error::Format(format!("{}: truncated PGM header", path.display())));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad PGM width", path.display())))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad PGM height", path.display())))?;
    let maxval: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad PGM maxval", path.display())))?;
    if maxval <= 0.0 {
        return Err(Error::Format(format!("{}: PGM maxval must be positive", path.display())));
    }

    let mut values = Vec::with_capacity(width * height);
    if binary {
        pos += 1; // single whitespace after maxval
        if bytes.len() < pos + width * height {
            return Err(Error::Format(format!("{}: PGM pixel data truncated", path.display())));
        }
        values.extend(bytes[pos..pos + width * height].iter().map(|&b| b as f64 / maxval));
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| Error::Format(format!("{}: bad ASCII PGM body", path.display())))?;
        for tok in text.split_whitespace().take(width * height) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad PGM pixel '{}'", path.display(), tok)))?;
            values.push(v / maxval);
        }
        if values.len() != width * height {
            return Err(Error::Format(format!("{}: PGM pixel data truncated", path.display())));
        }
    }
    Ok(SceneMap { cells: Dense2D::from_vec(height, width, values)? })
}

fn parse_csv_grid(text: &str, path: &Path) -> Result<SceneMap> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c| c == ',' || c == ' ' || c == '\t')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::Format(format!(
                        "{}:{}: non-numeric cell '{}'",
                        path.display(),
                        lineno + 1,
                        t
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Format(format!(
                    "{}:{}: non-rectangular grid ({} cells, expected {})",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{}: empty scene map", path.display())));
    }
    let cells = Dense2D::from_rows(&rows)?;
    // rescale to [0,1] when values exceed the unit range
    let max = cells.max();
    let cells = if max > 1.0 { cells.scale(1.0 / max) } else { cells };
    if cells.min() < 0.0 {
        return Err(Error::Domain("scene map has negative cells".into()));
    }
    Ok(SceneMap { cells })
}

/// A named dataset: trajectory records plus an optional scene map.
#[derive(Debug, Clone)]
pub struct NamedSet {
    pub name: String,
    pub records: Vec<FrameRecord>,
    pub scene: Option<SceneMap>,
}

impl NamedSet {
    pub fn has_vislets(&self) -> bool {
        self.records.iter().any(|r| r.vislet.is_some())
    }
}

/// Leave-one-out split: hold out the named set, train on the rest in
/// their original order.
pub fn leave_one_out_splits<'a>(
    sets: &'a [NamedSet],
    held_out: &str,
) -> Result<(Vec<&'a NamedSet>, &'a NamedSet)> {
    let test = sets
        .iter()
        .find(|s| s.name == held_out)
        .ok_or_else(|| Error::Usage(format!("unknown dataset name '{}'", held_out)))?;
    let train: Vec<&NamedSet> = sets.iter().filter(|s| s.name != held_out).collect();
    if train.is_empty() {
        eprintln!("warning: holding out '{}' leaves no training sets", held_out);
    }
    Ok((train, test))
}
