//! Displacement metrics, best-of-band evaluation, adjacency analytics
//! (edge cardinality and weight-density histograms), the proposal
//! sampling benchmark, and self-contained SVG plot emission.

use crate::data::{GridMask, SceneMap, TrajectoryWindow};
use crate::error::{Error, Result};
use crate::kernel::VariantId;
use crate::model::{ForwardOptions, Model, ModelState};
use crate::numerics::{Dense2D, NmfOptions};
use crate::recommender;
use std::fmt::Write as _;

/// Average displacement error: mean Euclidean error over every present
/// (pedestrian, step) pair, in meters.
pub fn ade(pred: &[Dense2D], truth: &[Dense2D], presence: &[Vec<bool>]) -> Result<f64> {
    if pred.len() != truth.len() || pred.len() != presence.len() {
        return Err(Error::Usage(format!(
            "metric inputs disagree: {} predictions, {} truths, {} masks",
            pred.len(),
            truth.len(),
            presence.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((p, t), mask) in pred.iter().zip(truth).zip(presence) {
        if p.shape() != t.shape() {
            return Err(Error::dimension("ade", p.shape(), t.shape()));
        }
        for (s, &present) in mask.iter().enumerate() {
            if !present {
                continue;
            }
            let dx = p.get(s, 0) - t.get(s, 0);
            let dy = p.get(s, 1) - t.get(s, 1);
            total += (dx * dx + dy * dy).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Usage("every future step is masked out".into()));
    }
    Ok(total / count as f64)
}

/// Final displacement error: mean over pedestrians of the Euclidean
/// error at each pedestrian's last present step.
pub fn fde(pred: &[Dense2D], truth: &[Dense2D], presence: &[Vec<bool>]) -> Result<f64> {
    if pred.len() != truth.len() || pred.len() != presence.len() {
        return Err(Error::Usage("metric inputs disagree in length".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((p, t), mask) in pred.iter().zip(truth).zip(presence) {
        let Some(last) = mask.iter().rposition(|&m| m) else { continue };
        let dx = p.get(last, 0) - t.get(last, 0);
        let dy = p.get(last, 1) - t.get(last, 1);
        total += (dx * dx + dy * dy).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::Usage("no pedestrian has a final present step".into()));
    }
    Ok(total / count as f64)
}

/// Score one window's decoded trajectories against its ground truth.
pub fn window_metrics(trajectories: &[Dense2D], window: &TrajectoryWindow) -> Result<(f64, f64)> {
    let a = ade(trajectories, &window.future, &window.presence)?;
    let f = fde(trajectories, &window.future, &window.presence)?;
    Ok((a, f))
}

/// Per-window evaluation detail.
#[derive(Debug, Clone)]
pub struct WindowScore {
    pub window_id: u64,
    pub ade: f64,
    pub fde: f64,
    pub selected: usize,
}

/// Aggregated evaluation of one model over one window stream.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub variant: VariantId,
    /// Band size used for best-of-band scoring (1 outside recommender
    /// variants).
    pub band_size: usize,
    pub per_window: Vec<WindowScore>,
    pub mean_ade: f64,
    pub mean_fde: f64,
}

impl MetricReport {
    /// Aggregate CSV row: dataset, variant, P, ade, fde.
    pub fn summary_csv(&self, dataset: &str) -> String {
        format!(
            "dataset,variant,P,ade,fde\n{},{},{},{:.9},{:.9}\n",
            dataset, self.variant, self.band_size, self.mean_ade, self.mean_fde
        )
    }

    pub fn detail_csv(&self) -> String {
        let mut out = String::from("window_id,ade,fde,proposal_idx\n");
        for w in &self.per_window {
            let _ = writeln!(out, "{},{:.9},{:.9},{}", w.window_id, w.ade, w.fde, w.selected);
        }
        out
    }
}

/// Evaluate a model over a window stream without updating it. Carried
/// state flows window to window; recommender variants score best-of-band
/// (the selected proposal minimizes the window's displacement).
pub fn evaluate(
    model: &Model,
    windows: &[TrajectoryWindow],
    scene: Option<&SceneMap>,
    mask: Option<&GridMask>,
    seed: u64,
) -> Result<MetricReport> {
    if windows.is_empty() {
        return Err(Error::Usage("no windows to evaluate".into()));
    }
    let mut state = ModelState::init(&model.config);
    let mut per_window = Vec::with_capacity(windows.len());
    let mut sum_ade = 0.0;
    let mut sum_fde = 0.0;
    for (i, window) in windows.iter().enumerate() {
        let opts = ForwardOptions {
            training: false,
            band_seed: seed.wrapping_add((i as u64) * model.config.band_size as u64),
            ..ForwardOptions::default()
        };
        let fwd = model.forward(window, scene, mask, &state, &opts)?;
        let (a, f) = window_metrics(&fwd.trajectories, window)?;
        per_window.push(WindowScore { window_id: i as u64, ade: a, fde: f, selected: fwd.selected });
        sum_ade += a;
        sum_fde += f;
        state = fwd.next_state;
    }
    let n = per_window.len() as f64;
    Ok(MetricReport {
        variant: model.config.variant,
        band_size: if model.config.variant.spec().recommender { model.config.band_size } else { 1 },
        per_window,
        mean_ade: sum_ade / n,
        mean_fde: sum_fde / n,
    })
}

/// Edge-count statistics over a set of adjacency proposals.
#[derive(Debug, Clone)]
pub struct CardinalityStats {
    /// Per proposal: entries strictly above the threshold.
    pub counts: Vec<usize>,
    pub p25: usize,
    pub p50: usize,
    pub p75: usize,
    /// Edge count of the full graph, n^2.
    pub full_graph: usize,
    pub mean_ratio: f64,
}

/// Nearest-rank percentile of a sorted slice.
fn nearest_rank(sorted: &[usize], pct: f64) -> usize {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Count edges above `tau` in each proposal and summarize against the
/// full n^2 graph.
pub fn cardinality_stats(proposals: &[Dense2D], tau: f64) -> Result<CardinalityStats> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Usage(format!("edge threshold {} outside [0, 1)", tau)));
    }
    let first = proposals
        .first()
        .ok_or_else(|| Error::Usage("no proposals to summarize".into()))?;
    let full_graph = first.rows() * first.cols();
    let counts: Vec<usize> = proposals
        .iter()
        .map(|a| a.values().iter().filter(|&&v| v > tau).count())
        .collect();
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let mean_ratio =
        counts.iter().map(|&c| c as f64 / full_graph as f64).sum::<f64>() / counts.len() as f64;
    Ok(CardinalityStats {
        p25: nearest_rank(&sorted, 25.0),
        p50: nearest_rank(&sorted, 50.0),
        p75: nearest_rank(&sorted, 75.0),
        counts,
        full_graph,
        mean_ratio,
    })
}

pub fn cardinality_csv(stats: &CardinalityStats) -> String {
    let mut out = String::from("proposal,count,full_graph,ratio\n");
    for (i, &c) in stats.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{:.9}", i, c, stats.full_graph, c as f64 / stats.full_graph as f64);
    }
    out
}

/// Histogram of adjacency weights with uniform bin edges on [0, 1];
/// a weight of exactly 1 lands in the last bin.
pub fn density_histogram(adjacencies: &[Dense2D], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::Usage("histogram needs at least one bin".into()));
    }
    let mut hist = vec![0usize; bins];
    for a in adjacencies {
        for &v in a.values() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("adjacency weight {} outside [0, 1]", v)));
            }
            let bin = ((v * bins as f64) as usize).min(bins - 1);
            hist[bin] += 1;
        }
    }
    Ok(hist)
}

pub fn histogram_csv(hist: &[usize]) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    let bins = hist.len() as f64;
    for (i, &c) in hist.iter().enumerate() {
        let _ = writeln!(out, "{:.4},{:.4},{}", i as f64 / bins, (i + 1) as f64 / bins, c);
    }
    out
}

/// One row of the sampling benchmark.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub samples: usize,
    pub median_ms: f64,
    pub per_sample_us: f64,
}

/// Time adjacency-proposal sampling at each count; the reported time per
/// count is the median over `reps` repetitions.
pub fn bench_sampling(
    counts: &[usize],
    crowd: usize,
    reps: usize,
    opts: &NmfOptions,
) -> Result<Vec<BenchRow>> {
    if counts.is_empty() || reps == 0 {
        return Err(Error::Usage("benchmark needs counts and at least one rep".into()));
    }
    if counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("benchmark counts must be ascending".into()));
    }
    if counts.contains(&0) || crowd == 0 {
        return Err(Error::Usage("benchmark counts and crowd must be positive".into()));
    }
    let attention = Dense2D::filled(crowd, crowd, 1.0 / crowd as f64);
    let c_map = Dense2D::from_fn(8, 8, |i, j| ((i * 8 + j) as f64 % 7.0 + 1.0) / 8.0);
    let hidden = Dense2D::from_fn(crowd, 16, |i, j| ((i + j) as f64 % 5.0) / 5.0);
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let mut times = Vec::with_capacity(reps);
        for rep in 0..reps {
            let start = std::time::Instant::now();
            let band = recommender::generate_band(
                &attention,
                &c_map,
                &hidden,
                rep as u64 * count as u64,
                count,
                opts,
            )?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            debug_assert_eq!(band.len(), count);
            times.push(elapsed);
        }
        times.sort_by(|a, b| a.total_cmp(b));
        let median_ms = times[times.len() / 2];
        rows.push(BenchRow { samples: count, median_ms, per_sample_us: median_ms * 1e3 / count as f64 });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("samples,median_ms,per_sample_us\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.3},{:.3}", r.samples, r.median_ms, r.per_sample_us);
    }
    out
}

/// Rendering style for [`emit_plotdata`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Polyline over (row index, last column) or (first, last) columns.
    Line,
    /// One bar per row over the last column, labeled by the first.
    Bars,
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const SVG_PAD: f64 = 40.0;

fn parse_plot_rows(csv: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(nums) => {
                if let Some(first) = rows.first() {
                    if nums.len() != first.len() {
                        return Err(Error::Format(format!(
                            "plot CSV row {}: {} fields, expected {}",
                            lineno + 1,
                            nums.len(),
                            first.len()
                        )));
                    }
                }
                labels.push(fields[0].to_string());
                rows.push(nums);
            }
            Err(_) if rows.is_empty() && lineno == 0 => continue, // header
            Err(_) => {
                return Err(Error::Format(format!(
                    "plot CSV row {}: non-numeric field",
                    lineno + 1
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Format("plot CSV holds no data rows".into()));
    }
    Ok((labels, rows))
}

/// Render a CSV table as a self-contained SVG document.
pub fn emit_plotdata(csv: &str, kind: PlotKind, title: &str) -> Result<String> {
    let (labels, rows) = parse_plot_rows(csv)?;
    let ys: Vec<f64> = rows.iter().map(|r| *r.last().expect("non-empty row")).collect();
    let xs: Vec<f64> = if rows[0].len() >= 2 && kind == PlotKind::Line {
        rows.iter().map(|r| r[0]).collect()
    } else {
        (0..rows.len()).map(|i| i as f64).collect()
    };
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (ymin, ymax) = if (ymax - ymin).abs() < 1e-12 { (ymin - 1.0, ymax + 1.0) } else { (ymin.min(0.0), ymax) };
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let xspan = if (xmax - xmin).abs() < 1e-12 { 1.0 } else { xmax - xmin };

    let px = |x: f64| SVG_PAD + (x - xmin) / xspan * (SVG_W - 2.0 * SVG_PAD);
    let py = |y: f64| SVG_H - SVG_PAD - (y - ymin) / (ymax - ymin) * (SVG_H - 2.0 * SVG_PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        SVG_W / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{p}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{p}\" y1=\"{t}\" x2=\"{p}\" y2=\"{b}\" stroke=\"black\"/>",
        p = SVG_PAD,
        b = SVG_H - SVG_PAD,
        r = SVG_W - SVG_PAD,
        t = SVG_PAD
    );
    match kind {
        PlotKind::Line => {
            let points: Vec<String> = xs
                .iter()
                .zip(&ys)
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>",
                points.join(" ")
            );
        }
        PlotKind::Bars => {
            let bw = (SVG_W - 2.0 * SVG_PAD) / ys.len() as f64;
            for (i, (&y, label)) in ys.iter().zip(&labels).enumerate() {
                let x0 = SVG_PAD + i as f64 * bw;
                let y0 = py(y);
                let _ = writeln!(
                    svg,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\" stroke=\"white\"/>",
                    x0,
                    y0,
                    bw,
                    (SVG_H - SVG_PAD) - y0
                );
                let _ = writeln!(
                    svg,
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
                    x0 + bw / 2.0,
                    SVG_H - SVG_PAD + 14.0,
                    label
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
