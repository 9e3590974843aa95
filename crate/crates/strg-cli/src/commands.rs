//! Command implementations: ingest, train, eval, analyze, bench.

use crate::config::Config;
use crate::manifest::RunManifest;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;
use strg::data::{
    build_windows, leave_one_out_splits, load_scene_map, load_trajectories, NamedSet,
    TrajectoryWindow,
};
use strg::encoders::StateInit;
use strg::eval;
use strg::kernel::{DecodeMode, VariantId};
use strg::model::{ForwardOptions, Model, ModelConfig, ModelState};
use strg::numerics::{Dense2D, NmfOptions};
use strg::recommender;
use strg::training::{self, RunLog, TrainerConfig};
use strg::{Error, Result};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// FNV-1a 64-bit checksum of an artifact.
fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Build the model configuration from config keys, CLI variant, and
/// seed.
fn model_config_from(cfg: &Config, variant: VariantId, seed: u64) -> Result<ModelConfig> {
    let decode = match cfg.get_or("decode", "residual") {
        "residual" => DecodeMode::Residual,
        "absolute" => DecodeMode::Absolute,
        other => return Err(Error::Usage(format!("decode mode '{}' unknown", other))),
    };
    let state_init = match cfg.get_or("state_init", "gaussian") {
        "zeros" => StateInit::Zeros,
        "gaussian" => StateInit::Gaussian,
        other => return Err(Error::Usage(format!("state init '{}' unknown", other))),
    };
    Ok(ModelConfig {
        variant,
        max_size: cfg.get_usize("max_size", 20)?,
        hidden: cfg.get_usize("hidden", 128)?,
        out: cfg.get_usize("out", 8)?,
        pred_len: cfg.get_usize("pred", 12)?,
        decoder_hidden: cfg.get_usize("decoder_hidden", 64)?,
        band_size: cfg.get_usize("band_size", 20)?,
        decode,
        state_init,
        nmf: NmfOptions {
            max_iters: cfg.get_usize("nmf_iters", 500)?,
            tol: cfg.get_f64("nmf_tol", 1e-8)?,
        },
        init_scale: cfg.get_f64("init_scale", 0.1)?,
        seed,
    })
}

fn trainer_config_from(cfg: &Config, seed: u64) -> Result<TrainerConfig> {
    let tc = TrainerConfig {
        lr: cfg.get_f64("lr", 5e-3)?,
        decay: cfg.get_f64("decay", 0.95)?,
        dropout_keep: cfg.get_f64("dropout_keep", 0.8)?,
        epochs: cfg.get_usize("epochs", 1)?,
        seed,
    };
    tc.validate()?;
    Ok(tc)
}

fn load_dataset(cfg: &Config, name: &str) -> Result<NamedSet> {
    let records = load_trajectories(&cfg.dataset_traj(name)?)?;
    let scene = match cfg.dataset_scene(name) {
        Some(path) => Some(load_scene_map(&path)?),
        None => None,
    };
    Ok(NamedSet { name: name.to_string(), records, scene })
}

/// Refuse a variant whose required inputs a dataset cannot provide.
fn check_variant_inputs(variant: VariantId, set: &NamedSet) -> Result<()> {
    let spec = variant.spec();
    if spec.vislets && !set.has_vislets() {
        return Err(Error::Usage(format!(
            "variant {} requires vislet columns, dataset '{}' has none",
            variant, set.name
        )));
    }
    if spec.scene && set.scene.is_none() {
        return Err(Error::Usage(format!(
            "variant {} requires a scene map, dataset '{}' declares none",
            variant, set.name
        )));
    }
    Ok(())
}

fn serialize_windows(windows: &[TrajectoryWindow], obs: usize, pred: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# windows obs={} pred={} count={}", obs, pred, windows.len());
    for (wi, w) in windows.iter().enumerate() {
        let _ = writeln!(out, "window {} peds={}", wi, w.ped_ids.len());
        for (p, &ped) in w.ped_ids.iter().enumerate() {
            let mut line = format!("ped {}", ped);
            for s in 0..w.obs_len() {
                let _ = write!(line, " {}:{}", w.observed[p].get(s, 0), w.observed[p].get(s, 1));
            }
            line.push_str(" |");
            for s in 0..w.pred_len() {
                let _ = write!(
                    line,
                    " {}:{}:{}",
                    w.future[p].get(s, 0),
                    w.future[p].get(s, 1),
                    w.presence[p][s] as u8
                );
            }
            if let Some(vis) = &w.vislets {
                line.push_str(" |");
                for s in 0..w.obs_len() {
                    let _ = write!(line, " {}:{}", vis[p].get(s, 0), vis[p].get(s, 1));
                }
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_ingest(
    data: &Path,
    scene: Option<&Path>,
    obs: usize,
    pred: usize,
    stride: usize,
    max_size: usize,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("ingest");
    manifest.push("data", data.display());
    manifest.push("obs", obs);
    manifest.push("pred", pred);
    manifest.push("stride", stride);
    manifest.push("max_size", max_size);
    let manifest_path = out.join("manifest.txt");
    manifest.write_started(&manifest_path)?;

    let records = load_trajectories(data)?;
    if let Some(scene_path) = scene {
        load_scene_map(scene_path)?; // validate early
        manifest.push("scene", scene_path.display());
    }
    let windows = build_windows(&records, obs, pred, stride, max_size)?;
    let archive = serialize_windows(&windows, obs, pred);
    let checksum = fnv64(archive.as_bytes());
    write_file(&out.join("windows.txt"), &archive)?;
    write_file(&out.join("checksum.txt"), &format!("{:016x}\n", checksum))?;

    let pedestrians: std::collections::BTreeSet<i64> =
        records.iter().map(|r| r.ped_id).collect();
    manifest.push("windows", windows.len());
    manifest.push("pedestrians", pedestrians.len());
    manifest.push("checksum", format!("{:016x}", checksum));
    manifest.write_complete(&manifest_path, start.elapsed().as_secs_f64() * 1e3)?;
    println!(
        "ingested windows={} pedestrians={} checksum={:016x}",
        windows.len(),
        pedestrians.len(),
        checksum
    );
    Ok(())
}

fn proposals_csv(band: &recommender::ProposalBand) -> String {
    let mut out = String::from("proposal,row,col,weight\n");
    for (i, p) in band.proposals.iter().enumerate() {
        let a = &p.adjacency;
        for r in 0..a.rows() {
            for c in 0..a.cols() {
                let _ = writeln!(out, "{},{},{},{:.17}", i, r, c, a.get(r, c));
            }
        }
    }
    out
}

pub fn cmd_train(
    config_path: &Path,
    variant: &str,
    hold_out: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let cfg = Config::load(config_path)?;
    let variant: VariantId = variant.parse()?;
    let seed = match seed {
        Some(s) => s,
        None => cfg.get_u64("seed", 1234)?,
    };
    let obs = cfg.get_usize("obs", 8)?;
    let stride = cfg.get_usize("stride", 1)?;
    let model_cfg = model_config_from(&cfg, variant, seed)?;
    let trainer_cfg = trainer_config_from(&cfg, seed)?;

    let names = cfg.dataset_names();
    if names.is_empty() {
        return Err(Error::Usage("config declares no datasets".into()));
    }
    let sets: Vec<NamedSet> =
        names.iter().map(|n| load_dataset(&cfg, n)).collect::<Result<_>>()?;
    let (train_sets, _test) = leave_one_out_splits(&sets, hold_out)?;
    for set in &train_sets {
        check_variant_inputs(variant, set)?;
    }

    ensure_dir(out)?;
    let mut manifest = RunManifest::new("train");
    manifest.push("variant", variant);
    manifest.push("seed", seed);
    manifest.push("hold_out", hold_out);
    manifest.push(
        "train_sets",
        train_sets.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(","),
    );
    manifest.push("checkpoint", out.join("checkpoint.ckpt").display());
    manifest.push("runlog", out.join("runlog.csv").display());
    manifest.push("config", cfg.snapshot());
    let manifest_path = out.join("manifest.txt");
    manifest.write_started(&manifest_path)?;

    let mut model = Model::new(model_cfg)?;
    let mut log = RunLog::new();
    let mut last_band: Option<recommender::ProposalBand> = None;
    for set in &train_sets {
        let windows = build_windows(&set.records, obs, model.config.pred_len, stride, model.config.max_size)?;
        training::online_run(
            &mut model,
            &windows,
            set.scene.as_ref(),
            None,
            &trainer_cfg,
            &mut log,
        )?;
        // keep the final window's scored band for downstream analytics
        if variant.spec().recommender {
            if let Some(window) = windows.last() {
                let opts = ForwardOptions {
                    band_seed: seed,
                    ..ForwardOptions::default()
                };
                let state = ModelState::init(&model.config);
                let fwd = model.forward(window, set.scene.as_ref(), None, &state, &opts)?;
                last_band = fwd.band;
            }
        }
    }

    training::save_checkpoint(&model, &out.join("checkpoint.ckpt"))?;
    write_file(&out.join("runlog.csv"), &log.to_csv(true))?;
    if let Some(band) = &last_band {
        write_file(&out.join("band.csv"), &recommender::band_to_csv(band))?;
        write_file(&out.join("proposals.csv"), &proposals_csv(band))?;
    }
    manifest.push("trained_windows", log.len());
    manifest.write_complete(&manifest_path, start.elapsed().as_secs_f64() * 1e3)?;
    let mean_loss = if log.is_empty() {
        f64::NAN
    } else {
        log.records().iter().map(|r| r.loss).sum::<f64>() / log.len() as f64
    };
    println!("trained windows={} mean_loss={:.6}", log.len(), mean_loss);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    checkpoint: &Path,
    config_path: &Path,
    test_name: &str,
    band_size: Option<usize>,
    reps: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    if reps == 0 {
        return Err(Error::Usage("--reps must be at least 1".into()));
    }
    let mut model = training::load_checkpoint(checkpoint)?;
    if let Some(p) = band_size {
        if p == 0 {
            return Err(Error::Usage("band size must be at least 1".into()));
        }
        model.config.band_size = p;
    }
    let cfg = Config::load(config_path)?;
    let seed = match seed {
        Some(s) => s,
        None => cfg.get_u64("seed", 1234)?,
    };
    let set = load_dataset(&cfg, test_name)?;
    check_variant_inputs(model.config.variant, &set)?;
    let obs = cfg.get_usize("obs", 8)?;
    let stride = cfg.get_usize("stride", 1)?;
    let windows =
        build_windows(&set.records, obs, model.config.pred_len, stride, model.config.max_size)?;

    ensure_dir(out)?;
    let mut manifest = RunManifest::new("eval");
    manifest.push("checkpoint", checkpoint.display());
    manifest.push("variant", model.config.variant);
    manifest.push("test_set", test_name);
    manifest.push("P", model.config.band_size);
    manifest.push("reps", reps);
    manifest.push("seed", seed);
    manifest.push("config", cfg.snapshot());
    let manifest_path = out.join("manifest.txt");
    manifest.write_started(&manifest_path)?;

    let mut csv = String::from("dataset,variant,P,rep,ade,fde\n");
    let mut ades = Vec::with_capacity(reps);
    let mut fdes = Vec::with_capacity(reps);
    let mut detail = None;
    for rep in 0..reps {
        let report = eval::evaluate(
            &model,
            &windows,
            set.scene.as_ref(),
            None,
            seed.wrapping_add(rep as u64),
        )?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.9},{:.9}",
            test_name, model.config.variant, report.band_size, rep, report.mean_ade, report.mean_fde
        );
        ades.push(report.mean_ade);
        fdes.push(report.mean_fde);
        if rep == 0 {
            detail = Some(report.detail_csv());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let _ = writeln!(
        csv,
        "{},{},{},mean,{:.9},{:.9}",
        test_name, model.config.variant, model.config.band_size, mean(&ades), mean(&fdes)
    );
    let _ = writeln!(
        csv,
        "{},{},{},stddev,{:.9},{:.9}",
        test_name, model.config.variant, model.config.band_size, std(&ades), std(&fdes)
    );
    write_file(&out.join("metrics.csv"), &csv)?;
    if let Some(detail) = detail {
        write_file(&out.join("detail.csv"), &detail)?;
    }
    manifest.push("windows", windows.len());
    manifest.write_complete(&manifest_path, start.elapsed().as_secs_f64() * 1e3)?;
    println!("ade={:.6} fde={:.6} windows={}", mean(&ades), mean(&fdes), windows.len());
    Ok(())
}

/// Parse a `proposal,row,col,weight` CSV back into adjacency matrices.
fn parse_proposals(csv: &str, origin: &str) -> Result<Vec<Dense2D>> {
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("proposal")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "{}:{}: expected 4 fields, found {}",
                origin,
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |f: &str| -> Result<f64> {
            f.trim().parse().map_err(|_| {
                Error::Format(format!("{}:{}: non-numeric field '{}'", origin, lineno + 1, f))
            })
        };
        cells.push((
            parse(fields[0])? as usize,
            parse(fields[1])? as usize,
            parse(fields[2])? as usize,
            parse(fields[3])?,
        ));
    }
    if cells.is_empty() {
        return Err(Error::Format(format!("{}: no proposal rows", origin)));
    }
    let proposals = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let side = cells.iter().map(|c| c.1.max(c.2)).max().unwrap() + 1;
    let mut out = vec![Dense2D::zeros(side, side); proposals];
    for (p, r, c, w) in cells {
        out[p].set(r, c, w);
    }
    Ok(out)
}

pub fn cmd_analyze(input: &Path, tau: f64, bins: usize, out: &Path) -> Result<()> {
    let start = Instant::now();
    let text = std::fs::read_to_string(input)
        .map_err(|source| Error::Io { path: input.display().to_string(), source })?;
    let adjacencies = parse_proposals(&text, &input.display().to_string())?;

    ensure_dir(out)?;
    let mut manifest = RunManifest::new("analyze");
    manifest.push("input", input.display());
    manifest.push("tau", tau);
    manifest.push("bins", bins);
    let manifest_path = out.join("manifest.txt");
    manifest.write_started(&manifest_path)?;

    let stats = eval::cardinality_stats(&adjacencies, tau)?;
    let card_csv = eval::cardinality_csv(&stats);
    write_file(&out.join("cardinality.csv"), &card_csv)?;
    let card_svg = eval::emit_plotdata(&card_csv, eval::PlotKind::Line, "edges per proposal")?;
    write_file(&out.join("cardinality.svg"), &card_svg)?;

    let hist = eval::density_histogram(&adjacencies, bins)?;
    let hist_csv = eval::histogram_csv(&hist);
    write_file(&out.join("histogram.csv"), &hist_csv)?;
    let hist_svg = eval::emit_plotdata(&hist_csv, eval::PlotKind::Bars, "adjacency weight density")?;
    write_file(&out.join("histogram.svg"), &hist_svg)?;

    manifest.push("proposals", adjacencies.len());
    manifest.push("full_graph", stats.full_graph);
    manifest.write_complete(&manifest_path, start.elapsed().as_secs_f64() * 1e3)?;
    println!(
        "proposals={} edges p25={} p50={} p75={} of {}",
        adjacencies.len(),
        stats.p25,
        stats.p50,
        stats.p75,
        stats.full_graph
    );
    Ok(())
}

pub fn cmd_bench(
    counts: &[usize],
    crowd: usize,
    reps: usize,
    nmf_iters: usize,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("bench");
    manifest.push("counts", counts.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    manifest.push("crowd", crowd);
    manifest.push("reps", reps);
    manifest.push("nmf_iters", nmf_iters);
    let manifest_path = out.join("manifest.txt");
    manifest.write_started(&manifest_path)?;

    let opts = NmfOptions { max_iters: nmf_iters, tol: 1e-8 };
    let rows = eval::bench_sampling(counts, crowd, reps, &opts)?;
    let csv = eval::bench_csv(&rows);
    write_file(&out.join("timing.csv"), &csv)?;
    let svg = eval::emit_plotdata(&csv, eval::PlotKind::Bars, "proposal sampling time")?;
    write_file(&out.join("timing.svg"), &svg)?;
    manifest.write_complete(&manifest_path, start.elapsed().as_secs_f64() * 1e3)?;
    for r in &rows {
        println!("samples={} median_ms={:.3} per_sample_us={:.3}", r.samples, r.median_ms, r.per_sample_us);
    }
    Ok(())
}
