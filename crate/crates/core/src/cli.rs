//! Command-line pipeline: dataset synthesis, training, evaluation and the
//! ablation grid. One run owns its output directory; a manifest records the
//! exact configuration next to the artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{load_synth_config, load_train_config, SynthConfig};
use crate::error::{Error, Result};
use crate::export::{
    depth_name, load_dataset, read_depth_png16, save_sequence, write_depth_png16, write_pfm,
};
use crate::image::Grid;
use crate::metrics::{aggregate, compute_metrics, scale_std, Metrics, DEFAULT_DEPTH_CLAMP};
use crate::optim::{
    write_train_csv, AblationFlags, SequenceData, TrainConfig, TrainReport, Trainer,
};
use crate::synth::{corrupt_poses, make_scene};

#[derive(Parser, Debug)]
#[command(
    name = "deskdepth",
    about = "Coarse-pose-guided self-supervised depth optimization on synthetic scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic dataset (images, depth, pose files).
    Synth {
        /// Scene configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize depth and pose alignment on a dataset directory.
    Train {
        /// Dataset directory (from `synth` or an equivalent layout).
        dataset: PathBuf,
        /// Training configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Named flag preset: baseline, coarse, optim-t, optim-rt, full.
        #[arg(long)]
        ablate: Option<String>,
        /// Disables the stationary-pixel auto-mask.
        #[arg(long)]
        no_automask: bool,
        /// Inner self-distillation iterations per epoch.
        #[arg(long)]
        isd_iters: Option<usize>,
    },
    /// Compare predicted depth maps against ground-truth depth maps.
    Eval {
        /// Directory of predicted depth PNGs.
        pred: PathBuf,
        /// Directory of ground-truth depth PNGs (matching names).
        gt: PathBuf,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ablation grid and emit one comparison row per configuration.
    Ablate {
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated preset names; defaults to the standard grid.
        #[arg(long)]
        grid: Option<String>,
    },
}

/// Configuration snapshot stored next to every run's outputs.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub out_dir: String,
    pub seed: u64,
    pub flags: Option<AblationFlags>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    fs::write(dir.join("run_manifest.toml"), text)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(config.as_deref(), &out, seed),
        Command::Train {
            dataset,
            config,
            out,
            seed,
            ablate,
            no_automask,
            isd_iters,
        } => {
            let cfg = resolve_train_config(
                config.as_deref(),
                seed,
                ablate.as_deref(),
                no_automask,
                isd_iters,
            )?;
            cmd_train(&dataset, cfg, &out, config.as_deref()).map(|_| ())
        }
        Command::Eval { pred, gt, out } => cmd_eval(&pred, &gt, out.as_deref()),
        Command::Ablate {
            dataset,
            config,
            out,
            seed,
            grid,
        } => cmd_ablate(&dataset, config.as_deref(), &out, seed, grid.as_deref()),
    }
}

fn resolve_train_config(
    config: Option<&Path>,
    seed: Option<u64>,
    ablate: Option<&str>,
    no_automask: bool,
    isd_iters: Option<usize>,
) -> Result<TrainConfig> {
    let mut cfg = match config {
        Some(p) => load_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(name) = ablate {
        cfg.flags = AblationFlags::preset(name)?;
    }
    if no_automask {
        cfg.flags.automask = false;
    }
    if let Some(n) = isd_iters {
        cfg.isd_iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let started = now_unix();
    let mut cfg = match config {
        Some(p) => load_synth_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.scene.seed = s;
    }
    fs::create_dir_all(out)?;
    for i in 0..cfg.sequences {
        let mut scene_cfg = cfg.scene.clone();
        scene_cfg.seed = cfg.scene.seed.wrapping_add(i as u64);
        let mut scene = make_scene(&scene_cfg)?;
        scene.id = format!("seq_{i:03}");
        let dir = out.join(&scene.id);
        match &cfg.corruption {
            Some(spec) => {
                let mut spec = spec.clone();
                spec.seed = spec.seed.wrapping_add(i as u64);
                let gt: Vec<_> = scene.frames.iter().map(|f| f.pose).collect();
                let (coarse, k) = corrupt_poses(&gt, &spec);
                log::info!("sequence {}: scale jitter {k:.4}", scene.id);
                save_sequence(&dir, &scene, Some(&coarse))?;
            }
            None => save_sequence(&dir, &scene, None)?,
        }
    }
    write_manifest(
        out,
        &RunManifest {
            command: "synth".into(),
            config_path: config.map(|p| p.display().to_string()),
            out_dir: out.display().to_string(),
            seed: cfg.scene.seed,
            flags: None,
            started_unix: started,
            finished_unix: now_unix(),
        },
    )
}

pub fn cmd_train(
    dataset: &Path,
    cfg: TrainConfig,
    out: &Path,
    config_path: Option<&Path>,
) -> Result<TrainReport> {
    let started = now_unix();
    let loaded = load_dataset(dataset)?;
    let sequences: Vec<SequenceData> = loaded
        .iter()
        .map(SequenceData::from_loaded)
        .collect::<Result<_>>()?;
    fs::create_dir_all(out)?;
    let flags = cfg.flags;
    let seed = cfg.seed;
    let mut trainer = Trainer::new(sequences, cfg)?;
    let report = trainer.train()?;
    write_train_csv(&out.join("train_log.csv"), &report)?;
    // final depth maps and alignment state
    for (qi, seq) in trainer.sequences.iter().enumerate() {
        let dir = out.join(&seq.id);
        fs::create_dir_all(&dir)?;
        for (fi, name) in seq.frame_names.iter().enumerate() {
            let depth = trainer.predict_depth(qi, fi);
            let stem = name.strip_suffix(".png").unwrap_or(name);
            write_depth_png16(&dir.join(depth_name(name)), &depth)?;
            write_pfm(&dir.join(format!("{stem}.pfm")), &depth)?;
        }
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("alignments.csv"))?);
        writeln!(f, "pair,target,source,scale,dtx,dty,dtz,rx,ry,rz,trx,try,trz")?;
        for (pi, (pair, a)) in trainer.pairs[qi]
            .iter()
            .zip(&trainer.alignments[qi])
            .enumerate()
        {
            let p = a.to_params();
            writeln!(
                f,
                "{pi},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                pair.target,
                pair.source,
                a.scale(),
                p[1],
                p[2],
                p[3],
                p[4],
                p[5],
                p[6],
                p[7],
                p[8],
                p[9]
            )?;
        }
    }
    if let Some(m) = &report.final_metrics {
        print_metrics_table(&mut std::io::stdout().lock(), &[("final".into(), *m)], report.final_scale_std)?;
    }
    write_manifest(
        out,
        &RunManifest {
            command: "train".into(),
            config_path: config_path.map(|p| p.display().to_string()),
            out_dir: out.display().to_string(),
            seed,
            flags: Some(flags),
            started_unix: started,
            finished_unix: now_unix(),
        },
    )?;
    Ok(report)
}

fn depth_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("depth_") && n.ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

pub fn cmd_eval(pred: &Path, gt: &Path, out: Option<&Path>) -> Result<()> {
    let pred_names = depth_files(pred)?;
    let gt_names = depth_files(gt)?;
    if pred_names != gt_names {
        let missing: Vec<&String> = gt_names.iter().filter(|n| !pred_names.contains(n)).collect();
        let extra: Vec<&String> = pred_names.iter().filter(|n| !gt_names.contains(n)).collect();
        return Err(Error::Eval(format!(
            "depth file names differ (missing from pred: {missing:?}; extra in pred: {extra:?})"
        )));
    }
    if pred_names.is_empty() {
        return Err(Error::Eval(format!(
            "no depth_*.png files in {}",
            pred.display()
        )));
    }
    let mut rows = Vec::new();
    let mut factors = Vec::new();
    for name in &pred_names {
        let p: Grid = read_depth_png16(&pred.join(name))?;
        let g: Grid = read_depth_png16(&gt.join(name))?;
        let m = compute_metrics(&p, &g, true, DEFAULT_DEPTH_CLAMP)?;
        factors.push(m.scale_factor);
        rows.push((name.clone(), m));
    }
    let agg = aggregate(&rows.iter().map(|(_, m)| *m).collect::<Vec<_>>());
    let std = if factors.len() >= 2 {
        Some(scale_std(&factors)?)
    } else {
        None
    };
    let mut table_rows = rows.clone();
    table_rows.push(("mean".into(), agg));
    print_metrics_table(&mut std::io::stdout().lock(), &table_rows, std)?;
    if let Some(path) = out {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "image,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,scale_factor")?;
        for (name, m) in &table_rows {
            writeln!(
                f,
                "{name},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3, m.scale_factor
            )?;
        }
    }
    Ok(())
}

/// Aligned text table in the conventional metric column order
/// (error columns first, threshold accuracies after).
pub fn print_metrics_table<W: Write>(
    w: &mut W,
    rows: &[(String, Metrics)],
    std: Option<f64>,
) -> Result<()> {
    writeln!(
        w,
        "{:<18} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "image", "AbsRel", "SqRel", "RMSE", "RMSElog", "d<1.25", "d<1.25^2", "d<1.25^3"
    )?;
    for (name, m) in rows {
        writeln!(
            w,
            "{:<18} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            name, m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3
        )?;
    }
    if let Some(s) = std {
        writeln!(w, "scale factor std: {s:.4}")?;
    }
    Ok(())
}

pub fn cmd_ablate(
    dataset: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    grid: Option<&str>,
) -> Result<()> {
    let started = now_unix();
    let names: Vec<String> = match grid {
        Some(g) => g
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => AblationFlags::GRID.iter().map(|s| s.to_string()).collect(),
    };
    if names.is_empty() {
        return Err(Error::Config("empty ablation grid".into()));
    }
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut stds = Vec::new();
    for name in &names {
        let cfg = resolve_train_config(config, seed, Some(name), false, None)?;
        let run_dir = out.join(name);
        let report = cmd_train(dataset, cfg, &run_dir, config)?;
        let m = report.final_metrics.ok_or_else(|| {
            Error::Eval("dataset has no ground-truth depth; ablation table needs it".into())
        })?;
        rows.push((name.clone(), m));
        stds.push(report.final_scale_std.unwrap_or(f64::NAN));
    }
    let mut table = String::new();
    {
        let mut buf = Vec::new();
        print_metrics_table(&mut buf, &rows, None)?;
        table.push_str(&String::from_utf8_lossy(&buf));
    }
    for (name, s) in names.iter().zip(&stds) {
        table.push_str(&format!("{name:<18} scale_std {s:.4}\n"));
    }
    print!("{table}");
    fs::write(out.join("ablation_table.txt"), &table)?;
    write_manifest(
        out,
        &RunManifest {
            command: "ablate".into(),
            config_path: config.map(|p| p.display().to_string()),
            out_dir: out.display().to_string(),
            seed: seed.unwrap_or(0),
            flags: None,
            started_unix: started,
            finished_unix: now_unix(),
        },
    )
}
