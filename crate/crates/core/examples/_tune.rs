//! Scratch fixture tuning harness (not part of the published examples).

use std::time::Instant;

use deskdepth::optim::{AblationFlags, SequenceData, TrainConfig, Trainer};
use deskdepth::synth::{corrupt_poses, make_scene, CorruptionSpec, SceneConfig, TextureMode};

fn fixture_scene(seed: u64) -> SceneConfig {
    SceneConfig {
        width: 64,
        height: 64,
        frames: 8,
        traj_amplitude: 0.3,
        rot_amplitude_deg: 3.0,
        wall_distance: 2.0,
        with_boxes: true,
        texture: TextureMode::High,
        seed,
    }
}

fn noisy_init(trainer: &mut Trainer) {
    for pyrs in &mut trainer.pyramids {
        for pyr in pyrs.iter_mut() {
            for logits in &mut pyr.logits {
                for (i, l) in logits.iter_mut().enumerate() {
                    *l += ((i.wrapping_mul(2654435761) % 1009) as f64) / 1009.0 * 3.0 - 1.5;
                }
            }
        }
    }
}

fn run(
    name: &str,
    scene_cfg: &SceneConfig,
    spec: Option<&CorruptionSpec>,
    mut cfg: TrainConfig,
    noise: bool,
) -> deskdepth::Result<()> {
    let scene = make_scene(scene_cfg)?;
    let gt: Vec<_> = scene.frames.iter().map(|f| f.pose).collect();
    let coarse = spec.map(|s| corrupt_poses(&gt, s));
    let seq = SequenceData::from_scene(&scene, coarse.as_ref().map(|(c, _)| c.as_slice()))?;
    cfg.init_disp = Some(0.5);
    let t0 = Instant::now();
    let mut trainer = Trainer::new(vec![seq], cfg)?;
    if noise {
        noisy_init(&mut trainer);
    }
    let report = trainer.train()?;
    let first = &report.history[0];
    let init_ar = first.metrics.map(|m| m.abs_rel).unwrap_or(f64::NAN);
    let m = report.final_metrics.unwrap();
    print!(
        "{name:<22} init {init_ar:.4} final {:.4} ratio {:.3} std {:.4} ({:.0}s) | ar:",
        m.abs_rel,
        m.abs_rel / init_ar,
        report.final_scale_std.unwrap_or(f64::NAN),
        t0.elapsed().as_secs_f64()
    );
    for rec in report.history.iter().step_by(25) {
        print!(" {:.4}", rec.metrics.map(|mm| mm.abs_rel).unwrap_or(f64::NAN));
    }
    println!();
    Ok(())
}

fn main() -> deskdepth::Result<()> {
    let scene_cfg = fixture_scene(5);
    for ts in [0.10, 0.15] {
        println!("--- trans_sigma {ts}");
        let spec = CorruptionSpec {
            scale_jitter: (1.4, 1.4),
            rot_sigma: 0.4f64.to_radians(),
            trans_sigma: ts,
            drift: 0.1,
            seed: 5,
        };
        for name in AblationFlags::GRID {
            let cfg = TrainConfig {
                epochs: 150,
                lr_pose: 1e-2,
                isd_iterations: 1,
                flags: AblationFlags::preset(name)?,
                ..TrainConfig::default()
            };
            run(name, &scene_cfg, Some(&spec), cfg, true)?;
        }
    }

    // scale recovery: two sequences with different fixed jitter
    println!("--- scale recovery");
    let mut sequences = Vec::new();
    let mut injected = Vec::new();
    for (i, jitter) in [(0u64, 0.7), (1u64, 1.5)] {
        let scene = make_scene(&fixture_scene(20 + i))?;
        let gt: Vec<_> = scene.frames.iter().map(|f| f.pose).collect();
        let spec = CorruptionSpec {
            scale_jitter: (jitter, jitter),
            seed: i,
            ..CorruptionSpec::default()
        };
        let (coarse, k) = corrupt_poses(&gt, &spec);
        injected.push(k);
        sequences.push(SequenceData::from_scene(&scene, Some(&coarse))?);
    }
    for on in [true, false] {
        let mut flags = AblationFlags::preset("optim-rt")?;
        flags.optim_t = on;
        let cfg = TrainConfig {
            epochs: 150,
            lr_pose: 1e-2,
            init_disp: Some(0.5),
            flags,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(sequences.clone(), cfg)?;
        let report = tr.train()?;
        println!(
            "optim_t={on}: scale_std {:.4} abs_rel {:.4}",
            report.final_scale_std.unwrap(),
            report.final_metrics.unwrap().abs_rel
        );
        if on {
            for (qi, k) in injected.iter().enumerate() {
                let sk: Vec<f64> = tr.alignments[qi].iter().map(|a| a.scale() * k).collect();
                let mean = sk.iter().sum::<f64>() / sk.len() as f64;
                let var = sk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / sk.len() as f64;
                println!("  seq {qi}: mean s*k {mean:.4} CoV {:.4}", var.sqrt() / mean);
            }
        }
    }
    Ok(())
}