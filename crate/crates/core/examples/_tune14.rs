//! Scratch: mild init noise sweep on the wide-baseline fixture.

use std::time::Instant;

use deskdepth::optim::{AblationFlags, SequenceData, TrainConfig, Trainer};
use deskdepth::synth::{corrupt_poses, make_scene, CorruptionSpec, SceneConfig, TextureMode};

fn noisy_init(trainer: &mut Trainer, amp: f64) {
    for pyrs in &mut trainer.pyramids {
        for pyr in pyrs.iter_mut() {
            for logits in &mut pyr.logits {
                for (i, l) in logits.iter_mut().enumerate() {
                    *l += (((i.wrapping_mul(2654435761) % 1009) as f64) / 1009.0 - 0.5) * 2.0 * amp;
                }
            }
        }
    }
}

fn main() -> deskdepth::Result<()> {
    let scene = make_scene(&SceneConfig {
        width: 64,
        height: 64,
        frames: 8,
        traj_amplitude: 0.6,
        rot_amplitude_deg: 6.0,
        wall_distance: 2.0,
        with_boxes: true,
        texture: TextureMode::Mixed,
        seed: 5,
    })?;
    let gt: Vec<_> = scene.frames.iter().map(|f| f.pose).collect();
    let spec = CorruptionSpec {
        scale_jitter: (1.4, 1.4),
        rot_sigma: 1.0f64.to_radians(),
        trans_sigma: 0.1,
        drift: 0.1,
        seed: 5,
    };
    let (coarse, _) = corrupt_poses(&gt, &spec);
    for (amp, isd_iters) in [(0.5f64, 1usize), (0.0, 1)] {
        println!("--- amp {amp} isd_iters {isd_iters}");
        for name in AblationFlags::GRID {
            let cfg = TrainConfig {
                epochs: 200,
                lr_pose: 1e-2,
                isd_iterations: isd_iters,
                init_disp: Some(0.5),
                flags: AblationFlags::preset(name)?,
                ..TrainConfig::default()
            };
            let seq = SequenceData::from_scene(&scene, Some(coarse.as_slice()))?;
            let t0 = Instant::now();
            let mut trainer = Trainer::new(vec![seq], cfg)?;
            noisy_init(&mut trainer, amp);
            let report = trainer.train()?;
            let m = report.final_metrics.unwrap();
            print!(
                "{name:<10} final {:.4} ({:.0}s) | ar:",
                m.abs_rel,
                t0.elapsed().as_secs_f64()
            );
            for rec in report.history.iter().step_by(25) {
                print!(" {:.4}", rec.metrics.map(|mm| mm.abs_rel).unwrap_or(f64::NAN));
            }
            println!();
        }
    }
    Ok(())
}
