//! Scratch: alternation strength sweep.

use std::time::Instant;

use deskdepth::geometry::{Pose, Rotation};
use deskdepth::optim::{AblationFlags, SequenceData, TrainConfig, Trainer};
use deskdepth::synth::{make_scene, SceneConfig, TextureMode};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn normal(rng: &mut impl Rng, sigma: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
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
        texture: TextureMode::High,
        seed: 5,
    })?;
    let gt: Vec<Pose> = scene.frames.iter().map(|f| f.pose).collect();
    for (amp, hi, lo) in [(1.0f64, 1.8f64, 0.45f64), (1.0, 2.2, 0.35)] {
        println!("--- amp {amp} alt ({hi},{lo})");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rot_sigma = 1.0f64.to_radians();
        let coarse: Vec<Pose> = gt
            .iter()
            .enumerate()
            .map(|(f, p)| {
                let s = if f % 2 == 0 { hi } else { lo };
                let axis = Vector3::new(
                    normal(&mut rng, rot_sigma),
                    normal(&mut rng, rot_sigma),
                    normal(&mut rng, rot_sigma),
                );
                Pose {
                    rotation: Rotation::from_axis_angle(axis).compose(&p.rotation),
                    translation: s * p.translation,
                }
            })
            .collect();
        for name in AblationFlags::GRID {
            let cfg = TrainConfig {
                epochs: 250,
                lr_pose: 1e-2,
                isd_iterations: 2,
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
