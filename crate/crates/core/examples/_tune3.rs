//! Scratch: clean-fixture convergence at 200 epochs (full preset).

use deskdepth::optim::{AblationFlags, SequenceData, TrainConfig, Trainer};
use deskdepth::synth::{make_scene, SceneConfig, TextureMode};

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

fn main() -> deskdepth::Result<()> {
    let scene = make_scene(&SceneConfig {
        width: 64,
        height: 64,
        frames: 8,
        traj_amplitude: 0.3,
        rot_amplitude_deg: 3.0,
        wall_distance: 2.0,
        with_boxes: true,
        texture: TextureMode::High,
        seed: 5,
    })?;
    let seq = SequenceData::from_scene(&scene, None)?;
    let cfg = TrainConfig {
        epochs: 200,
        init_disp: Some(0.5),
        flags: AblationFlags::preset("full")?,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let mut trainer = Trainer::new(vec![seq], cfg)?;
    noisy_init(&mut trainer);
    let report = trainer.train()?;
    let init = report.history[0].metrics.unwrap().abs_rel;
    let fin = report.final_metrics.unwrap().abs_rel;
    print!(
        "clean full: init {init:.4} final {fin:.4} ratio {:.3} ({:.0}s) | ar:",
        fin / init,
        t0.elapsed().as_secs_f64()
    );
    for rec in report.history.iter().step_by(20) {
        print!(" {:.4}", rec.metrics.map(|m| m.abs_rel).unwrap_or(f64::NAN));
    }
    println!();
    Ok(())
}
