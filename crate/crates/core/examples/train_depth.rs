//! Optimizes a disparity pyramid plus pose alignment on one synthetic
//! sequence with corrupted poses, printing the loss and depth accuracy
//! per logged epoch.

use deskdepth::optim::{SequenceData, TrainConfig, Trainer};
use deskdepth::synth::{corrupt_poses, make_scene, CorruptionSpec, SceneConfig};

fn main() -> deskdepth::Result<()> {
    let scene = make_scene(&SceneConfig {
        width: 32,
        height: 32,
        frames: 4,
        seed: 7,
        ..SceneConfig::default()
    })?;
    let gt: Vec<_> = scene.frames.iter().map(|f| f.pose).collect();
    let spec = CorruptionSpec {
        scale_jitter: (0.8, 0.8),
        seed: 7,
        ..CorruptionSpec::default()
    };
    let (coarse, k) = corrupt_poses(&gt, &spec);
    println!("injected pose scale: {k:.4}");

    let seq = SequenceData::from_scene(&scene, Some(&coarse))?;
    let cfg = TrainConfig {
        epochs: 60,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(vec![seq], cfg)?;
    let report = trainer.train()?;

    println!("epoch  total      abs_rel");
    for rec in report.history.iter().step_by(10) {
        let abs_rel = rec.metrics.map(|m| m.abs_rel).unwrap_or(f64::NAN);
        println!("{:>5}  {:.6}  {abs_rel:.6}", rec.epoch, rec.loss.total);
    }
    if let Some(m) = report.final_metrics {
        println!(
            "final: abs_rel {:.4}, rmse {:.4}, d<1.25 {:.4}",
            m.abs_rel, m.rmse, m.delta1
        );
    }
    Ok(())
}
