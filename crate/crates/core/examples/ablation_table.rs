//! Runs the ablation grid on one small corrupted sequence and prints a
//! comparison table: coarse poses only, plus translation optimization,
//! plus rotation optimization, plus self-distillation (full).

use deskdepth::optim::{AblationFlags, SequenceData, TrainConfig, Trainer};
use deskdepth::synth::{corrupt_poses, make_scene, CorruptionSpec, SceneConfig};

fn main() -> deskdepth::Result<()> {
    let scene = make_scene(&SceneConfig {
        width: 32,
        height: 32,
        frames: 4,
        seed: 1,
        ..SceneConfig::default()
    })?;
    let gt: Vec<_> = scene.frames.iter().map(|f| f.pose).collect();
    let (coarse, _) = corrupt_poses(&gt, &CorruptionSpec::default());

    println!("{:<10} {:>9} {:>9} {:>9}", "config", "AbsRel", "RMSE", "d<1.25");
    for name in AblationFlags::GRID {
        let seq = SequenceData::from_scene(&scene, Some(&coarse))?;
        let cfg = TrainConfig {
            epochs: 40,
            flags: AblationFlags::preset(name)?,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(vec![seq], cfg)?;
        let report = trainer.train()?;
        let m = report.final_metrics.expect("scene carries ground truth");
        println!("{name:<10} {:>9.4} {:>9.4} {:>9.4}", m.abs_rel, m.rmse, m.delta1);
    }
    Ok(())
}
