//! Renders a synthetic indoor sequence and saves it as a training dataset:
//! anti-aliased color frames, millimeter depth maps and pose files.
//!
//! Usage: cargo run --example render_scene -- [out_dir]

use deskdepth::export::save_sequence;
use deskdepth::synth::{make_scene, SceneConfig, TextureMode};

fn main() -> deskdepth::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example_scene".into());

    let cfg = SceneConfig {
        width: 96,
        height: 96,
        frames: 8,
        texture: TextureMode::Mixed,
        seed: 42,
        ..SceneConfig::default()
    };
    let scene = make_scene(&cfg)?;

    for frame in &scene.frames {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &d in &frame.depth.data {
            lo = lo.min(d);
            hi = hi.max(d);
        }
        println!(
            "{}: depth range [{lo:.3}, {hi:.3}] m, camera at {:?}",
            frame.name,
            frame.pose.inverse().translation.as_slice()
        );
    }

    save_sequence(std::path::Path::new(&out), &scene, None)?;
    println!("wrote {} frames to {out}", scene.frames.len());
    Ok(())
}
