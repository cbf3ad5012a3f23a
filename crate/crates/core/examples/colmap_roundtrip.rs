//! Writes a pinhole reconstruction in COLMAP text format, reads it back,
//! and checks that intrinsics and every pose survive the round trip.

use deskdepth::colmap::{write_reconstruction, SequencePoses};
use deskdepth::synth::{make_scene, SceneConfig};

fn main() -> deskdepth::Result<()> {
    let scene = make_scene(&SceneConfig::default())?;
    let frames: Vec<(String, _)> = scene
        .frames
        .iter()
        .map(|f| (f.name.clone(), f.pose))
        .collect();

    let dir = std::env::temp_dir().join("deskdepth_colmap_roundtrip");
    std::fs::create_dir_all(&dir)?;
    write_reconstruction(&dir, &scene.intrinsics, &frames)?;
    println!("wrote cameras.txt / images.txt to {}", dir.display());

    let loaded = SequencePoses::load_dir(&dir, "demo")?;
    let mut worst = 0.0f64;
    for (name, pose) in &frames {
        let got = loaded.pose(name)?;
        let dt = (got.translation - pose.translation).norm();
        let dr = got.rotation.compose(&pose.rotation.inverse()).angle();
        worst = worst.max(dt).max(dr);
        println!("{name}: translation diff {dt:.2e}, rotation diff {dr:.2e} rad");
    }
    println!("worst deviation: {worst:.2e} (expected < 1e-6)");
    Ok(())
}
