//! End-to-end checks of the command pipeline through the library entry
//! points: dataset synthesis is byte-identical across runs, training
//! produces the expected artifacts, and error paths stay actionable.

use std::fs;
use std::path::{Path, PathBuf};

use deskdepth::cli::{cmd_ablate, cmd_eval, cmd_synth, cmd_train};
use deskdepth::optim::TrainConfig;

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("deskdepth_cli_tests").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn write_synth_config(path: &Path) {
    fs::write(
        path,
        "sequences = 2\n\
         [scene]\n\
         width = 32\n\
         height = 32\n\
         frames = 4\n\
         seed = 9\n\
         [corruption]\n\
         scale_jitter = [0.5, 2.0]\n\
         seed = 9\n",
    )
    .unwrap();
}

/// All files of a tree except the run manifest (which carries timestamps).
fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "run_manifest.toml" {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let cfg = std::env::temp_dir().join("deskdepth_cli_tests_synth.toml");
    write_synth_config(&cfg);
    let (a, b) = (tmp("synth_a"), tmp("synth_b"));
    cmd_synth(Some(&cfg), &a, None).unwrap();
    cmd_synth(Some(&cfg), &b, None).unwrap();
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
    // expected per-sequence layout: 4 images, 4 depths, 4 pose files
    let seq = a.join("seq_000");
    for f in ["cameras.txt", "images.txt", "gt_cameras.txt", "gt_images.txt"] {
        assert!(seq.join(f).exists(), "missing {f}");
    }
    assert_eq!(tree_bytes(&seq).len(), 4 + 4 + 4);
    assert!(a.join("run_manifest.toml").exists());
}

#[test]
fn train_then_eval_round_trip() {
    let cfg = std::env::temp_dir().join("deskdepth_cli_tests_synth2.toml");
    write_synth_config(&cfg);
    let data = tmp("train_data");
    cmd_synth(Some(&cfg), &data, None).unwrap();
    let out = tmp("train_out");
    let train_cfg = TrainConfig {
        epochs: 2,
        isd_iterations: 1,
        ..TrainConfig::default()
    };
    let report = cmd_train(&data, train_cfg, &out, None).unwrap();
    assert_eq!(report.history.len(), 2);
    assert!(out.join("train_log.csv").exists());
    assert!(out.join("seq_000").join("depth_000.png").exists());
    assert!(out.join("seq_000").join("frame_000.pfm").exists());
    assert!(out.join("seq_000").join("alignments.csv").exists());
    let csv = tmp("eval.csv");
    cmd_eval(&out.join("seq_000"), &data.join("seq_000"), Some(&csv)).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("image,abs_rel"));
    // 4 per-image rows plus the aggregate
    assert_eq!(text.lines().count(), 1 + 4 + 1);
}

#[test]
fn missing_images_txt_is_actionable() {
    let data = tmp("broken_data");
    fs::create_dir_all(data.join("seq_000")).unwrap();
    fs::write(data.join("seq_000").join("cameras.txt"), "1 PINHOLE 8 8 8 8 3.5 3.5\n").unwrap();
    let err = cmd_train(
        &data,
        TrainConfig::default(),
        &tmp("broken_out"),
        None,
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("images.txt"), "unhelpful error: {msg}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eval_reports_name_mismatch() {
    let (a, b) = (tmp("eval_a"), tmp("eval_b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let depth = deskdepth::image::Grid::constant(4, 4, 2.0);
    deskdepth::export::write_depth_png16(&a.join("depth_000.png"), &depth).unwrap();
    deskdepth::export::write_depth_png16(&b.join("depth_001.png"), &depth).unwrap();
    let err = cmd_eval(&a, &b, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("depth_001.png") && msg.contains("depth_000.png"), "{msg}");
}

#[test]
fn empty_ablation_grid_is_rejected() {
    let err = cmd_ablate(Path::new("/nonexistent"), None, &tmp("abl"), None, Some(" , ")).unwrap_err();
    assert!(err.to_string().contains("empty ablation grid"));
    assert_eq!(err.exit_code(), 2);
}
