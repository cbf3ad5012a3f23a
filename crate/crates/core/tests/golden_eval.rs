//! Golden-file regression test for the eval CSV output.
//!
//! The fixture depths are built arithmetically (no RNG) so the CSV is fully
//! deterministic across platforms. Regenerate `golden/eval_metrics.csv` by
//! deleting it and copying the freshly written CSV after verifying the
//! numbers by hand.

use deskdepth::cli::cmd_eval;
use deskdepth::export::write_depth_png16;
use deskdepth::image::Grid;
use std::fs;

fn fixture_grid(w: usize, h: usize, base: f64, slope: f64) -> Grid {
    let mut g = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            g.data[y * w + x] = base + slope * (x + y) as f64 / (w + h) as f64;
        }
    }
    g
}

#[test]
fn eval_csv_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let gt_dir = tmp.path().join("gt");
    let pred_dir = tmp.path().join("pred");
    fs::create_dir_all(&gt_dir).unwrap();
    fs::create_dir_all(&pred_dir).unwrap();
    for i in 0..3 {
        let gt = fixture_grid(16, 12, 1.5 + 0.25 * i as f64, 2.0);
        // Prediction: scaled plus a mild depth-dependent bend so the error
        // metrics are nonzero but stable.
        let mut pred = gt.clone();
        for v in &mut pred.data {
            *v = 0.4 * *v + 0.02 * (*v - 2.0) * (*v - 2.0);
        }
        let name = format!("depth_{i:03}.png");
        write_depth_png16(&gt_dir.join(&name), &gt).unwrap();
        write_depth_png16(&pred_dir.join(&name), &pred).unwrap();
    }
    let csv = tmp.path().join("metrics.csv");
    cmd_eval(&pred_dir, &gt_dir, Some(&csv)).unwrap();
    let got = fs::read_to_string(&csv).unwrap();
    let golden_path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/golden/eval_metrics.csv"
    );
    let want = fs::read_to_string(golden_path).unwrap_or_else(|_| {
        panic!("missing golden file {golden_path}; fresh output:\n{got}")
    });
    assert_eq!(got, want);
}
