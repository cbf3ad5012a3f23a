//! Demonstrates the per-pixel teacher used for iterative self-distillation:
//! across the four pyramid scales, the disparity with the lowest
//! reconstruction error at each pixel becomes the (detached) target.

use deskdepth::image::Grid;
use deskdepth::isd::{fold_all_scales, isd_loss};

fn main() {
    let (w, h) = (8, 8);

    // four candidate disparity maps with different constant offsets
    let disps: Vec<Grid> = (0..4)
        .map(|s| {
            let mut g = Grid::zeros(w, h);
            for v in &mut g.data {
                *v = 2.0 + 0.3 * s as f64;
            }
            g
        })
        .collect();

    // scale s is the most accurate inside its own vertical band
    let errors: Vec<Grid> = (0..4)
        .map(|s| {
            let mut g = Grid::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    let band = x * 4 / w;
                    g.data[y * w + x] = if band == s { 0.01 } else { 0.5 };
                }
            }
            g
        })
        .collect();

    let state = fold_all_scales(&errors, &disps);
    for y in [0] {
        for x in 0..w {
            let best = state.best().data[y * w + x];
            println!("pixel ({x},{y}): teacher disparity {best:.2}");
        }
    }
    println!("distillation loss against teacher: {:.6}", isd_loss(&state, &disps));
}
