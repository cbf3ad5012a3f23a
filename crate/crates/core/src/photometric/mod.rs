//! View-reconstruction supervision: warping, SSIM+L1 error, per-pixel
//! minimum over forward/backward sources, auto-masking, edge-aware
//! smoothness and total-loss assembly.

pub mod ssim;
pub mod warp;

pub use ssim::{recon_error, recon_error_backward, ALPHA};
pub use warp::{warp, warp_backward, warp_pose, WarpCache, WarpGrads, WarpResult};

use crate::image::{Grid, ImageBuffer, Mask};

/// Weight of the residual-pose reconstruction term.
pub const BETA: f64 = 0.2;
/// Weight of the smoothness term.
pub const LAMBDA: f64 = 0.001;
/// Weight of the self-distillation term.
pub const MU: f64 = 0.1;

/// Scalar loss terms of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub rec_t: f64,
    pub rec_r: f64,
    pub smooth: f64,
    pub isd: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Assembles the weighted total from its parts.
    pub fn assemble(rec_t: f64, rec_r: f64, smooth: f64, isd: f64) -> Self {
        LossBreakdown {
            rec_t,
            rec_r,
            smooth,
            isd,
            total: total_loss(rec_t, rec_r, smooth, isd),
        }
    }
}

/// L_tot = L_rec_t + β·L_rec_r + λ·L_smooth + μ·L_isd.
pub fn total_loss(rec_t: f64, rec_r: f64, smooth: f64, isd: f64) -> f64 {
    rec_t + BETA * rec_r + LAMBDA * smooth + MU * isd
}

/// Per-pixel minimum of reconstruction errors over warped sources.
#[derive(Debug, Clone)]
pub struct MinRecon {
    /// Minimum error where valid; unspecified elsewhere.
    pub loss: Grid,
    /// Index into the source list attaining the minimum; usize::MAX where
    /// no source is valid.
    pub source: Vec<usize>,
    /// True where at least one source is valid.
    pub valid: Mask,
}

/// Per-pixel minimum over the given error maps, honoring
/// per-source validity. Ties go to the earliest source.
pub fn min_recon_loss(errors: &[&Grid], valids: &[&Mask]) -> MinRecon {
    assert!(!errors.is_empty());
    assert_eq!(errors.len(), valids.len());
    let (w, h) = (errors[0].width, errors[0].height);
    let mut loss = Grid::constant(w, h, f64::INFINITY);
    let mut source = vec![usize::MAX; w * h];
    let mut valid = Mask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for (s, (err, m)) in errors.iter().zip(valids).enumerate() {
                if !m.at(y, x) {
                    continue;
                }
                let e = err.at(y, x);
                if e < loss.data[i] {
                    loss.data[i] = e;
                    source[i] = s;
                    valid.set(y, x, true);
                }
            }
            if !valid.at(y, x) {
                loss.data[i] = 0.0;
            }
        }
    }
    MinRecon {
        loss,
        source,
        valid,
    }
}

/// Auto-mask from precomputed error minima: a pixel is kept iff the best
/// warped error strictly beats the best raw (unwarped) source error.
pub fn automask_from_errors(min_warped: &Grid, warped_valid: &Mask, min_raw: &Grid) -> Mask {
    let mut mask = Mask::filled(min_warped.width, min_warped.height, false);
    for y in 0..min_warped.height {
        for x in 0..min_warped.width {
            if warped_valid.at(y, x) && min_warped.at(y, x) < min_raw.at(y, x) {
                mask.set(y, x, true);
            }
        }
    }
    mask
}

/// Auto-mask μ: keeps pixels where warping beats copying the raw source,
/// filtering static frames and repeated textures.
pub fn automask(
    target: &ImageBuffer,
    raw_sources: &[&ImageBuffer],
    warped: &[&WarpResult],
) -> Mask {
    let raw_errors: Vec<Grid> = raw_sources
        .iter()
        .map(|s| recon_error(s, target))
        .collect();
    let all_valid = Mask::filled(target.width, target.height, true);
    let raw_refs: Vec<&Grid> = raw_errors.iter().collect();
    let raw_masks: Vec<&Mask> = raw_errors.iter().map(|_| &all_valid).collect();
    let min_raw = min_recon_loss(&raw_refs, &raw_masks);

    let warped_errors: Vec<Grid> = warped
        .iter()
        .map(|w| recon_error(&w.image, target))
        .collect();
    let warped_refs: Vec<&Grid> = warped_errors.iter().collect();
    let warped_masks: Vec<&Mask> = warped.iter().map(|w| &w.valid).collect();
    let min_warped = min_recon_loss(&warped_refs, &warped_masks);

    automask_from_errors(&min_warped.loss, &min_warped.valid, &min_raw.loss)
}

/// Mean of `grid` over masked pixels. `None` when the mask is empty.
pub fn masked_mean(grid: &Grid, mask: &Mask) -> Option<f64> {
    let count = mask.count();
    if count == 0 {
        return None;
    }
    let mut acc = 0.0;
    for i in 0..grid.data.len() {
        if mask.data[i] {
            acc += grid.data[i];
        }
    }
    Some(acc / count as f64)
}

/// Mean absolute image gradient over channels, forward differences.
fn image_gradients(image: &ImageBuffer) -> (Grid, Grid) {
    let (w, h, c) = (image.width, image.height, image.channels);
    let mut gx = Grid::zeros(w, h);
    let mut gy = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let mut acc = 0.0;
                for ch in 0..c {
                    acc += (image.at(y, x + 1, ch) - image.at(y, x, ch)).abs();
                }
                gx.set(y, x, acc / c as f64);
            }
            if y + 1 < h {
                let mut acc = 0.0;
                for ch in 0..c {
                    acc += (image.at(y + 1, x, ch) - image.at(y, x, ch)).abs();
                }
                gy.set(y, x, acc / c as f64);
            }
        }
    }
    (gx, gy)
}

/// Edge-aware smoothness on mean-normalized disparity:
/// mean over pixels of |∂x d*|·e^{−|∂x I|} + |∂y d*|·e^{−|∂y I|}
/// with d* = d / mean(d) and forward differences.
pub fn smoothness_loss(disp: &Grid, image: &ImageBuffer) -> f64 {
    let (w, h) = (disp.width, disp.height);
    let m = disp.mean();
    let (igx, igy) = image_gradients(image);
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let d = disp.at(y, x) / m;
            if x + 1 < w {
                let gx = disp.at(y, x + 1) / m - d;
                acc += gx.abs() * (-igx.at(y, x)).exp();
            }
            if y + 1 < h {
                let gy = disp.at(y + 1, x) / m - d;
                acc += gy.abs() * (-igy.at(y, x)).exp();
            }
        }
    }
    acc / (w * h) as f64
}

/// Gradient of `smoothness_loss` with respect to the disparity map.
pub fn smoothness_backward(disp: &Grid, image: &ImageBuffer) -> Grid {
    let (w, h) = (disp.width, disp.height);
    let n = (w * h) as f64;
    let m = disp.mean();
    let (igx, igy) = image_gradients(image);
    // gradient w.r.t. the normalized disparity d*
    let mut u = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let d = disp.at(y, x) / m;
            if x + 1 < w {
                let gx = disp.at(y, x + 1) / m - d;
                let s = sign(gx) * (-igx.at(y, x)).exp() / n;
                u.add(y, x + 1, s);
                u.add(y, x, -s);
            }
            if y + 1 < h {
                let gy = disp.at(y + 1, x) / m - d;
                let s = sign(gy) * (-igy.at(y, x)).exp() / n;
                u.add(y + 1, x, s);
                u.add(y, x, -s);
            }
        }
    }
    // chain through d* = d / mean(d):
    // dL/dd_k = u_k/m − (Σ_j u_j d_j) / (m²·N)
    let dot: f64 = u.data.iter().zip(&disp.data).map(|(a, b)| a * b).sum();
    let correction = dot / (m * m * n);
    Grid {
        width: w,
        height: h,
        data: u.data.iter().map(|&uk| uk / m - correction).collect(),
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn total_loss_assembly_weights() {
        assert_relative_eq!(total_loss(1.0, 1.0, 1.0, 1.0), 1.301, epsilon = 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0), 0.0);
        let b = LossBreakdown::assemble(0.4, 0.3, 2.0, 0.5);
        assert_relative_eq!(
            b.total,
            0.4 + BETA * 0.3 + LAMBDA * 2.0 + MU * 0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn min_recon_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let a = Grid::from_fn(6, 6, |_, _| rng.gen_range(0.0..1.0));
        let b = Grid::from_fn(6, 6, |_, _| rng.gen_range(0.0..1.0));
        let ma = Mask::filled(6, 6, true);
        let mut mb = Mask::filled(6, 6, true);
        mb.set(0, 0, false);
        let min = min_recon_loss(&[&a, &b], &[&ma, &mb]);
        for y in 0..6 {
            for x in 0..6 {
                let expect = if y == 0 && x == 0 {
                    a.at(0, 0)
                } else {
                    a.at(y, x).min(b.at(y, x))
                };
                assert_relative_eq!(min.loss.at(y, x), expect, epsilon = 1e-15);
                assert!(min.loss.at(y, x) <= a.at(y, x) + 1e-15);
            }
        }
        assert!(min.valid.at(0, 0));
    }

    #[test]
    fn min_recon_perfect_source_dominates() {
        let zero = Grid::zeros(4, 4);
        let other = Grid::constant(4, 4, 0.7);
        let m = Mask::filled(4, 4, true);
        let min = min_recon_loss(&[&other, &zero], &[&m, &m]);
        for &v in &min.loss.data {
            assert_eq!(v, 0.0);
        }
        assert!(min.source.iter().all(|&s| s == 1));
    }

    #[test]
    fn min_recon_identical_sources_equal_either() {
        let a = Grid::constant(4, 4, 0.42);
        let m = Mask::filled(4, 4, true);
        let min = min_recon_loss(&[&a, &a], &[&m, &m]);
        for &v in &min.loss.data {
            assert_relative_eq!(v, 0.42, epsilon = 1e-15);
        }
        // ties go to the earliest source
        assert!(min.source.iter().all(|&s| s == 0));
    }

    #[test]
    fn automask_rejects_static_pair() {
        // source == target: warped error can never strictly beat raw error
        let mut img = ImageBuffer::zeros(8, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        img.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        let warped = WarpResult {
            image: img.clone(),
            valid: Mask::filled(8, 8, true),
        };
        let mask = automask(&img, &[&img], &[&warped]);
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn automask_tie_rejected() {
        let a = Grid::constant(4, 4, 0.5);
        let valid = Mask::filled(4, 4, true);
        let mask = automask_from_errors(&a, &valid, &a);
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn smoothness_constant_disparity_zero() {
        let disp = Grid::constant(8, 8, 3.0);
        let img = ImageBuffer::zeros(8, 8, 3);
        assert_eq!(smoothness_loss(&disp, &img), 0.0);
    }

    #[test]
    fn smoothness_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let disp = Grid::from_fn(8, 8, |_, _| rng.gen_range(0.5..5.0));
        let mut img = ImageBuffer::zeros(8, 8, 3);
        img.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        let base = smoothness_loss(&disp, &img);
        for k in [0.1, 3.0, 42.0] {
            let scaled = disp.map(|v| v * k);
            assert_relative_eq!(smoothness_loss(&scaled, &img), base, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothness_step_edge_hand_case() {
        // 4x4 disparity: left half 1, right half 2, constant image.
        // mean = 1.5; the only nonzero forward x-diffs are at x=1 in every
        // row: (2−1)/1.5 = 2/3 with unit edge weight. Loss = 4·(2/3)/16 = 1/6.
        let disp = Grid::from_fn(4, 4, |_, x| if x < 2 { 1.0 } else { 2.0 });
        let img = ImageBuffer::zeros(4, 4, 3);
        assert_relative_eq!(smoothness_loss(&disp, &img), 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn smoothness_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let mut disp = Grid::from_fn(8, 8, |_, _| rng.gen_range(0.5..5.0));
        let mut img = ImageBuffer::zeros(8, 8, 3);
        img.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        let grad = smoothness_backward(&disp, &img);
        let step = 1e-6;
        for i in 0..disp.data.len() {
            let orig = disp.data[i];
            disp.data[i] = orig + step;
            let lp = smoothness_loss(&disp, &img);
            disp.data[i] = orig - step;
            let lm = smoothness_loss(&disp, &img);
            disp.data[i] = orig;
            let fd = (lp - lm) / (2.0 * step);
            assert_relative_eq!(grad.data[i], fd, epsilon = 1e-7, max_relative = 1e-4);
        }
    }
}
