//! Differentiable inverse warping: reconstructs the target view by bilinear
//! sampling of the source image at depth-reprojected coordinates.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{Intrinsics, Pose};
use crate::image::{Grid, ImageBuffer, Mask};

const MIN_Z: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct WarpResult {
    /// Reconstructed target image Ĩ; masked-out pixels are zero.
    pub image: ImageBuffer,
    /// True where all four bilinear taps are in bounds and the reprojected
    /// point lies in front of the source camera.
    pub valid: Mask,
}

/// Per-pixel intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct WarpCache {
    width: usize,
    height: usize,
    valid: Vec<bool>,
    /// Continuous source coordinates per pixel.
    su: Vec<f64>,
    sv: Vec<f64>,
    /// Source-camera point per pixel.
    xc: Vec<Vector3<f64>>,
}

/// Gradients produced by the warp adjoint, in "matrix sense" for the pose:
/// the caller chains `d_rotation`/`d_translation` into its own pose
/// parameterization.
#[derive(Debug, Clone)]
pub struct WarpGrads {
    /// dL/d(depth map).
    pub d_depth: Grid,
    /// dL/dt for Xc = R·X + t (sum of per-pixel camera-point gradients).
    pub d_translation: Vector3<f64>,
    /// dL/dR as a 3x3 matrix: Σ_p g_p · X_pᵀ with X the target-camera point.
    pub d_rotation: Matrix3<f64>,
}

/// Warps `source` into the target view through `depth` and the relative pose
/// (rotation `r`, translation `t`) mapping target-camera to source-camera
/// coordinates.
pub fn warp(
    source: &ImageBuffer,
    depth: &Grid,
    k: &Intrinsics,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
) -> (WarpResult, WarpCache) {
    let (w, h, c) = (source.width, source.height, source.channels);
    debug_assert_eq!((depth.width, depth.height), (w, h));
    let mut image = ImageBuffer::zeros(w, h, c);
    let mut valid = Mask::filled(w, h, false);
    let n = w * h;
    let mut cache = WarpCache {
        width: w,
        height: h,
        valid: vec![false; n],
        su: vec![0.0; n],
        sv: vec![0.0; n],
        xc: vec![Vector3::zeros(); n],
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ray = k.unproject(x as f64, y as f64);
            let xc = r * (ray * depth.at(y, x)) + t;
            cache.xc[i] = xc;
            if xc.z <= MIN_Z {
                // behind the camera: fall back to the target-side pixel so
                // later windowed filtering never sees synthetic black
                for ch in 0..c {
                    image.set(y, x, ch, source.at(y, x, ch));
                }
                continue;
            }
            let su = k.fx * xc.x / xc.z + k.cx;
            let sv = k.fy * xc.y / xc.z + k.cy;
            cache.su[i] = su;
            cache.sv[i] = sv;
            let in_bounds =
                su >= 0.0 && sv >= 0.0 && su <= (w - 1) as f64 && sv <= (h - 1) as f64;
            // out-of-bounds samples clamp to the border (masked invalid, but
            // kept photometrically plausible for windowed filters)
            let su_c = su.clamp(0.0, (w - 1) as f64);
            let sv_c = sv.clamp(0.0, (h - 1) as f64);
            // a sample exactly on the far border is still interpolable
            let x0f = if su_c >= (w - 1) as f64 {
                su_c - 1.0
            } else {
                su_c.floor()
            };
            let y0f = if sv_c >= (h - 1) as f64 {
                sv_c - 1.0
            } else {
                sv_c.floor()
            };
            let (x0, y0) = (x0f as usize, y0f as usize);
            let (wx, wy) = (su_c - x0f, sv_c - y0f);
            for ch in 0..c {
                let v = source.at(y0, x0, ch) * (1.0 - wx) * (1.0 - wy)
                    + source.at(y0, x0 + 1, ch) * wx * (1.0 - wy)
                    + source.at(y0 + 1, x0, ch) * (1.0 - wx) * wy
                    + source.at(y0 + 1, x0 + 1, ch) * wx * wy;
                image.set(y, x, ch, v);
            }
            if in_bounds {
                valid.set(y, x, true);
                cache.valid[i] = true;
            }
        }
    }
    (WarpResult { image, valid }, cache)
}

/// Backward pass of `warp` given dL/dĨ. Gradients flow through every pixel
/// whose sample is depth-dependent, including border-clamped ones (with the
/// clamped coordinate's derivative zeroed); behind-camera fills are constant.
/// The source image is treated as constant.
pub fn warp_backward(
    cache: &WarpCache,
    source: &ImageBuffer,
    depth: &Grid,
    k: &Intrinsics,
    r: &Matrix3<f64>,
    grad_image: &ImageBuffer,
) -> WarpGrads {
    let (w, h, c) = (cache.width, cache.height, source.channels);
    let mut d_depth = Grid::zeros(w, h);
    let mut d_translation = Vector3::zeros();
    let mut d_rotation = Matrix3::zeros();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if cache.xc[i].z <= MIN_Z {
                continue;
            }
            let (su, sv) = (cache.su[i], cache.sv[i]);
            let su_c = su.clamp(0.0, (w - 1) as f64);
            let sv_c = sv.clamp(0.0, (h - 1) as f64);
            let x0f = if su_c >= (w - 1) as f64 {
                su_c - 1.0
            } else {
                su_c.floor()
            };
            let y0f = if sv_c >= (h - 1) as f64 {
                sv_c - 1.0
            } else {
                sv_c.floor()
            };
            let (x0, y0) = (x0f as usize, y0f as usize);
            let (wx, wy) = (su_c - x0f, sv_c - y0f);
            let mut gu = 0.0;
            let mut gv = 0.0;
            for ch in 0..c {
                let g = grad_image.at(y, x, ch);
                if g == 0.0 {
                    continue;
                }
                let s00 = source.at(y0, x0, ch);
                let s01 = source.at(y0, x0 + 1, ch);
                let s10 = source.at(y0 + 1, x0, ch);
                let s11 = source.at(y0 + 1, x0 + 1, ch);
                gu += g * ((s01 - s00) * (1.0 - wy) + (s11 - s10) * wy);
                gv += g * ((s10 - s00) * (1.0 - wx) + (s11 - s01) * wx);
            }
            if su < 0.0 || su > (w - 1) as f64 {
                gu = 0.0;
            }
            if sv < 0.0 || sv > (h - 1) as f64 {
                gv = 0.0;
            }
            if gu == 0.0 && gv == 0.0 {
                continue;
            }
            let xc = cache.xc[i];
            let z = xc.z;
            let g_xc = Vector3::new(
                k.fx * gu / z,
                k.fy * gv / z,
                -(k.fx * gu * xc.x + k.fy * gv * xc.y) / (z * z),
            );
            d_translation += g_xc;
            let ray = k.unproject(x as f64, y as f64);
            let x_target = ray * depth.at(y, x);
            d_rotation += g_xc * x_target.transpose();
            d_depth.set(y, x, g_xc.dot(&(r * ray)));
        }
    }
    WarpGrads {
        d_depth,
        d_translation,
        d_rotation,
    }
}

/// Convenience wrapper taking a `Pose`.
pub fn warp_pose(
    source: &ImageBuffer,
    depth: &Grid,
    k: &Intrinsics,
    pose: &Pose,
) -> (WarpResult, WarpCache) {
    warp(source, depth, k, &pose.rotation.matrix(), &pose.translation)
}
