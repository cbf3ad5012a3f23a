//! Directly optimized depth representation: a 4-scale pyramid of raw
//! disparity logits. Each scale is mapped through a sigmoid to bounded
//! disparity and bilinearly upsampled to full resolution; depth is the
//! elementwise reciprocal.

use crate::error::{Error, Result};
use crate::image::Grid;

pub const NUM_SCALES: usize = 4;

#[derive(Debug, Clone)]
pub struct DepthPyramid {
    pub width: usize,
    pub height: usize,
    pub min_disp: f64,
    pub max_disp: f64,
    /// Raw logits, one grid per scale, scale s at (H/2^s) x (W/2^s).
    pub logits: Vec<Vec<f64>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl DepthPyramid {
    /// All-zero logits (mid-range disparity everywhere). Width and height
    /// must be divisible by 8 so every scale has integer resolution.
    pub fn new(width: usize, height: usize, min_disp: f64, max_disp: f64) -> Result<Self> {
        if width % 8 != 0 || height % 8 != 0 {
            return Err(Error::Config(format!(
                "pyramid resolution {width}x{height} must be divisible by 8"
            )));
        }
        if !(min_disp > 0.0 && max_disp > min_disp) {
            return Err(Error::Config(format!(
                "disparity bounds ({min_disp}, {max_disp}) must satisfy 0 < min < max"
            )));
        }
        let logits = (0..NUM_SCALES)
            .map(|s| vec![0.0; (width >> s) * (height >> s)])
            .collect();
        Ok(DepthPyramid {
            width,
            height,
            min_disp,
            max_disp,
            logits,
        })
    }

    pub fn scale_dims(&self, s: usize) -> (usize, usize) {
        (self.width >> s, self.height >> s)
    }

    /// Bounded disparity at the native resolution of scale `s`.
    pub fn disparity_grid(&self, s: usize) -> Grid {
        let (w, h) = self.scale_dims(s);
        let range = self.max_disp - self.min_disp;
        Grid {
            width: w,
            height: h,
            data: self.logits[s]
                .iter()
                .map(|&l| self.min_disp + range * sigmoid(l))
                .collect(),
        }
    }

    /// Full-resolution disparity map for scale `s`: sigmoid-bounded grid
    /// bilinearly upsampled by 2^s.
    pub fn predict_full_res(&self, s: usize) -> Grid {
        let native = self.disparity_grid(s);
        upsample_bilinear(&native, self.width, self.height)
    }

    /// Adjoint of `predict_full_res`: folds a full-resolution gradient back
    /// onto the raw logits of scale `s`.
    pub fn full_res_backward(&self, s: usize, grad_full: &Grid) -> Vec<f64> {
        let (w, h) = self.scale_dims(s);
        let grad_native = upsample_bilinear_adjoint(grad_full, w, h);
        let range = self.max_disp - self.min_disp;
        self.logits[s]
            .iter()
            .zip(&grad_native.data)
            .map(|(&l, &g)| {
                let sg = sigmoid(l);
                g * range * sg * (1.0 - sg)
            })
            .collect()
    }
}

/// depth = 1 / disparity, elementwise.
pub fn disparity_to_depth(disp: &Grid) -> Grid {
    disp.map(|d| 1.0 / d)
}

/// Chain rule through depth = 1/disp: d(depth)/d(disp) = -1/disp².
pub fn depth_grad_to_disparity(disp: &Grid, grad_depth: &Grid) -> Grid {
    Grid {
        width: disp.width,
        height: disp.height,
        data: disp
            .data
            .iter()
            .zip(&grad_depth.data)
            .map(|(&d, &g)| -g / (d * d))
            .collect(),
    }
}

/// Bilinear upsampling with half-pixel-centre alignment: output pixel
/// (x, y) samples the input at ((x+0.5)·w_in/w_out − 0.5, …), taps clamped
/// to the border.
pub fn upsample_bilinear(input: &Grid, out_w: usize, out_h: usize) -> Grid {
    let mut out = Grid::zeros(out_w, out_h);
    let sx = input.width as f64 / out_w as f64;
    let sy = input.height as f64 / out_h as f64;
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (input.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(input.height - 1);
        let wy = fy - y0 as f64;
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (input.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(input.width - 1);
            let wx = fx - x0 as f64;
            let v = input.at(y0, x0) * (1.0 - wx) * (1.0 - wy)
                + input.at(y0, x1) * wx * (1.0 - wy)
                + input.at(y1, x0) * (1.0 - wx) * wy
                + input.at(y1, x1) * wx * wy;
            out.set(y, x, v);
        }
    }
    out
}

/// Adjoint of `upsample_bilinear`: scatters the output gradient back onto
/// the input grid with the same tap weights.
pub fn upsample_bilinear_adjoint(grad_out: &Grid, in_w: usize, in_h: usize) -> Grid {
    let mut grad_in = Grid::zeros(in_w, in_h);
    let sx = in_w as f64 / grad_out.width as f64;
    let sy = in_h as f64 / grad_out.height as f64;
    for y in 0..grad_out.height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for x in 0..grad_out.width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            let g = grad_out.at(y, x);
            grad_in.add(y0, x0, g * (1.0 - wx) * (1.0 - wy));
            grad_in.add(y0, x1, g * wx * (1.0 - wy));
            grad_in.add(y1, x0, g * (1.0 - wx) * wy);
            grad_in.add(y1, x1, g * wx * wy);
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_logits_give_mid_disparity() {
        let pyr = DepthPyramid::new(16, 16, 0.1, 10.0).unwrap();
        for s in 0..NUM_SCALES {
            let d = pyr.predict_full_res(s);
            for &v in &d.data {
                assert_relative_eq!(v, (0.1 + 10.0) / 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn disparity_saturates_monotonically() {
        let mut pyr = DepthPyramid::new(8, 8, 0.1, 10.0).unwrap();
        let mut prev = 0.0;
        for l in [0.0, 2.0, 5.0, 8.0, 12.0] {
            pyr.logits[0].iter_mut().for_each(|v| *v = l);
            let d = pyr.predict_full_res(0).at(3, 3);
            assert!(d > prev);
            assert!(d < 10.0);
            prev = d;
        }
        assert!(prev > 10.0 - 1e-4);
    }

    #[test]
    fn hot_pixel_matches_bilinear_oracle() {
        // independent scalar bilinear interpolation oracle
        let mut pyr = DepthPyramid::new(16, 16, 0.1, 10.0).unwrap();
        let (w1, h1) = pyr.scale_dims(1);
        pyr.logits[1][3 * w1 + 5] = 1.7;
        let full = pyr.predict_full_res(1);

        let range = 10.0 - 0.1;
        let native: Vec<f64> = pyr.logits[1]
            .iter()
            .map(|&l| 0.1 + range / (1.0 + (-l as f64).exp()))
            .collect();
        for y in 0..16usize {
            for x in 0..16usize {
                let fy = ((y as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, (h1 - 1) as f64);
                let fx = ((x as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, (w1 - 1) as f64);
                let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h1 - 1), (x0 + 1).min(w1 - 1));
                let (wy, wx) = (fy - y0 as f64, fx - x0 as f64);
                let expect = native[y0 * w1 + x0] * (1.0 - wx) * (1.0 - wy)
                    + native[y0 * w1 + x1] * wx * (1.0 - wy)
                    + native[y1 * w1 + x0] * (1.0 - wx) * wy
                    + native[y1 * w1 + x1] * wx * wy;
                assert_relative_eq!(full.at(y, x), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reciprocal_depth() {
        let d = Grid::constant(4, 4, 0.5);
        let depth = disparity_to_depth(&d);
        assert_relative_eq!(depth.at(0, 0), 2.0, epsilon = 1e-15);
        // bounds map to reciprocal bounds
        let lo = disparity_to_depth(&Grid::constant(1, 1, 0.1));
        let hi = disparity_to_depth(&Grid::constant(1, 1, 10.0));
        assert_relative_eq!(lo.at(0, 0), 10.0, epsilon = 1e-12);
        assert_relative_eq!(hi.at(0, 0), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn pipeline_matches_scalar_oracle() {
        // scale 0 has no resampling: depth(p) = 1/(min + range*sigmoid(l))
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pyr = DepthPyramid::new(8, 8, 0.1, 10.0).unwrap();
        pyr.logits[0].iter_mut().for_each(|v| *v = rng.gen_range(-3.0..3.0));
        let depth = disparity_to_depth(&pyr.predict_full_res(0));
        for (i, &l) in pyr.logits[0].iter().enumerate() {
            let disp = 0.1 + 9.9 / (1.0 + (-l).exp());
            assert_relative_eq!(depth.data[i], 1.0 / disp, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotonicity_in_single_logit() {
        let mut pyr = DepthPyramid::new(8, 8, 0.1, 10.0).unwrap();
        let before = pyr.predict_full_res(2);
        pyr.logits[2][1] += 0.5;
        let after = pyr.predict_full_res(2);
        let mut any_increase = false;
        for i in 0..before.data.len() {
            assert!(after.data[i] >= before.data[i]);
            if after.data[i] > before.data[i] {
                any_increase = true;
            }
        }
        assert!(any_increase);
    }

    #[test]
    fn full_res_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut pyr = DepthPyramid::new(8, 8, 0.1, 10.0).unwrap();
        for s in 0..NUM_SCALES {
            pyr.logits[s]
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-2.0..2.0));
        }
        // scalar objective: weighted sum of the full-res map
        let weights = Grid::from_fn(8, 8, |y, x| ((y * 8 + x) as f64 * 0.37).sin());
        for s in 0..NUM_SCALES {
            let analytic = pyr.full_res_backward(s, &weights);
            let step = 1e-5;
            for i in 0..pyr.logits[s].len() {
                let orig = pyr.logits[s][i];
                pyr.logits[s][i] = orig + step;
                let lp: f64 = pyr
                    .predict_full_res(s)
                    .data
                    .iter()
                    .zip(&weights.data)
                    .map(|(a, b)| a * b)
                    .sum();
                pyr.logits[s][i] = orig - step;
                let lm: f64 = pyr
                    .predict_full_res(s)
                    .data
                    .iter()
                    .zip(&weights.data)
                    .map(|(a, b)| a * b)
                    .sum();
                pyr.logits[s][i] = orig;
                let fd = (lp - lm) / (2.0 * step);
                assert_relative_eq!(analytic[i], fd, epsilon = 1e-7, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn invalid_construction_rejected() {
        assert!(DepthPyramid::new(10, 8, 0.1, 10.0).is_err());
        assert!(DepthPyramid::new(8, 8, 0.0, 10.0).is_err());
        assert!(DepthPyramid::new(8, 8, 1.0, 0.5).is_err());
    }
}
