//! SSIM + L1 view-reconstruction error and its reverse-mode adjoint.
//!
//! SSIM uses 3x3 mean filtering with reflect padding, C1 = 0.01², C2 = 0.03²,
//! computed per channel and averaged. The combined per-pixel error is
//! α·(1 − SSIM)/2 + (1 − α)·|Ĩ − I| with α = 0.85.

use crate::image::{Grid, ImageBuffer};

pub const ALPHA: f64 = 0.85;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    // symmetric half-sample reflection, valid for |overhang| <= n
    if i < 0 {
        (-i - 1) as usize
    } else if i as usize >= n {
        2 * n - 1 - i as usize
    } else {
        i as usize
    }
}

/// 3x3 box mean with reflect padding.
pub fn mean_filter3(input: &Grid) -> Grid {
    let (w, h) = (input.width, input.height);
    let mut out = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1isize..=1 {
                let yy = reflect(y as isize + dy, h);
                for dx in -1isize..=1 {
                    let xx = reflect(x as isize + dx, w);
                    acc += input.at(yy, xx);
                }
            }
            out.set(y, x, acc / 9.0);
        }
    }
    out
}

/// Adjoint of `mean_filter3`: scatters each output gradient back to its nine
/// tap positions through the same reflect mapping.
pub fn mean_filter3_adjoint(grad_out: &Grid) -> Grid {
    let (w, h) = (grad_out.width, grad_out.height);
    let mut grad_in = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let g = grad_out.at(y, x) / 9.0;
            for dy in -1isize..=1 {
                let yy = reflect(y as isize + dy, h);
                for dx in -1isize..=1 {
                    let xx = reflect(x as isize + dx, w);
                    grad_in.add(yy, xx, g);
                }
            }
        }
    }
    grad_in
}

struct ChannelStats {
    mx: Grid,
    my: Grid,
    mxx: Grid,
    myy: Grid,
    mxy: Grid,
}

fn channel_stats(x: &Grid, y: &Grid) -> ChannelStats {
    let xx = Grid {
        width: x.width,
        height: x.height,
        data: x.data.iter().map(|v| v * v).collect(),
    };
    let yy = Grid {
        width: y.width,
        height: y.height,
        data: y.data.iter().map(|v| v * v).collect(),
    };
    let xy = Grid {
        width: x.width,
        height: x.height,
        data: x.data.iter().zip(&y.data).map(|(a, b)| a * b).collect(),
    };
    ChannelStats {
        mx: mean_filter3(x),
        my: mean_filter3(y),
        mxx: mean_filter3(&xx),
        myy: mean_filter3(&yy),
        mxy: mean_filter3(&xy),
    }
}

fn ssim_at(st: &ChannelStats, i: usize) -> f64 {
    let mx = st.mx.data[i];
    let my = st.my.data[i];
    let sx = st.mxx.data[i] - mx * mx;
    let sy = st.myy.data[i] - my * my;
    let sxy = st.mxy.data[i] - mx * my;
    let n1 = 2.0 * mx * my + C1;
    let n2 = 2.0 * sxy + C2;
    let d1 = mx * mx + my * my + C1;
    let d2 = sx + sy + C2;
    (n1 * n2) / (d1 * d2)
}

/// Per-pixel reconstruction error F(Ĩ, I) of the predicted image against
/// the target.
pub fn recon_error(pred: &ImageBuffer, target: &ImageBuffer) -> Grid {
    assert!(pred.same_shape(target), "shape mismatch in recon_error");
    let (w, h, c) = (pred.width, pred.height, pred.channels);
    let mut ssim_sum = Grid::zeros(w, h);
    for ch in 0..c {
        let x = pred.channel(ch);
        let y = target.channel(ch);
        let st = channel_stats(&x, &y);
        for i in 0..ssim_sum.data.len() {
            ssim_sum.data[i] += ssim_at(&st, i);
        }
    }
    let mut out = Grid::zeros(w, h);
    for yy in 0..h {
        for xx in 0..w {
            let i = yy * w + xx;
            let ssim = ssim_sum.data[i] / c as f64;
            let mut l1 = 0.0;
            for ch in 0..c {
                l1 += (pred.at(yy, xx, ch) - target.at(yy, xx, ch)).abs();
            }
            l1 /= c as f64;
            out.data[i] = ALPHA * (1.0 - ssim) / 2.0 + (1.0 - ALPHA) * l1;
        }
    }
    out
}

/// Gradient of `Σ_p upstream(p)·F(Ĩ, I)(p)` with respect to the predicted
/// image Ĩ. The target is treated as constant.
pub fn recon_error_backward(
    pred: &ImageBuffer,
    target: &ImageBuffer,
    upstream: &Grid,
) -> ImageBuffer {
    let (w, h, c) = (pred.width, pred.height, pred.channels);
    let n = w * h;
    let mut grad = ImageBuffer::zeros(w, h, c);
    let cd = c as f64;
    for ch in 0..c {
        let x = pred.channel(ch);
        let y = target.channel(ch);
        let st = channel_stats(&x, &y);
        // upstream for the ssim map of this channel
        let mut gmx = Grid::zeros(w, h);
        let mut gmxx = Grid::zeros(w, h);
        let mut gmxy = Grid::zeros(w, h);
        for i in 0..n {
            let g = upstream.data[i] * (-ALPHA / 2.0) / cd;
            let mx = st.mx.data[i];
            let my = st.my.data[i];
            let sx = st.mxx.data[i] - mx * mx;
            let sy = st.myy.data[i] - my * my;
            let sxy = st.mxy.data[i] - mx * my;
            let n1 = 2.0 * mx * my + C1;
            let n2 = 2.0 * sxy + C2;
            let d1 = mx * mx + my * my + C1;
            let d2 = sx + sy + C2;
            let ds_dsx = -(n1 * n2) / (d1 * d2 * d2);
            let ds_dsxy = 2.0 * n1 / (d1 * d2);
            let ds_dmx = 2.0 * my * n2 / (d1 * d2) - 2.0 * mx * n1 * n2 / (d1 * d1 * d2)
                + ds_dsx * (-2.0 * mx)
                + ds_dsxy * (-my);
            gmx.data[i] = g * ds_dmx;
            gmxx.data[i] = g * ds_dsx; // σx = mxx − mx², direct mxx term
            gmxy.data[i] = g * ds_dsxy; // σxy = mxy − mx·my, direct mxy term
        }
        let amx = mean_filter3_adjoint(&gmx);
        let amxx = mean_filter3_adjoint(&gmxx);
        let amxy = mean_filter3_adjoint(&gmxy);
        for yy in 0..h {
            for xx in 0..w {
                let i = yy * w + xx;
                let diff = x.data[i] - y.data[i];
                let l1_grad = upstream.data[i] * (1.0 - ALPHA) / cd * sign(diff);
                let v = amx.data[i] + amxx.data[i] * 2.0 * x.data[i] + amxy.data[i] * y.data[i]
                    + l1_grad;
                grad.set(yy, xx, ch, v);
            }
        }
    }
    grad
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
