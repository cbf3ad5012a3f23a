//! Standard monocular depth evaluation metrics with median scale alignment,
//! plus the scale-consistency diagnostic (standard deviation of the
//! per-image alignment factors).

use crate::error::{Error, Result};
use crate::image::Grid;

/// Depth range applied to predictions before metric computation.
pub const DEFAULT_DEPTH_CLAMP: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// median(gt) / median(pred) before clamping; 1.0 when alignment is off.
    pub scale_factor: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Computes metrics of one predicted depth map against ground truth.
/// Pixels with non-positive gt are excluded. With `median_align`, the
/// prediction is multiplied by median(gt)/median(pred) first; predictions
/// are then clamped to `clamp`.
pub fn compute_metrics(
    pred: &Grid,
    gt: &Grid,
    median_align: bool,
    clamp: (f64, f64),
) -> Result<Metrics> {
    if !pred.same_shape(gt) {
        return Err(Error::Eval(format!(
            "shape mismatch: pred {}x{}, gt {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut gt_vals = Vec::new();
    let mut pred_vals = Vec::new();
    for i in 0..gt.data.len() {
        if gt.data[i] > 0.0 {
            gt_vals.push(gt.data[i]);
            pred_vals.push(pred.data[i]);
        }
    }
    if gt_vals.is_empty() {
        return Err(Error::Eval("no valid ground-truth pixels".into()));
    }
    let scale = if median_align {
        let mg = median(&mut gt_vals.clone());
        let mp = median(&mut pred_vals.clone());
        if mp <= 0.0 {
            return Err(Error::Eval("non-positive median prediction".into()));
        }
        mg / mp
    } else {
        1.0
    };
    let n = gt_vals.len() as f64;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    let (mut d1, mut d2, mut d3) = (0usize, 0usize, 0usize);
    for (&g, &p0) in gt_vals.iter().zip(&pred_vals) {
        let p = (p0 * scale).clamp(clamp.0, clamp.1);
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25f64.powi(2) {
            d2 += 1;
        }
        if ratio < 1.25f64.powi(3) {
            d3 += 1;
        }
    }
    Ok(Metrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: d1 as f64 / n,
        delta2: d2 as f64 / n,
        delta3: d3 as f64 / n,
        scale_factor: scale,
    })
}

/// Averages per-image metrics.
pub fn aggregate(per_image: &[Metrics]) -> Metrics {
    let n = per_image.len() as f64;
    let mut out = Metrics::default();
    for m in per_image {
        out.abs_rel += m.abs_rel;
        out.sq_rel += m.sq_rel;
        out.rmse += m.rmse;
        out.rmse_log += m.rmse_log;
        out.delta1 += m.delta1;
        out.delta2 += m.delta2;
        out.delta3 += m.delta3;
        out.scale_factor += m.scale_factor;
    }
    out.abs_rel /= n;
    out.sq_rel /= n;
    out.rmse /= n;
    out.rmse_log /= n;
    out.delta1 /= n;
    out.delta2 /= n;
    out.delta3 /= n;
    out.scale_factor /= n;
    out
}

/// Population standard deviation of the per-image alignment scale factors.
/// Low values mean scale-consistent predictions across the set.
pub fn scale_std(factors: &[f64]) -> Result<f64> {
    if factors.len() < 2 {
        return Err(Error::Eval(format!(
            "scale_std requires at least 2 images, got {}",
            factors.len()
        )));
    }
    let n = factors.len() as f64;
    let mean = factors.iter().sum::<f64>() / n;
    let var = factors.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const CLAMP: (f64, f64) = (0.01, 100.0);

    #[test]
    fn exact_prediction() {
        let gt = Grid::from_fn(4, 4, |y, x| 1.0 + (y * 4 + x) as f64 * 0.2);
        let m = compute_metrics(&gt, &gt, false, CLAMP).unwrap();
        assert_eq!(m.abs_rel, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.delta1, 1.0);
    }

    #[test]
    fn median_alignment_removes_global_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let gt = Grid::from_fn(8, 8, |_, _| rng.gen_range(0.5..5.0));
        let pred = Grid::from_fn(8, 8, |_, _| rng.gen_range(0.5..5.0));
        let base = compute_metrics(&pred, &gt, true, CLAMP).unwrap();
        for k in [0.1, 1.0, 7.0] {
            let scaled = pred.map(|v| v * k);
            let m = compute_metrics(&scaled, &gt, true, CLAMP).unwrap();
            assert_relative_eq!(m.abs_rel, base.abs_rel, epsilon = 1e-12);
            assert_relative_eq!(m.rmse, base.rmse, epsilon = 1e-12);
            assert_relative_eq!(m.rmse_log, base.rmse_log, epsilon = 1e-12);
            assert_relative_eq!(m.delta1, base.delta1, epsilon = 1e-15);
        }
        // doubled prediction with alignment equals exact prediction
        let doubled = gt.map(|v| v * 2.0);
        let m = compute_metrics(&doubled, &gt, true, CLAMP).unwrap();
        assert!(m.abs_rel < 1e-12);
        assert_eq!(m.delta1, 1.0);
    }

    #[test]
    fn hand_computed_2x2_case() {
        // gt (1,2,4,8), pred (1,2,4,10): AbsRel = (0+0+0+0.25)/4 = 0.0625
        let gt = Grid {
            width: 2,
            height: 2,
            data: vec![1.0, 2.0, 4.0, 8.0],
        };
        let pred = Grid {
            width: 2,
            height: 2,
            data: vec![1.0, 2.0, 4.0, 10.0],
        };
        let m = compute_metrics(&pred, &gt, false, CLAMP).unwrap();
        assert_relative_eq!(m.abs_rel, 0.0625, epsilon = 1e-12);
        // SqRel = (0+0+0+4/8)/4 = 0.125; RMSE = sqrt(4/4) = 1
        assert_relative_eq!(m.sq_rel, 0.125, epsilon = 1e-12);
        assert_relative_eq!(m.rmse, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.rmse_log, ((10.0f64 / 8.0).ln().powi(2) / 4.0).sqrt(), epsilon = 1e-12);
        // 10/8 = 1.25 is NOT < 1.25 → delta1 = 3/4
        assert_relative_eq!(m.delta1, 0.75, epsilon = 1e-15);
        assert_relative_eq!(m.delta2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn delta_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        for _ in 0..20 {
            let gt = Grid::from_fn(6, 6, |_, _| rng.gen_range(0.5..5.0));
            let pred = Grid::from_fn(6, 6, |_, _| rng.gen_range(0.5..5.0));
            let m = compute_metrics(&pred, &gt, rng.gen_bool(0.5), CLAMP).unwrap();
            assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
            assert!((0.0..=1.0).contains(&m.delta1));
            assert!((0.0..=1.0).contains(&m.delta3));
        }
    }

    #[test]
    fn invalid_gt_pixels_excluded() {
        let gt = Grid {
            width: 2,
            height: 1,
            data: vec![2.0, 0.0],
        };
        let pred = Grid {
            width: 2,
            height: 1,
            data: vec![2.0, 99.0],
        };
        let m = compute_metrics(&pred, &gt, false, CLAMP).unwrap();
        assert_eq!(m.abs_rel, 0.0);
        // all-invalid gt is an error
        let zero = Grid::zeros(2, 1);
        assert!(compute_metrics(&pred, &zero, false, CLAMP).is_err());
    }

    #[test]
    fn scale_std_cases() {
        assert_eq!(scale_std(&[1.5, 1.5, 1.5]).unwrap(), 0.0);
        // population convention: std({1,3}) = 1
        assert_relative_eq!(scale_std(&[1.0, 3.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(scale_std(&[1.0]).is_err());
    }
}
