//! Overfitting-aware iterative self-distillation: per-pixel selection of the
//! lowest-error disparity across scales as a detached teacher, supervised via
//! a log-difference loss.

use crate::depth::NUM_SCALES;
use crate::image::Grid;

/// Running per-pixel champion across folded scales. `disp_best` is a
/// teacher target: it never receives gradients.
#[derive(Debug, Clone, Default)]
pub struct DistillState {
    pub disp_best: Option<Grid>,
    pub error_min: Option<Grid>,
}

impl DistillState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one scale into the state. On the first fold the state is
    /// seeded with this scale's disparity and error; afterwards a pixel's
    /// champion is replaced only on strict improvement, so the
    /// earliest-folded scale wins ties.
    pub fn fold_scale(&mut self, error: &Grid, disp: &Grid) {
        debug_assert!(error.same_shape(disp));
        match (&mut self.disp_best, &mut self.error_min) {
            (Some(best), Some(emin)) => {
                for i in 0..error.data.len() {
                    if error.data[i] < emin.data[i] {
                        emin.data[i] = error.data[i];
                        best.data[i] = disp.data[i];
                    }
                }
            }
            _ => {
                self.disp_best = Some(disp.clone());
                self.error_min = Some(error.clone());
            }
        }
    }

    pub fn best(&self) -> &Grid {
        self.disp_best.as_ref().expect("no scale folded")
    }
}

/// L_ISD = Σ_s mean log(|disp_best − D^s| + 1) over the full-resolution
/// disparity maps. The teacher is a constant.
pub fn isd_loss(state: &DistillState, disps: &[Grid]) -> f64 {
    let best = state.best();
    let mut total = 0.0;
    for disp in disps {
        let mut acc = 0.0;
        for i in 0..disp.data.len() {
            acc += ((best.data[i] - disp.data[i]).abs() + 1.0).ln();
        }
        total += acc / disp.data.len() as f64;
    }
    total
}

/// Gradient of `isd_loss` with respect to each scale's disparity map.
/// The selection path through `disp_best` is a stop-gradient.
pub fn isd_loss_backward(state: &DistillState, disps: &[Grid]) -> Vec<Grid> {
    let best = state.best();
    disps
        .iter()
        .map(|disp| {
            let n = disp.data.len() as f64;
            Grid {
                width: disp.width,
                height: disp.height,
                data: disp
                    .data
                    .iter()
                    .zip(&best.data)
                    .map(|(&d, &b)| {
                        let diff = d - b;
                        sign(diff) / (diff.abs() + 1.0) / n
                    })
                    .collect(),
            }
        })
        .collect()
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

/// Folds all scales of one training sample in scale order.
pub fn fold_all_scales(errors: &[Grid], disps: &[Grid]) -> DistillState {
    debug_assert_eq!(errors.len(), NUM_SCALES);
    let mut state = DistillState::new();
    for (e, d) in errors.iter().zip(disps) {
        state.fold_scale(e, d);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, rng: &mut impl Rng) -> Grid {
        Grid::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn single_scale_initializes_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let e = random_grid(4, 4, &mut rng);
        let d = random_grid(4, 4, &mut rng);
        let mut state = DistillState::new();
        state.fold_scale(&e, &d);
        assert_eq!(state.best().data, d.data);
        assert_eq!(state.error_min.as_ref().unwrap().data, e.data);
    }

    #[test]
    fn dominant_second_scale_wins_everywhere() {
        let e0 = Grid::constant(4, 4, 0.9);
        let d0 = Grid::constant(4, 4, 1.0);
        let e1 = Grid::constant(4, 4, 0.1);
        let d1 = Grid::constant(4, 4, 2.0);
        let mut state = DistillState::new();
        state.fold_scale(&e0, &d0);
        state.fold_scale(&e1, &d1);
        assert!(state.best().data.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn fold_matches_exhaustive_argmin_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for _ in 0..100 {
            let errors: Vec<Grid> = (0..4).map(|_| random_grid(6, 6, &mut rng)).collect();
            let disps: Vec<Grid> = (0..4).map(|_| random_grid(6, 6, &mut rng)).collect();
            let state = fold_all_scales(&errors, &disps);
            for i in 0..36 {
                // brute-force per-pixel argmin, first scale wins ties
                let mut best_s = 0;
                for s in 1..4 {
                    if errors[s].data[i] < errors[best_s].data[i] {
                        best_s = s;
                    }
                }
                assert_eq!(state.error_min.as_ref().unwrap().data[i], errors[best_s].data[i]);
                assert_eq!(state.best().data[i], disps[best_s].data[i]);
            }
        }
    }

    #[test]
    fn folding_never_increases_error_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let mut state = DistillState::new();
        let mut prev: Option<Vec<f64>> = None;
        for _ in 0..6 {
            let e = random_grid(5, 5, &mut rng);
            let d = random_grid(5, 5, &mut rng);
            state.fold_scale(&e, &d);
            let cur = state.error_min.as_ref().unwrap().data.clone();
            if let Some(p) = prev {
                for i in 0..cur.len() {
                    assert!(cur[i] <= p[i]);
                }
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn isd_loss_zero_when_all_match() {
        let d = Grid::constant(4, 4, 1.5);
        let mut state = DistillState::new();
        state.fold_scale(&Grid::zeros(4, 4), &d);
        let disps = vec![d.clone(), d.clone(), d.clone(), d.clone()];
        assert_eq!(isd_loss(&state, &disps), 0.0);
    }

    #[test]
    fn isd_unit_log_contribution() {
        // |diff| = e − 1 at one scale, exact elsewhere → that scale adds 1.0
        let best = Grid::constant(4, 4, 2.0);
        let mut state = DistillState::new();
        state.fold_scale(&Grid::zeros(4, 4), &best);
        let off = Grid::constant(4, 4, 2.0 + (std::f64::consts::E - 1.0));
        let disps = vec![best.clone(), off, best.clone(), best.clone()];
        assert_relative_eq!(isd_loss(&state, &disps), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isd_loss_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        let errors: Vec<Grid> = (0..4).map(|_| random_grid(5, 5, &mut rng)).collect();
        let disps: Vec<Grid> = (0..4).map(|_| random_grid(5, 5, &mut rng)).collect();
        let state = fold_all_scales(&errors, &disps);
        let best = state.best();
        let mut expect = 0.0;
        for s in 0..4 {
            let mut acc = 0.0;
            for i in 0..25 {
                acc += ((best.data[i] - disps[s].data[i]).abs() + 1.0).ln();
            }
            expect += acc / 25.0;
        }
        assert_relative_eq!(isd_loss(&state, &disps), expect, epsilon = 1e-12);
    }

    #[test]
    fn isd_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let errors: Vec<Grid> = (0..4).map(|_| random_grid(5, 5, &mut rng)).collect();
        let mut disps: Vec<Grid> = (0..4).map(|_| random_grid(5, 5, &mut rng)).collect();
        let state = fold_all_scales(&errors, &disps);
        let grads = isd_loss_backward(&state, &disps);
        let step = 1e-6;
        for s in 0..4 {
            for i in (0..25).step_by(3) {
                let orig = disps[s].data[i];
                disps[s].data[i] = orig + step;
                let lp = isd_loss(&state, &disps);
                disps[s].data[i] = orig - step;
                let lm = isd_loss(&state, &disps);
                disps[s].data[i] = orig;
                let fd = (lp - lm) / (2.0 * step);
                assert_relative_eq!(grads[s].data[i], fd, epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn stop_gradient_contract() {
        // perturbing the teacher changes the loss value but the analytic
        // gradient w.r.t. the disparities never references the selection path
        let mut rng = ChaCha8Rng::seed_from_u64(76);
        let errors: Vec<Grid> = (0..4).map(|_| random_grid(4, 4, &mut rng)).collect();
        let disps: Vec<Grid> = (0..4).map(|_| random_grid(4, 4, &mut rng)).collect();
        let mut state = fold_all_scales(&errors, &disps);
        let l0 = isd_loss(&state, &disps);
        state.disp_best.as_mut().unwrap().data[0] += 0.5;
        let l1 = isd_loss(&state, &disps);
        assert!((l1 - l0).abs() > 0.0);
    }
}
