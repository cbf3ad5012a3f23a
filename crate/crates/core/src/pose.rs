//! Per-pair pose refinement: translation rescale/shift (t* = s·t + Δt) and
//! residual rigid correction composed on top of the aligned pose. These are
//! free per-pair parameters optimized jointly with depth; the scale factor
//! is exponentially parameterized so it stays positive.

use nalgebra::{Matrix3, Vector3};

use crate::colmap::SequencePoses;
use crate::geometry::{rotation_grad_axis_angle, Pose, Rotation};
use crate::photometric::warp::WarpGrads;

/// Optimizable alignment parameters of one ordered (target, source) pair.
#[derive(Debug, Clone, Copy)]
pub struct PairAlignment {
    /// s = exp(log_scale).
    pub log_scale: f64,
    /// Residual translation shift Δt, length units.
    pub delta_t: Vector3<f64>,
    /// Residual rotation, axis-angle, radians.
    pub residual_rot: Vector3<f64>,
    /// Residual translation of the second-pass pose.
    pub residual_t: Vector3<f64>,
}

impl Default for PairAlignment {
    fn default() -> Self {
        PairAlignment {
            log_scale: 0.0,
            delta_t: Vector3::zeros(),
            residual_rot: Vector3::zeros(),
            residual_t: Vector3::zeros(),
        }
    }
}

pub const PARAMS_PER_PAIR: usize = 10;

impl PairAlignment {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Flat parameter vector [log_scale, Δt, r, tʳ].
    pub fn to_params(&self) -> [f64; PARAMS_PER_PAIR] {
        [
            self.log_scale,
            self.delta_t.x,
            self.delta_t.y,
            self.delta_t.z,
            self.residual_rot.x,
            self.residual_rot.y,
            self.residual_rot.z,
            self.residual_t.x,
            self.residual_t.y,
            self.residual_t.z,
        ]
    }

    pub fn from_params(p: &[f64; PARAMS_PER_PAIR]) -> Self {
        PairAlignment {
            log_scale: p[0],
            delta_t: Vector3::new(p[1], p[2], p[3]),
            residual_rot: Vector3::new(p[4], p[5], p[6]),
            residual_t: Vector3::new(p[7], p[8], p[9]),
        }
    }
}

/// Gradients with respect to the flat alignment parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlignmentGrads(pub [f64; PARAMS_PER_PAIR]);

impl AlignmentGrads {
    pub fn accumulate(&mut self, other: &AlignmentGrads) {
        for i in 0..PARAMS_PER_PAIR {
            self.0[i] += other.0[i];
        }
    }
}

/// Translation rescale/shift: keeps the coarse rotation, replaces the
/// translation with s·t^CP + Δt.
pub fn apply_alignment(coarse: &Pose, a: &PairAlignment) -> Pose {
    Pose {
        rotation: coarse.rotation,
        translation: a.scale() * coarse.translation + a.delta_t,
    }
}

/// Residual pose composition: exp(r | tʳ) ∘ aligned. Used only for the
/// second reconstruction pass.
pub fn apply_residual(aligned: &Pose, a: &PairAlignment) -> Pose {
    let residual = Pose::new(Rotation::from_axis_angle(a.residual_rot), a.residual_t);
    crate::geometry::compose(&residual, aligned)
}

/// Chains matrix-sense warp gradients of the *aligned* pose (first pass,
/// rotation constant) into alignment parameters.
pub fn chain_alignment(coarse: &Pose, a: &PairAlignment, grads: &WarpGrads) -> AlignmentGrads {
    let mut out = AlignmentGrads::default();
    let d_t = grads.d_translation;
    out.0[0] = a.scale() * coarse.translation.dot(&d_t);
    out.0[1] = d_t.x;
    out.0[2] = d_t.y;
    out.0[3] = d_t.z;
    out
}

/// Chains matrix-sense warp gradients of the *residual* pose (second pass)
/// into alignment parameters. The total transform is
/// Xc = R_r·(R^CP·X + t*) + tʳ with t* = s·t^CP + Δt.
pub fn chain_residual(coarse: &Pose, a: &PairAlignment, grads: &WarpGrads) -> AlignmentGrads {
    let mut out = AlignmentGrads::default();
    let r_res = Rotation::from_axis_angle(a.residual_rot).matrix();
    let t_star = a.scale() * coarse.translation + a.delta_t;
    let d_t_tot = grads.d_translation;
    // dL/dR_total = Σ g Xᵀ; dL/dt_total = Σ g
    let dl_dr_total: Matrix3<f64> = grads.d_rotation;
    // residual translation
    out.0[7] = d_t_tot.x;
    out.0[8] = d_t_tot.y;
    out.0[9] = d_t_tot.z;
    // t* receives gradients through R_r·t*
    let d_t_star = r_res.transpose() * d_t_tot;
    out.0[0] = a.scale() * coarse.translation.dot(&d_t_star);
    out.0[1] = d_t_star.x;
    out.0[2] = d_t_star.y;
    out.0[3] = d_t_star.z;
    // residual rotation: R_total = R_r·R^CP and t_total = R_r·t* + tʳ
    let dl_dr_res =
        dl_dr_total * coarse.rotation.matrix().transpose() + d_t_tot * t_star.transpose();
    let d_rot = rotation_grad_axis_angle(&a.residual_rot, &dl_dr_res);
    out.0[4] = d_rot.x;
    out.0[5] = d_rot.y;
    out.0[6] = d_rot.z;
    out
}

/// One enumerated training pair: ordered (target, source) with its coarse
/// relative pose.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub target: usize,
    pub source: usize,
    pub coarse: Pose,
}

/// Enumerates adjacent (target, source ∈ {−1, +1}) pairs over time-ordered
/// frame names, skipping (and counting) pairs with unregistered frames.
pub fn enumerate_pairs(frames: &[String], seq: &SequencePoses) -> (Vec<TrainPair>, usize) {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for t in 0..frames.len() {
        for offset in [-1isize, 1] {
            let s = t as isize + offset;
            if s < 0 || s as usize >= frames.len() {
                continue;
            }
            let s = s as usize;
            if !seq.is_registered(&frames[t]) || !seq.is_registered(&frames[s]) {
                skipped += 1;
                continue;
            }
            let coarse = seq
                .coarse_relative(&frames[t], &frames[s])
                .expect("registered frames");
            pairs.push(TrainPair {
                target: t,
                source: s,
                coarse,
            });
        }
    }
    (pairs, skipped)
}
