//! Joint optimization of depth logits and per-pair pose alignment with an
//! adaptive-moment update rule (decoupled weight decay). Full-batch: every
//! step accumulates gradients over all training pairs in a fixed order, so
//! runs are deterministic bit-for-bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colmap::SequencePoses;
use crate::depth::{
    depth_grad_to_disparity, disparity_to_depth, DepthPyramid, NUM_SCALES,
};
use crate::error::{Error, Result};
use crate::export::LoadedSequence;
use crate::geometry::{relative_pose, Intrinsics, Pose};
use crate::image::{Grid, ImageBuffer, Mask};
use crate::isd::{fold_all_scales, isd_loss, isd_loss_backward, DistillState};
use crate::metrics::{aggregate, compute_metrics, scale_std, Metrics};
use crate::photometric::{
    automask_from_errors, masked_mean, min_recon_loss, recon_error, recon_error_backward,
    smoothness_backward, smoothness_loss, warp_backward, warp_pose, LossBreakdown, BETA, LAMBDA,
    MU,
};
use crate::pose::{
    apply_alignment, apply_residual, chain_alignment, chain_residual, enumerate_pairs,
    AlignmentGrads, PairAlignment, TrainPair, PARAMS_PER_PAIR,
};
use crate::synth::SceneDataset;

/// Feature switches reproducing the ablation rows: coarse-pose ingestion,
/// translation alignment, residual pose, self-distillation, auto-masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// When false, ground-truth relative poses are used (upper-bound mode).
    pub use_coarse_poses: bool,
    pub optim_t: bool,
    pub optim_r: bool,
    pub isd: bool,
    pub automask: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_coarse_poses: true,
            optim_t: true,
            optim_r: true,
            isd: true,
            automask: true,
        }
    }
}

impl AblationFlags {
    /// Named configurations for the ablation grid.
    pub fn preset(name: &str) -> Result<Self> {
        let full = AblationFlags::default();
        Ok(match name {
            // ground-truth poses instead of coarse ones
            "baseline" => AblationFlags {
                use_coarse_poses: false,
                optim_t: false,
                optim_r: false,
                isd: false,
                ..full
            },
            // raw coarse poses, no refinement
            "coarse" => AblationFlags {
                optim_t: false,
                optim_r: false,
                isd: false,
                ..full
            },
            "optim-t" => AblationFlags {
                optim_r: false,
                isd: false,
                ..full
            },
            "optim-rt" => AblationFlags { isd: false, ..full },
            "full" => full,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation preset '{other}' (expected baseline, coarse, optim-t, optim-rt or full)"
                )))
            }
        })
    }

    /// Grid order used by the ablation command (worst to best expected).
    pub const GRID: [&'static str; 4] = ["coarse", "optim-t", "optim-rt", "full"];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_depth: f64,
    pub lr_pose: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Inner self-distillation iterations per epoch when `flags.isd`.
    pub isd_iterations: usize,
    pub flags: AblationFlags,
    pub seed: u64,
    pub min_disp: f64,
    pub max_disp: f64,
    /// Uniform disparity the pyramids start from; None keeps the raw
    /// mid-sigmoid default.
    pub init_disp: Option<f64>,
    /// Depth clamp range applied before evaluation metrics.
    pub depth_clamp: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr_depth: 1e-2,
            lr_pose: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            isd_iterations: 2,
            flags: AblationFlags::default(),
            seed: 0,
            min_disp: 0.1,
            max_disp: 10.0,
            init_disp: None,
            depth_clamp: (0.1, 10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.lr_depth <= 0.0 || self.lr_pose <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.flags.isd && self.isd_iterations == 0 {
            return Err(Error::Config(
                "isd_iterations must be at least 1 when isd is enabled".into(),
            ));
        }
        if !(self.min_disp > 0.0 && self.max_disp > self.min_disp) {
            return Err(Error::Config("disparity bounds must satisfy 0 < min < max".into()));
        }
        if let Some(d) = self.init_disp {
            if !(d > self.min_disp && d < self.max_disp) {
                return Err(Error::Config(
                    "init_disp must lie strictly inside the disparity bounds".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Adaptive-moment update with bias correction and decoupled weight decay.
#[derive(Debug, Clone, Copy)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn from_config(cfg: &TrainConfig, lr: f64) -> Self {
        AdamW {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        }
    }

    /// One update at step count `t` (1-based). `block` names the parameter
    /// group in non-finite-gradient diagnostics.
    pub fn step(
        &self,
        t: u64,
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        block: &str,
    ) -> Result<()> {
        debug_assert_eq!(params.len(), grads.len());
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(block.to_string()));
        }
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for i in 0..params.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grads[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
        Ok(())
    }
}

/// One sequence prepared for training.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub id: String,
    pub frame_names: Vec<String>,
    pub images: Vec<ImageBuffer>,
    /// Ground-truth depth per frame (evaluation only); may be empty.
    pub gt_depth: Vec<Grid>,
    pub intrinsics: Intrinsics,
    /// Poses as ingested (coarse when the dataset was corrupted).
    pub poses: SequencePoses,
    /// Ground-truth world-to-camera poses in frame order, when known.
    pub gt_poses: Option<Vec<Pose>>,
}

impl SequenceData {
    pub fn from_scene(scene: &SceneDataset, coarse: Option<&[Pose]>) -> Result<Self> {
        let frame_names: Vec<String> = scene.frames.iter().map(|f| f.name.clone()).collect();
        let gt: Vec<Pose> = scene.frames.iter().map(|f| f.pose).collect();
        let train_poses = match coarse {
            Some(c) => {
                if c.len() != gt.len() {
                    return Err(Error::Config(format!(
                        "{} coarse poses for {} frames",
                        c.len(),
                        gt.len()
                    )));
                }
                c.to_vec()
            }
            None => gt.clone(),
        };
        let poses = SequencePoses {
            id: scene.id.clone(),
            poses: frame_names.iter().cloned().zip(train_poses).collect(),
            intrinsics: scene.intrinsics,
            quaternion_warnings: vec![],
        };
        Ok(SequenceData {
            id: scene.id.clone(),
            frame_names,
            images: scene.frames.iter().map(|f| f.image.clone()).collect(),
            gt_depth: scene.frames.iter().map(|f| f.depth.clone()).collect(),
            intrinsics: scene.intrinsics,
            poses,
            gt_poses: Some(gt),
        })
    }

    pub fn from_loaded(seq: &LoadedSequence) -> Result<Self> {
        let gt_poses = match &seq.gt_poses {
            Some(gp) => {
                let mut v = Vec::with_capacity(seq.frame_names.len());
                for name in &seq.frame_names {
                    let p = gp.pose(name).map_err(|_| {
                        Error::Config(format!("gt pose missing for frame {name}"))
                    })?;
                    v.push(*p);
                }
                Some(v)
            }
            None => None,
        };
        Ok(SequenceData {
            id: seq.id.clone(),
            frame_names: seq.frame_names.clone(),
            images: seq.images.clone(),
            gt_depth: seq.gt_depth.clone(),
            intrinsics: seq.poses.intrinsics,
            poses: seq.poses.clone(),
            gt_poses,
        })
    }
}

/// Per-step selection state held constant during one gradient evaluation:
/// reconstruction masks per scale and pass, plus the distillation teacher.
#[derive(Debug, Clone)]
pub struct FrozenSelection {
    pub masks_t: Vec<Mask>,
    pub masks_r: Vec<Mask>,
    pub state: Option<DistillState>,
}

/// Gradients of one full-batch step, mirroring the parameter layout.
#[derive(Debug, Clone)]
pub struct StepGrads {
    /// [sequence][frame][scale] → flat logit gradients.
    pub logits: Vec<Vec<Vec<Vec<f64>>>>,
    /// [sequence][pair index] → alignment parameter gradients.
    pub pairs: Vec<Vec<AlignmentGrads>>,
}

#[derive(Debug, Clone, Copy)]
struct TargetSpec {
    seq: usize,
    frame: usize,
}

struct TargetOutput {
    parts: LossBreakdown,
    logit_grads: Vec<Vec<f64>>,
    pair_grads: Vec<(usize, AlignmentGrads)>,
    frozen: FrozenSelection,
}

/// Per-epoch record of the training log.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub metrics: Option<Metrics>,
    pub scale_std: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub skipped_pairs: usize,
    pub final_metrics: Option<Metrics>,
    pub final_scale_std: Option<f64>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub sequences: Vec<SequenceData>,
    pub pyramids: Vec<Vec<DepthPyramid>>,
    pub alignments: Vec<Vec<PairAlignment>>,
    pub pairs: Vec<Vec<TrainPair>>,
    pub skipped_pairs: usize,
    targets: Vec<TargetSpec>,
    depth_m: Vec<Vec<Vec<Vec<f64>>>>,
    depth_v: Vec<Vec<Vec<Vec<f64>>>>,
    pair_m: Vec<Vec<[f64; PARAMS_PER_PAIR]>>,
    pair_v: Vec<Vec<[f64; PARAMS_PER_PAIR]>>,
    step_count: u64,
}

impl Trainer {
    pub fn new(sequences: Vec<SequenceData>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut pairs = Vec::with_capacity(sequences.len());
        let mut pyramids = Vec::with_capacity(sequences.len());
        let mut skipped = 0usize;
        for seq in &sequences {
            let (seq_pairs, s) = if config.flags.use_coarse_poses {
                enumerate_pairs(&seq.frame_names, &seq.poses)
            } else {
                let gt = seq.gt_poses.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "sequence {} has no ground-truth poses for upper-bound mode",
                        seq.id
                    ))
                })?;
                let mut p = Vec::new();
                for t in 0..seq.frame_names.len() {
                    for offset in [-1isize, 1] {
                        let s = t as isize + offset;
                        if s < 0 || s as usize >= seq.frame_names.len() {
                            continue;
                        }
                        p.push(TrainPair {
                            target: t,
                            source: s as usize,
                            coarse: relative_pose(&gt[t], &gt[s as usize]),
                        });
                    }
                }
                (p, 0)
            };
            skipped += s;
            pairs.push(seq_pairs);
            let mut seq_pyrs = Vec::with_capacity(seq.frame_names.len());
            for img in &seq.images {
                let mut pyr =
                    DepthPyramid::new(img.width, img.height, config.min_disp, config.max_disp)?;
                if let Some(d) = config.init_disp {
                    let p = (d - config.min_disp) / (config.max_disp - config.min_disp);
                    let logit = (p / (1.0 - p)).ln();
                    for scale in &mut pyr.logits {
                        scale.fill(logit);
                    }
                }
                seq_pyrs.push(pyr);
            }
            pyramids.push(seq_pyrs);
        }
        if pairs.iter().all(|p| p.is_empty()) {
            return Err(Error::NoTrainingPairs);
        }
        let mut targets = Vec::new();
        for (qi, seq_pairs) in pairs.iter().enumerate() {
            let mut frames: Vec<usize> = seq_pairs.iter().map(|p| p.target).collect();
            frames.sort_unstable();
            frames.dedup();
            for f in frames {
                targets.push(TargetSpec { seq: qi, frame: f });
            }
        }
        let alignments: Vec<Vec<PairAlignment>> = pairs
            .iter()
            .map(|p| vec![PairAlignment::default(); p.len()])
            .collect();
        let depth_m: Vec<Vec<Vec<Vec<f64>>>> = pyramids
            .iter()
            .map(|seq| {
                seq.iter()
                    .map(|p| p.logits.iter().map(|l| vec![0.0; l.len()]).collect())
                    .collect()
            })
            .collect();
        let depth_v = depth_m.clone();
        let pair_m: Vec<Vec<[f64; PARAMS_PER_PAIR]>> = pairs
            .iter()
            .map(|p| vec![[0.0; PARAMS_PER_PAIR]; p.len()])
            .collect();
        let pair_v = pair_m.clone();
        Ok(Trainer {
            config,
            sequences,
            pyramids,
            alignments,
            pairs,
            skipped_pairs: skipped,
            targets,
            depth_m,
            depth_v,
            pair_m,
            pair_v,
            step_count: 0,
        })
    }

    /// Initializes every pyramid from the sequence's ground-truth depth
    /// (area-averaged per scale). Debugging aid for fixed-point checks.
    pub fn init_depth_from_gt(&mut self) -> Result<()> {
        for (qi, seq) in self.sequences.iter().enumerate() {
            if seq.gt_depth.len() != seq.frame_names.len() {
                return Err(Error::Config(format!(
                    "sequence {} lacks ground-truth depth",
                    seq.id
                )));
            }
            for (fi, depth) in seq.gt_depth.iter().enumerate() {
                let pyr = &mut self.pyramids[qi][fi];
                for s in 0..NUM_SCALES {
                    let (w, h) = pyr.scale_dims(s);
                    let block = 1usize << s;
                    let range = pyr.max_disp - pyr.min_disp;
                    for y in 0..h {
                        for x in 0..w {
                            let mut acc = 0.0;
                            for by in 0..block {
                                for bx in 0..block {
                                    acc += 1.0 / depth.at(y * block + by, x * block + bx);
                                }
                            }
                            let disp = acc / (block * block) as f64;
                            let p = ((disp - pyr.min_disp) / range).clamp(1e-9, 1.0 - 1e-9);
                            pyr.logits[s][y * w + x] = (p / (1.0 - p)).ln();
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn forward_target(
        &self,
        spec: TargetSpec,
        frozen: Option<&FrozenSelection>,
        want_grads: bool,
    ) -> TargetOutput {
        let seq = &self.sequences[spec.seq];
        let pyr = &self.pyramids[spec.seq][spec.frame];
        let k = &seq.intrinsics;
        let target_img = &seq.images[spec.frame];
        let flags = self.config.flags;
        let pair_ids: Vec<usize> = self.pairs[spec.seq]
            .iter()
            .enumerate()
            .filter(|(_, p)| p.target == spec.frame)
            .map(|(i, _)| i)
            .collect();

        // raw (unwarped) source errors, shared across scales
        let all_true = Mask::filled(target_img.width, target_img.height, true);
        let raw_errors: Vec<Grid> = pair_ids
            .iter()
            .map(|&pi| {
                let src = &seq.images[self.pairs[spec.seq][pi].source];
                recon_error(src, target_img)
            })
            .collect();
        let raw_refs: Vec<&Grid> = raw_errors.iter().collect();
        let raw_masks: Vec<&Mask> = raw_errors.iter().map(|_| &all_true).collect();
        let min_raw = min_recon_loss(&raw_refs, &raw_masks);

        let mut rec_t_acc = 0.0;
        let mut rec_r_acc = 0.0;
        let mut smooth_acc = 0.0;
        let mut scale_disps: Vec<Grid> = Vec::with_capacity(NUM_SCALES);
        let mut scale_sel_err: Vec<Grid> = Vec::with_capacity(NUM_SCALES);
        let mut grad_disp: Vec<Grid> = Vec::with_capacity(NUM_SCALES);
        let mut pair_grads: Vec<AlignmentGrads> =
            vec![AlignmentGrads::default(); pair_ids.len()];
        let mut masks_t = Vec::with_capacity(NUM_SCALES);
        let mut masks_r = Vec::with_capacity(NUM_SCALES);

        for s in 0..NUM_SCALES {
            let disp = pyr.predict_full_res(s);
            let depth = disparity_to_depth(&disp);
            let mut g_disp = Grid::zeros(disp.width, disp.height);
            let mut g_depth = Grid::zeros(disp.width, disp.height);

            // pass over the two reconstruction terms: 0 = aligned pose,
            // 1 = residual pose on top
            for pass in 0..2 {
                if pass == 1 && !flags.optim_r {
                    masks_r.push(Mask::filled(disp.width, disp.height, false));
                    continue;
                }
                let poses: Vec<Pose> = pair_ids
                    .iter()
                    .map(|&pi| {
                        let pair = &self.pairs[spec.seq][pi];
                        let a = &self.alignments[spec.seq][pi];
                        let aligned = apply_alignment(&pair.coarse, a);
                        if pass == 0 {
                            aligned
                        } else {
                            apply_residual(&aligned, a)
                        }
                    })
                    .collect();
                let warps: Vec<_> = pair_ids
                    .iter()
                    .enumerate()
                    .map(|(local, &pi)| {
                        let src = &seq.images[self.pairs[spec.seq][pi].source];
                        warp_pose(src, &depth, k, &poses[local])
                    })
                    .collect();
                let errs: Vec<Grid> = warps
                    .iter()
                    .map(|(w, _)| recon_error(&w.image, target_img))
                    .collect();
                let err_refs: Vec<&Grid> = errs.iter().collect();
                let valid_refs: Vec<&Mask> = warps.iter().map(|(w, _)| &w.valid).collect();
                let min = min_recon_loss(&err_refs, &valid_refs);
                let mask = match frozen {
                    Some(f) => {
                        if pass == 0 {
                            f.masks_t[s].clone()
                        } else {
                            f.masks_r[s].clone()
                        }
                    }
                    None => {
                        if flags.automask {
                            automask_from_errors(&min.loss, &min.valid, &min_raw.loss)
                        } else {
                            min.valid.clone()
                        }
                    }
                };
                let count = mask.count();
                let term = masked_mean(&min.loss, &mask).unwrap_or(0.0);
                let weight = if pass == 0 { 1.0 } else { BETA };
                if pass == 0 {
                    rec_t_acc += term;
                    masks_t.push(mask.clone());
                } else {
                    rec_r_acc += term;
                    masks_r.push(mask.clone());
                }
                // Selection error map for distillation comes from the best
                // reconstruction the model can produce: the residual-refined
                // pass when rotation refinement is active, the aligned pass
                // otherwise. Invalid samples are excluded via +inf.
                let sel_pass = usize::from(flags.optim_r);
                if pass == sel_pass {
                    let mut sel = min.loss.clone();
                    for i in 0..sel.data.len() {
                        if !min.valid.data[i] {
                            sel.data[i] = f64::INFINITY;
                        }
                    }
                    scale_sel_err.push(sel);
                }

                if want_grads && count > 0 {
                    let up_base = weight / (NUM_SCALES as f64 * count as f64);
                    for (local, &pi) in pair_ids.iter().enumerate() {
                        let mut up = Grid::zeros(disp.width, disp.height);
                        let mut any = false;
                        for i in 0..up.data.len() {
                            if mask.data[i] && min.source[i] == local {
                                up.data[i] = up_base;
                                any = true;
                            }
                        }
                        if !any {
                            continue;
                        }
                        let (warped, cache) = &warps[local];
                        let d_image = recon_error_backward(&warped.image, target_img, &up);
                        let src = &seq.images[self.pairs[spec.seq][pi].source];
                        let rot = poses[local].rotation.matrix();
                        let wg = warp_backward(cache, src, &depth, k, &rot, &d_image);
                        for i in 0..g_depth.data.len() {
                            g_depth.data[i] += wg.d_depth.data[i];
                        }
                        let pair = &self.pairs[spec.seq][pi];
                        let a = &self.alignments[spec.seq][pi];
                        let chained = if pass == 0 {
                            chain_alignment(&pair.coarse, a, &wg)
                        } else {
                            chain_residual(&pair.coarse, a, &wg)
                        };
                        pair_grads[local].accumulate(&chained);
                    }
                }
            }

            smooth_acc += smoothness_loss(&disp, target_img);
            if want_grads {
                let sg = smoothness_backward(&disp, target_img);
                let w = LAMBDA / NUM_SCALES as f64;
                for i in 0..g_disp.data.len() {
                    g_disp.data[i] += w * sg.data[i];
                }
                let from_depth = depth_grad_to_disparity(&disp, &g_depth);
                for i in 0..g_disp.data.len() {
                    g_disp.data[i] += from_depth.data[i];
                }
            }
            scale_disps.push(disp);
            grad_disp.push(g_disp);
        }

        let mut isd_acc = 0.0;
        let mut state_out = None;
        if flags.isd {
            let state = match frozen {
                Some(f) => f
                    .state
                    .clone()
                    .expect("frozen selection lacks distillation state"),
                None => fold_all_scales(&scale_sel_err, &scale_disps),
            };
            isd_acc = isd_loss(&state, &scale_disps);
            if want_grads {
                let gs = isd_loss_backward(&state, &scale_disps);
                for s in 0..NUM_SCALES {
                    for i in 0..grad_disp[s].data.len() {
                        grad_disp[s].data[i] += MU * gs[s].data[i];
                    }
                }
            }
            state_out = Some(state);
        }

        let parts = LossBreakdown::assemble(
            rec_t_acc / NUM_SCALES as f64,
            rec_r_acc / NUM_SCALES as f64,
            smooth_acc / NUM_SCALES as f64,
            isd_acc,
        );
        let logit_grads = if want_grads {
            (0..NUM_SCALES)
                .map(|s| pyr.full_res_backward(s, &grad_disp[s]))
                .collect()
        } else {
            Vec::new()
        };
        TargetOutput {
            parts,
            logit_grads,
            pair_grads: pair_ids.into_iter().zip(pair_grads).collect(),
            frozen: FrozenSelection {
                masks_t,
                masks_r,
                state: state_out,
            },
        }
    }

    /// One full-batch forward(+backward) over every target frame. Returns
    /// the mean loss, the gradients, and the per-target selection snapshot
    /// (masks and distillation teacher) that produced them.
    pub fn compute_step(
        &self,
        frozen: Option<&[FrozenSelection]>,
        want_grads: bool,
    ) -> (LossBreakdown, StepGrads, Vec<FrozenSelection>) {
        let outputs: Vec<TargetOutput> = self
            .targets
            .par_iter()
            .enumerate()
            .map(|(i, &spec)| self.forward_target(spec, frozen.map(|f| &f[i]), want_grads))
            .collect();
        let n = outputs.len() as f64;
        let mut rec_t = 0.0;
        let mut rec_r = 0.0;
        let mut smooth = 0.0;
        let mut isd = 0.0;
        let mut grads = StepGrads {
            logits: self
                .pyramids
                .iter()
                .map(|seq| {
                    seq.iter()
                        .map(|p| p.logits.iter().map(|l| vec![0.0; l.len()]).collect())
                        .collect()
                })
                .collect(),
            pairs: self
                .pairs
                .iter()
                .map(|p| vec![AlignmentGrads::default(); p.len()])
                .collect(),
        };
        let mut frozen_out = Vec::with_capacity(outputs.len());
        for (out, spec) in outputs.into_iter().zip(&self.targets) {
            rec_t += out.parts.rec_t / n;
            rec_r += out.parts.rec_r / n;
            smooth += out.parts.smooth / n;
            isd += out.parts.isd / n;
            if want_grads {
                for (s, g) in out.logit_grads.into_iter().enumerate() {
                    let dst = &mut grads.logits[spec.seq][spec.frame][s];
                    for i in 0..g.len() {
                        dst[i] += g[i] / n;
                    }
                }
                for (pi, pg) in out.pair_grads {
                    let mut scaled = pg;
                    for v in scaled.0.iter_mut() {
                        *v /= n;
                    }
                    grads.pairs[spec.seq][pi].accumulate(&scaled);
                }
            }
            frozen_out.push(out.frozen);
        }
        (
            LossBreakdown::assemble(rec_t, rec_r, smooth, isd),
            grads,
            frozen_out,
        )
    }

    /// Applies one optimizer step; pose parameter groups are gated by the
    /// ablation flags.
    pub fn apply_grads(&mut self, grads: &StepGrads) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        let depth_opt = AdamW::from_config(&self.config, self.config.lr_depth);
        let pose_opt = AdamW::from_config(&self.config, self.config.lr_pose);
        for qi in 0..self.pyramids.len() {
            for fi in 0..self.pyramids[qi].len() {
                for s in 0..NUM_SCALES {
                    depth_opt.step(
                        t,
                        &mut self.pyramids[qi][fi].logits[s],
                        &grads.logits[qi][fi][s],
                        &mut self.depth_m[qi][fi][s],
                        &mut self.depth_v[qi][fi][s],
                        &format!("depth seq {qi} frame {fi} scale {s}"),
                    )?;
                }
            }
            let flags = self.config.flags;
            if !flags.optim_t && !flags.optim_r {
                continue;
            }
            for pi in 0..self.alignments[qi].len() {
                let mut params = self.alignments[qi][pi].to_params();
                let mut g = grads.pairs[qi][pi].0;
                if !flags.optim_t {
                    g[..4].fill(0.0);
                }
                if !flags.optim_r {
                    g[4..].fill(0.0);
                }
                pose_opt.step(
                    t,
                    &mut params,
                    &g,
                    &mut self.pair_m[qi][pi],
                    &mut self.pair_v[qi][pi],
                    &format!("alignment seq {qi} pair {pi}"),
                )?;
                self.alignments[qi][pi] = PairAlignment::from_params(&params);
            }
        }
        Ok(())
    }

    /// Full-resolution predicted depth (finest scale) for one frame.
    pub fn predict_depth(&self, seq: usize, frame: usize) -> Grid {
        disparity_to_depth(&self.pyramids[seq][frame].predict_full_res(0))
    }

    /// Median-aligned depth metrics over every frame with ground truth,
    /// plus the spread of per-frame scale factors. `None` when no ground
    /// truth is available.
    pub fn evaluate(&self) -> Result<Option<(Metrics, f64)>> {
        let mut per_frame = Vec::new();
        let mut factors = Vec::new();
        for (qi, seq) in self.sequences.iter().enumerate() {
            if seq.gt_depth.is_empty() {
                continue;
            }
            for fi in 0..seq.frame_names.len() {
                let pred = self.predict_depth(qi, fi);
                let m = compute_metrics(&pred, &seq.gt_depth[fi], true, self.config.depth_clamp)?;
                factors.push(m.scale_factor);
                per_frame.push(m);
            }
        }
        if per_frame.is_empty() {
            return Ok(None);
        }
        let std = if factors.len() >= 2 {
            scale_std(&factors)?
        } else {
            0.0
        };
        Ok(Some((aggregate(&per_frame), std)))
    }

    /// Runs the configured schedule. With self-distillation enabled, each
    /// epoch performs `isd_iterations` full re-selection + update rounds.
    pub fn train(&mut self) -> Result<TrainReport> {
        let inner = if self.config.flags.isd {
            self.config.isd_iterations
        } else {
            1
        };
        let mut history = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let mut last = LossBreakdown::default();
            for _ in 0..inner {
                let (loss, grads, _) = self.compute_step(None, true);
                self.apply_grads(&grads)?;
                last = loss;
            }
            let eval = self.evaluate()?;
            history.push(EpochRecord {
                epoch,
                loss: last,
                metrics: eval.map(|(m, _)| m),
                scale_std: eval.map(|(_, s)| s),
            });
            log::debug!(
                "epoch {epoch}: total {:.6} rec_t {:.6} rec_r {:.6}",
                last.total,
                last.rec_t,
                last.rec_r
            );
        }
        let eval = self.evaluate()?;
        Ok(TrainReport {
            history,
            skipped_pairs: self.skipped_pairs,
            final_metrics: eval.map(|(m, _)| m),
            final_scale_std: eval.map(|(_, s)| s),
        })
    }
}

/// Writes the per-epoch training log as CSV.
pub fn write_train_csv(path: &std::path::Path, report: &TrainReport) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "epoch,rec_t,rec_r,smooth,isd,total,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,scale_std"
    )?;
    for rec in &report.history {
        let m = rec.metrics.unwrap_or_default();
        writeln!(
            f,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            rec.epoch,
            rec.loss.rec_t,
            rec.loss.rec_r,
            rec.loss.smooth,
            rec.loss.isd,
            rec.loss.total,
            m.abs_rel,
            m.sq_rel,
            m.rmse,
            m.rmse_log,
            m.delta1,
            m.delta2,
            m.delta3,
            rec.scale_std.unwrap_or(f64::NAN)
        )?;
    }
    Ok(())
}
