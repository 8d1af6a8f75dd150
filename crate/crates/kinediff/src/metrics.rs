//! Pose evaluation protocol: deterministic metrics (MPJPE, P-MPJPE,
//! N-MPJPE, MPJVE, PCK, AUC) and multi-hypothesis protocols (P-Best,
//! J-Best, and reprojection-based pose- and joint-level aggregation).
//!
//! Distances are reported in millimeters; inputs are meters. Deterministic
//! metrics expect both arguments in the same frame of reference;
//! root-aligned comparison is the callers' protocol and `root_align` is
//! provided for it.

pub use crate::camera::Camera;
use crate::pose::{PoseSeq2D, PoseSeq3D};
use crate::skeleton::{Skeleton, HIERARCHY_LEVELS};
use nalgebra::{Matrix3, Vector3};

pub const MM: f64 = 1000.0;
pub const PCK_THRESHOLD_MM: f64 = 150.0;
pub const AUC_STEP_MM: f64 = 5.0;

/// Subtract the root joint from every joint, per frame.
pub fn root_align(pose: &PoseSeq3D, root: usize) -> PoseSeq3D {
    pose.to_root_relative(root)
}

fn joint_err(a: &PoseSeq3D, b: &PoseSeq3D, f: usize, j: usize) -> f64 {
    let (p, q) = (a.get(f, j), b.get(f, j));
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(pred: &PoseSeq3D, gt: &PoseSeq3D) -> f64 {
    assert_eq!((pred.frames, pred.joints), (gt.frames, gt.joints), "mpjpe shape mismatch");
    let mut acc = 0.0;
    for f in 0..pred.frames {
        for j in 0..pred.joints {
            acc += joint_err(pred, gt, f, j);
        }
    }
    MM * acc / (pred.frames * pred.joints) as f64
}

/// Per-hierarchy-level MPJPE in millimeters (six values, level = clamped
/// tree depth). Levels with no joints yield NaN-free zeros.
pub fn mpjpe_per_level(pred: &PoseSeq3D, gt: &PoseSeq3D, s: &Skeleton) -> [f64; HIERARCHY_LEVELS] {
    let mut sums = [0.0; HIERARCHY_LEVELS];
    let mut counts = [0usize; HIERARCHY_LEVELS];
    for f in 0..pred.frames {
        for j in 0..pred.joints {
            let level = s.hierarchy[j];
            sums[level] += joint_err(pred, gt, f, j);
            counts[level] += pred.frames.min(1); // one sample per (f, j)
        }
    }
    let mut out = [0.0; HIERARCHY_LEVELS];
    for l in 0..HIERARCHY_LEVELS {
        if counts[l] > 0 {
            out[l] = MM * sums[l] / counts[l] as f64;
        }
    }
    out
}

/// Result of a Procrustes alignment.
#[derive(Debug, Clone, Copy)]
pub struct ProcrustesOutcome {
    pub error_mm: f64,
    /// True when the prediction was too degenerate to align and the plain
    /// MPJPE was returned instead.
    pub degenerate: bool,
}

/// Similarity-transform alignment (rotation, uniform scale, translation)
/// of `pred` onto `gt`, per frame, minimizing squared error in closed form
/// through the orthogonal-Procrustes SVD; returns the post-alignment MPJPE.
pub fn p_mpjpe(pred: &PoseSeq3D, gt: &PoseSeq3D) -> ProcrustesOutcome {
    assert_eq!((pred.frames, pred.joints), (gt.frames, gt.joints), "p_mpjpe shape mismatch");
    let j = pred.joints;
    let mut acc = 0.0;
    let mut degenerate = false;
    for f in 0..pred.frames {
        let mut mu_x = Vector3::zeros();
        let mut mu_y = Vector3::zeros();
        for k in 0..j {
            mu_x += Vector3::from(pred.get(f, k));
            mu_y += Vector3::from(gt.get(f, k));
        }
        mu_x /= j as f64;
        mu_y /= j as f64;
        let mut sigma = Matrix3::zeros();
        let mut var_x = 0.0;
        for k in 0..j {
            let xc = Vector3::from(pred.get(f, k)) - mu_x;
            let yc = Vector3::from(gt.get(f, k)) - mu_y;
            sigma += yc * xc.transpose();
            var_x += xc.norm_squared();
        }
        sigma /= j as f64;
        var_x /= j as f64;
        if var_x < 1e-18 {
            degenerate = true;
            for k in 0..j {
                acc += joint_err(pred, gt, f, k);
            }
            continue;
        }
        let svd = sigma.svd(true, true);
        let u = svd.u.expect("svd with u");
        let v_t = svd.v_t.expect("svd with v_t");
        let mut d = svd.singular_values;
        let mut u = u;
        if (u * v_t).determinant() < 0.0 {
            // reflection case: flip along the smallest singular value
            let mut smallest = 0;
            for i in 1..3 {
                if d[i] < d[smallest] {
                    smallest = i;
                }
            }
            for r in 0..3 {
                u[(r, smallest)] = -u[(r, smallest)];
            }
            d[smallest] = -d[smallest];
        }
        let rot = u * v_t;
        let scale = (d[0] + d[1] + d[2]) / var_x;
        let trans = mu_y - rot * mu_x * scale;
        for k in 0..j {
            let aligned = rot * Vector3::from(pred.get(f, k)) * scale + trans;
            let y = Vector3::from(gt.get(f, k));
            acc += (aligned - y).norm();
        }
    }
    ProcrustesOutcome { error_mm: MM * acc / (pred.frames * j) as f64, degenerate }
}

/// Scale-normalized MPJPE: the optimal per-frame scalar
/// s* = <pred, gt> / <pred, pred> is applied to the prediction first.
pub fn n_mpjpe(pred: &PoseSeq3D, gt: &PoseSeq3D) -> f64 {
    assert_eq!((pred.frames, pred.joints), (gt.frames, gt.joints), "n_mpjpe shape mismatch");
    let j = pred.joints;
    let mut acc = 0.0;
    for f in 0..pred.frames {
        let mut dot = 0.0;
        let mut nrm = 0.0;
        for k in 0..j {
            let (p, g) = (pred.get(f, k), gt.get(f, k));
            dot += p[0] * g[0] + p[1] * g[1] + p[2] * g[2];
            nrm += p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        }
        let s = if nrm > 1e-18 { dot / nrm } else { 1.0 };
        for k in 0..j {
            let (p, g) = (pred.get(f, k), gt.get(f, k));
            acc += ((s * p[0] - g[0]).powi(2) + (s * p[1] - g[1]).powi(2) + (s * p[2] - g[2]).powi(2)).sqrt();
        }
    }
    MM * acc / (pred.frames * j) as f64
}

/// Mean per-joint velocity error in millimeters per frame.
pub fn mpjve(pred: &PoseSeq3D, gt: &PoseSeq3D) -> f64 {
    assert_eq!((pred.frames, pred.joints), (gt.frames, gt.joints), "mpjve shape mismatch");
    if pred.frames < 2 {
        return 0.0;
    }
    let j = pred.joints;
    let mut acc = 0.0;
    for f in 0..pred.frames - 1 {
        for k in 0..j {
            let (p0, p1) = (pred.get(f, k), pred.get(f + 1, k));
            let (g0, g1) = (gt.get(f, k), gt.get(f + 1, k));
            let d = [
                (p1[0] - p0[0]) - (g1[0] - g0[0]),
                (p1[1] - p0[1]) - (g1[1] - g0[1]),
                (p1[2] - p0[2]) - (g1[2] - g0[2]),
            ];
            acc += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        }
    }
    MM * acc / ((pred.frames - 1) * j) as f64
}

/// PCK at `threshold_mm` plus the area under the PCK curve over thresholds
/// 0..=150 mm in 5 mm steps. Joints exactly at a threshold count as
/// correct.
pub fn pck_auc(pred: &PoseSeq3D, gt: &PoseSeq3D, threshold_mm: f64) -> (f64, f64) {
    assert_eq!((pred.frames, pred.joints), (gt.frames, gt.joints), "pck shape mismatch");
    let mut errors = Vec::with_capacity(pred.frames * pred.joints);
    for f in 0..pred.frames {
        for j in 0..pred.joints {
            errors.push(MM * joint_err(pred, gt, f, j));
        }
    }
    let frac_within = |thr: f64| errors.iter().filter(|&&e| e <= thr).count() as f64 / errors.len() as f64;
    let pck = frac_within(threshold_mm);
    let steps = (PCK_THRESHOLD_MM / AUC_STEP_MM) as usize;
    let mut auc = 0.0;
    for i in 0..=steps {
        auc += frac_within(i as f64 * AUC_STEP_MM);
    }
    auc /= (steps + 1) as f64;
    (pck, auc)
}

/// H candidate pose sequences with their generation metadata.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    pub hypotheses: Vec<PoseSeq3D>,
    pub seeds: Vec<u64>,
    pub ddim_steps: usize,
    pub timesteps: Vec<usize>,
}

impl HypothesisSet {
    pub fn single(pose: PoseSeq3D) -> HypothesisSet {
        HypothesisSet { hypotheses: vec![pose], seeds: vec![0], ddim_steps: 0, timesteps: vec![] }
    }

    pub fn count(&self) -> usize {
        self.hypotheses.len()
    }
}

/// Oracle selections against ground truth. `p_best` picks, per frame, the
/// hypothesis with the lowest frame MPJPE; `j_best` assembles each joint
/// from its own closest hypothesis. Both root-align before comparing and
/// return millimeters.
pub fn select_best(hs: &HypothesisSet, gt: &PoseSeq3D, root: usize) -> (f64, f64) {
    assert!(!hs.hypotheses.is_empty(), "empty hypothesis set");
    let gt_al = root_align(gt, root);
    let aligned: Vec<PoseSeq3D> = hs.hypotheses.iter().map(|h| root_align(h, root)).collect();
    let (frames, joints) = (gt.frames, gt.joints);
    let mut p_acc = 0.0;
    let mut j_acc = 0.0;
    for f in 0..frames {
        let mut best_frame = f64::INFINITY;
        for h in &aligned {
            let mut frame_err = 0.0;
            for j in 0..joints {
                frame_err += joint_err(h, &gt_al, f, j);
            }
            frame_err /= joints as f64;
            if frame_err < best_frame {
                best_frame = frame_err;
            }
        }
        p_acc += best_frame;
        for j in 0..joints {
            let mut best_joint = f64::INFINITY;
            for h in &aligned {
                let e = joint_err(h, &gt_al, f, j);
                if e < best_joint {
                    best_joint = e;
                }
            }
            j_acc += best_joint;
        }
    }
    (MM * p_acc / frames as f64, MM * j_acc / (frames * joints) as f64)
}

#[derive(Debug, Clone)]
pub struct AggregateOutput {
    pub p_agg: PoseSeq3D,
    pub j_agg: PoseSeq3D,
    /// True when a camera was available and selection used 2D reprojection
    /// error; false means the per-element mean fallback was used.
    pub used_reprojection: bool,
}

/// Aggregate hypotheses into a single prediction without ground truth.
///
/// With a camera, every hypothesis (assumed camera-space) is projected
/// through the pinhole model and compared with the observed 2D pose
/// (normalized coordinates): pose-level aggregation keeps, per frame, the
/// hypothesis with the least total reprojection error, while joint-level
/// aggregation picks each joint from the hypothesis that reprojects that
/// joint best. Without a camera both outputs fall back to the per-element
/// mean over hypotheses.
pub fn aggregate(hs: &HypothesisSet, x2d: &PoseSeq2D, cam: Option<&Camera>) -> AggregateOutput {
    assert!(!hs.hypotheses.is_empty(), "empty hypothesis set");
    let (frames, joints) = (hs.hypotheses[0].frames, hs.hypotheses[0].joints);
    assert_eq!((x2d.frames, x2d.joints), (frames, joints), "aggregate: 2D/3D shape mismatch");
    let h = hs.count();
    if h == 1 {
        return AggregateOutput {
            p_agg: hs.hypotheses[0].clone(),
            j_agg: hs.hypotheses[0].clone(),
            used_reprojection: cam.is_some(),
        };
    }
    match cam {
        Some(cam) => {
            let mut p_agg = hs.hypotheses[0].clone();
            let mut j_agg = hs.hypotheses[0].clone();
            for f in 0..frames {
                // reprojection error table: err[h][j] in pixels
                let mut err = vec![vec![f64::INFINITY; joints]; h];
                for (hi, hyp) in hs.hypotheses.iter().enumerate() {
                    for j in 0..joints {
                        if let Ok(px) = cam.project_point(hyp.get(f, j)) {
                            let obs = cam.denormalize_px(x2d.get(f, j));
                            err[hi][j] = ((px[0] - obs[0]).powi(2) + (px[1] - obs[1]).powi(2)).sqrt();
                        }
                    }
                }
                let mut best_h = 0;
                let mut best_sum = f64::INFINITY;
                for hi in 0..h {
                    let sum: f64 = err[hi].iter().sum();
                    if sum < best_sum {
                        best_sum = sum;
                        best_h = hi;
                    }
                }
                for j in 0..joints {
                    p_agg.set(f, j, hs.hypotheses[best_h].get(f, j));
                    let mut bj = 0;
                    for hi in 1..h {
                        if err[hi][j] < err[bj][j] {
                            bj = hi;
                        }
                    }
                    j_agg.set(f, j, hs.hypotheses[bj].get(f, j));
                }
            }
            AggregateOutput { p_agg, j_agg, used_reprojection: true }
        }
        None => {
            let mut mean = PoseSeq3D::zeros(frames, joints, hs.hypotheses[0].frame_ref);
            for hyp in &hs.hypotheses {
                for (m, v) in mean.data.iter_mut().zip(&hyp.data) {
                    *m += v / h as f64;
                }
            }
            AggregateOutput { p_agg: mean.clone(), j_agg: mean, used_reprojection: false }
        }
    }
}

/// One metric value in a report.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct MetricRecord {
    pub sequence: String,
    pub metric: String,
    pub value: f64,
    pub unit: String,
    pub protocol: ProtocolFlags,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq, Default)]
pub struct ProtocolFlags {
    pub root_aligned: bool,
    pub hypotheses: usize,
    pub ddim_steps: usize,
    /// "reprojection", "mean_fallback", or "" for deterministic metrics.
    pub aggregation: String,
    /// True when the root trajectory for reprojection came from ground
    /// truth rather than the model.
    pub gt_trajectory: bool,
}
