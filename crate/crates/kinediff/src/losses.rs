//! Training losses: 3D pose regression, bone disentanglement, temporal
//! smoothness, and velocity consistency, plus their weighted combination.
//!
//! All reductions are means so magnitudes stay comparable across sequence
//! lengths and joint counts. Degenerate bones are masked out of the
//! disentanglement terms.

use crate::disentangle::{decompose, decompose_tensor};
use crate::pose::PoseSeq3D;
use crate::skeleton::Skeleton;
use crate::tensor::Tensor;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub w_pos: f64,
    pub w_dis: f64,
    pub w_temp: f64,
    pub w_vel: f64,
    /// Per-joint weights for the temporal loss; empty means all ones.
    pub joint_weights: Vec<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_pos: 1.0, w_dis: 1.0, w_temp: 0.0, w_vel: 0.0, joint_weights: Vec::new() }
    }
}

impl LossWeights {
    pub fn validate(&self) -> crate::error::Result<()> {
        for (name, w) in [("w_pos", self.w_pos), ("w_dis", self.w_dis), ("w_temp", self.w_temp), ("w_vel", self.w_vel)] {
            if w < 0.0 {
                return Err(crate::error::Error::Config(format!("loss weight {name} must be nonnegative")));
            }
        }
        if self.joint_weights.iter().any(|&w| w < 0.0) {
            return Err(crate::error::Error::Config("joint weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Scalar loss values for logging.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct LossBreakdown {
    pub pos: f64,
    pub dis: f64,
    pub temp: f64,
    pub vel: f64,
    pub total: f64,
}

fn expect_pose_shape(t: &Tensor) -> (usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 3, "pose tensor must be [N, J, 3], got {s:?}");
    assert_eq!(s[2], 3, "pose tensor must be [N, J, 3], got {s:?}");
    (s[0], s[1])
}

/// Mean per-joint Euclidean distance between prediction and target.
pub fn pose_loss(pred: &Tensor, gt: &Tensor) -> Tensor {
    let (n, j) = expect_pose_shape(pred);
    assert_eq!(pred.shape(), gt.shape(), "pose_loss shape mismatch");
    let _ = (n, j);
    pred.sub(gt).norm_last().mean_all()
}

/// Bone-level loss: mean absolute length difference plus mean direction
/// vector distance, both decomposed from the two poses. Bones degenerate in
/// either pose are masked from both terms.
pub fn disentangle_loss(pred: &Tensor, gt_pose: &PoseSeq3D, s: &Skeleton) -> Tensor {
    let (n, j) = expect_pose_shape(pred);
    assert_eq!((n, j), (gt_pose.frames, gt_pose.joints), "disentangle_loss shape mismatch");
    let gt_bd = decompose(s, gt_pose);
    let (pl, pd, mask) = decompose_tensor(s, pred, Some(&gt_bd.degenerate));
    let b = s.bones();
    let gl = Tensor::from_vec(&[n, b, 1], gt_bd.lengths.clone());
    let gd = Tensor::from_vec(&[n, b, 3], gt_bd.dirs.clone());
    let count: f64 = mask.data().iter().sum();
    if count == 0.0 {
        return Tensor::scalar(0.0);
    }
    let l_term = pl.sub(&gl).abs().mul(&mask).sum_all().mul_scalar(1.0 / count);
    let d_term = pd.sub(&gd).norm_last().mul(&mask).sum_all().mul_scalar(1.0 / count);
    l_term.add(&d_term)
}

/// Weighted temporal smoothness: mean over frame deltas of the
/// joint-weighted sum of squared displacement norms. Returns the loss and a
/// flag that is true when N = 1 made the loss trivially zero.
pub fn temporal_loss(pred: &Tensor, joint_weights: &[f64]) -> (Tensor, bool) {
    let (n, j) = expect_pose_shape(pred);
    if n < 2 {
        return (Tensor::scalar(0.0), true);
    }
    let w = if joint_weights.is_empty() {
        vec![1.0; j]
    } else {
        assert_eq!(joint_weights.len(), j, "joint weight vector length mismatch");
        joint_weights.to_vec()
    };
    let tail: Vec<usize> = (1..n).collect();
    let head: Vec<usize> = (0..n - 1).collect();
    let delta = pred.gather(0, &tail).sub(&pred.gather(0, &head)); // [N-1, J, 3]
    let sq = delta.mul(&delta).sum_axis(2, false); // [N-1, J]
    let wt = Tensor::from_vec(&[j], w);
    (sq.mul(&wt).sum_axis(1, false).mean_all(), false)
}

/// Mean norm of the velocity difference between prediction and target.
pub fn velocity_loss(pred: &Tensor, gt: &Tensor) -> (Tensor, bool) {
    let (n, _) = expect_pose_shape(pred);
    assert_eq!(pred.shape(), gt.shape(), "velocity_loss shape mismatch");
    if n < 2 {
        return (Tensor::scalar(0.0), true);
    }
    let tail: Vec<usize> = (1..n).collect();
    let head: Vec<usize> = (0..n - 1).collect();
    let vp = pred.gather(0, &tail).sub(&pred.gather(0, &head));
    let vg = gt.gather(0, &tail).sub(&gt.gather(0, &head));
    (vp.sub(&vg).norm_last().mean_all(), false)
}

/// Weighted sum of the enabled losses. Terms with zero weight are skipped
/// entirely so they cost nothing and contribute exactly zero gradient.
pub fn total_loss(pred: &Tensor, gt: &Tensor, gt_pose: &PoseSeq3D, s: &Skeleton, lw: &LossWeights) -> (Tensor, LossBreakdown) {
    let mut breakdown = LossBreakdown::default();
    let mut acc: Option<Tensor> = None;
    let push = |term: Tensor, weight: f64, slot: &mut f64, acc: &mut Option<Tensor>| {
        *slot = term.item();
        let weighted = term.mul_scalar(weight);
        *acc = Some(match acc.take() {
            Some(a) => a.add(&weighted),
            None => weighted,
        });
    };
    if lw.w_pos > 0.0 {
        push(pose_loss(pred, gt), lw.w_pos, &mut breakdown.pos, &mut acc);
    }
    if lw.w_dis > 0.0 {
        push(disentangle_loss(pred, gt_pose, s), lw.w_dis, &mut breakdown.dis, &mut acc);
    }
    if lw.w_temp > 0.0 {
        let (term, _) = temporal_loss(pred, &lw.joint_weights);
        push(term, lw.w_temp, &mut breakdown.temp, &mut acc);
    }
    if lw.w_vel > 0.0 {
        let (term, _) = velocity_loss(pred, gt);
        push(term, lw.w_vel, &mut breakdown.vel, &mut acc);
    }
    let total = acc.unwrap_or_else(|| Tensor::scalar(0.0));
    breakdown.total = breakdown.pos * lw.w_pos
        + breakdown.dis * lw.w_dis
        + breakdown.temp * lw.w_temp
        + breakdown.vel * lw.w_vel;
    (total, breakdown)
}
