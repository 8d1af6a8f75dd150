//! Pinhole camera model and image-coordinate normalization.

use crate::error::{Error, Result};
use crate::pose::{PoseSeq2D, PoseSeq3D};

/// Intrinsics in pixels plus the image resolution used for the [-1, 1]
/// normalization of 2D keypoints.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config("camera focal lengths must be positive".into()));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::Config("camera resolution must be positive".into()));
        }
        Ok(())
    }

    /// Project a camera-space point to pixel coordinates. Points at or
    /// behind the image plane are rejected.
    pub fn project_point(&self, p: [f64; 3]) -> Result<[f64; 2]> {
        if p[2] <= 1e-9 {
            return Err(Error::Numeric(format!("cannot project point with depth {}", p[2])));
        }
        Ok([self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }

    /// Project a camera-space pose sequence to pixel coordinates.
    pub fn project_seq(&self, pose: &PoseSeq3D) -> Result<PoseSeq2D> {
        let mut out = PoseSeq2D::new(pose.frames, pose.joints, vec![0.0; pose.frames * pose.joints * 2])?;
        for f in 0..pose.frames {
            for j in 0..pose.joints {
                out.set(f, j, self.project_point(pose.get(f, j))?);
            }
        }
        Ok(out)
    }

    /// Map pixel coordinates onto [-1, 1] x [-1, 1].
    pub fn normalize_px(&self, p: [f64; 2]) -> [f64; 2] {
        [2.0 * p[0] / self.width - 1.0, 2.0 * p[1] / self.height - 1.0]
    }

    /// Inverse of [`Camera::normalize_px`].
    pub fn denormalize_px(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] + 1.0) * 0.5 * self.width, (p[1] + 1.0) * 0.5 * self.height]
    }

    pub fn normalize_seq(&self, seq: &PoseSeq2D) -> PoseSeq2D {
        let mut out = seq.clone();
        for f in 0..seq.frames {
            for j in 0..seq.joints {
                out.set(f, j, self.normalize_px(seq.get(f, j)));
            }
        }
        out
    }

    pub fn denormalize_seq(&self, seq: &PoseSeq2D) -> PoseSeq2D {
        let mut out = seq.clone();
        for f in 0..seq.frames {
            for j in 0..seq.joints {
                out.set(f, j, self.denormalize_px(seq.get(f, j)));
            }
        }
        out
    }
}

impl Default for Camera {
    fn default() -> Self {
        Camera { fx: 1000.0, fy: 1000.0, cx: 500.0, cy: 500.0, width: 1000.0, height: 1000.0 }
    }
}
