//! Pose sequence containers.

use crate::error::{Error, Result};

/// Frame of reference for 3D coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FrameRef {
    /// Absolute coordinates in the camera frame, meters.
    CameraSpace,
    /// Per-frame root-joint-relative coordinates, meters.
    RootRelative,
}

/// N x J x 3 pose sequence, row-major, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSeq3D {
    pub frames: usize,
    pub joints: usize,
    pub data: Vec<f64>,
    pub frame_ref: FrameRef,
}

impl PoseSeq3D {
    pub fn new(frames: usize, joints: usize, data: Vec<f64>, frame_ref: FrameRef) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Contract("pose sequence must have at least one frame".into()));
        }
        if data.len() != frames * joints * 3 {
            return Err(Error::Contract(format!(
                "pose data length {} does not match {frames}x{joints}x3",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("pose sequence contains non-finite coordinates".into()));
        }
        Ok(PoseSeq3D { frames, joints, data, frame_ref })
    }

    pub fn zeros(frames: usize, joints: usize, frame_ref: FrameRef) -> Self {
        PoseSeq3D { frames, joints, data: vec![0.0; frames * joints * 3], frame_ref }
    }

    #[inline]
    pub fn get(&self, frame: usize, joint: usize) -> [f64; 3] {
        let o = (frame * self.joints + joint) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, joint: usize, v: [f64; 3]) {
        let o = (frame * self.joints + joint) * 3;
        self.data[o] = v[0];
        self.data[o + 1] = v[1];
        self.data[o + 2] = v[2];
    }

    /// Root trajectory (coordinates of `root` per frame).
    pub fn root_trajectory(&self, root: usize) -> Vec<[f64; 3]> {
        (0..self.frames).map(|f| self.get(f, root)).collect()
    }

    /// Subtract the root joint per frame.
    pub fn to_root_relative(&self, root: usize) -> PoseSeq3D {
        let mut out = self.clone();
        for f in 0..self.frames {
            let r = self.get(f, root);
            for j in 0..self.joints {
                let p = self.get(f, j);
                out.set(f, j, [p[0] - r[0], p[1] - r[1], p[2] - r[2]]);
            }
        }
        out.frame_ref = FrameRef::RootRelative;
        out
    }

    /// Place a root-relative pose at an explicit trajectory.
    pub fn with_root_trajectory(&self, root: usize, traj: &[[f64; 3]]) -> PoseSeq3D {
        assert_eq!(traj.len(), self.frames, "trajectory length mismatch");
        let rel = self.to_root_relative(root);
        let mut out = rel.clone();
        for f in 0..self.frames {
            for j in 0..self.joints {
                let p = rel.get(f, j);
                out.set(f, j, [p[0] + traj[f][0], p[1] + traj[f][1], p[2] + traj[f][2]]);
            }
        }
        out.frame_ref = FrameRef::CameraSpace;
        out
    }

    pub fn select_frames(&self, idx: &[usize]) -> PoseSeq3D {
        let mut data = Vec::with_capacity(idx.len() * self.joints * 3);
        for &f in idx {
            let o = f * self.joints * 3;
            data.extend_from_slice(&self.data[o..o + self.joints * 3]);
        }
        PoseSeq3D { frames: idx.len(), joints: self.joints, data, frame_ref: self.frame_ref }
    }
}

/// N x J x 2 pose sequence, coordinates normalized to [-1, 1] unless a
/// caller tracks pixel units explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSeq2D {
    pub frames: usize,
    pub joints: usize,
    pub data: Vec<f64>,
    pub confidence: Option<Vec<f64>>,
}

impl PoseSeq2D {
    pub fn new(frames: usize, joints: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Contract("pose sequence must have at least one frame".into()));
        }
        if data.len() != frames * joints * 2 {
            return Err(Error::Contract(format!(
                "pose data length {} does not match {frames}x{joints}x2",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("2d pose sequence contains non-finite coordinates".into()));
        }
        Ok(PoseSeq2D { frames, joints, data, confidence: None })
    }

    #[inline]
    pub fn get(&self, frame: usize, joint: usize) -> [f64; 2] {
        let o = (frame * self.joints + joint) * 2;
        [self.data[o], self.data[o + 1]]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, joint: usize, v: [f64; 2]) {
        let o = (frame * self.joints + joint) * 2;
        self.data[o] = v[0];
        self.data[o + 1] = v[1];
    }

    pub fn select_frames(&self, idx: &[usize]) -> PoseSeq2D {
        let mut data = Vec::with_capacity(idx.len() * self.joints * 2);
        for &f in idx {
            let o = f * self.joints * 2;
            data.extend_from_slice(&self.data[o..o + self.joints * 2]);
        }
        PoseSeq2D { frames: idx.len(), joints: self.joints, data, confidence: None }
    }
}
