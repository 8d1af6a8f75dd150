//! Pose file io.
//!
//! Binary format: magic `F3DP`, u32 version, u32 N, u32 J, u32 C (2 or 3),
//! then little-endian f32 payload, frame-major. A human-readable JSON
//! alternative (`.json` extension) exists for small fixtures.

use crate::error::{Error, Result};
use crate::pose::{FrameRef, PoseSeq2D, PoseSeq3D};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"F3DP";
pub const VERSION: u32 = 1;
/// Upper bound on element count; anything larger is a corrupt header.
const MAX_ELEMENTS: u64 = 1 << 28;

/// Raw pose payload straight from a file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoseData {
    pub version: u32,
    pub frames: usize,
    pub joints: usize,
    pub coords: usize,
    pub data: Vec<f64>,
}

impl PoseData {
    pub fn from_seq3d(p: &PoseSeq3D) -> PoseData {
        PoseData { version: VERSION, frames: p.frames, joints: p.joints, coords: 3, data: p.data.clone() }
    }

    pub fn from_seq2d(p: &PoseSeq2D) -> PoseData {
        PoseData { version: VERSION, frames: p.frames, joints: p.joints, coords: 2, data: p.data.clone() }
    }

    pub fn into_seq3d(self, frame_ref: FrameRef) -> Result<PoseSeq3D> {
        if self.coords != 3 {
            return Err(Error::Data(format!("expected 3 coords, file has {}", self.coords)));
        }
        PoseSeq3D::new(self.frames, self.joints, self.data, frame_ref)
    }

    pub fn into_seq2d(self) -> Result<PoseSeq2D> {
        if self.coords != 2 {
            return Err(Error::Data(format!("expected 2 coords, file has {}", self.coords)));
        }
        PoseSeq2D::new(self.frames, self.joints, self.data)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().map_or(false, |e| e == "json")
}

pub fn write_pose_file(path: &Path, pose: &PoseData) -> Result<()> {
    if is_json(path) {
        let text = serde_json::to_string_pretty(pose).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text)?;
        return Ok(());
    }
    let n = pose.frames * pose.joints * pose.coords;
    if pose.data.len() != n {
        return Err(Error::Contract("pose payload length does not match header".into()));
    }
    let mut buf = Vec::with_capacity(20 + n * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(pose.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(pose.joints as u32).to_le_bytes());
    buf.extend_from_slice(&(pose.coords as u32).to_le_bytes());
    for &v in &pose.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_pose_file(path: &Path) -> Result<PoseData> {
    if is_json(path) {
        let text = std::fs::read_to_string(path)?;
        let pose: PoseData = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { offset: 0, what: format!("invalid JSON pose file: {e}") })?;
        if pose.data.len() != pose.frames * pose.joints * pose.coords {
            return Err(Error::Parse { offset: 0, what: "JSON pose payload length mismatch".into() });
        }
        return Ok(pose);
    }
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() < 4 || &raw[0..4] != MAGIC {
        return Err(Error::Parse { offset: 0, what: format!("bad magic, expected {MAGIC:?}") });
    }
    if raw.len() < 20 {
        return Err(Error::Parse { offset: raw.len() as u64, what: "truncated header".into() });
    }
    let u32_at = |o: usize| u32::from_le_bytes([raw[o], raw[o + 1], raw[o + 2], raw[o + 3]]);
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Parse { offset: 4, what: format!("unsupported version {version}") });
    }
    let frames = u32_at(8) as u64;
    let joints = u32_at(12) as u64;
    let coords = u32_at(16) as u64;
    if coords != 2 && coords != 3 {
        return Err(Error::Parse { offset: 16, what: format!("coords must be 2 or 3, got {coords}") });
    }
    let n = frames
        .checked_mul(joints)
        .and_then(|v| v.checked_mul(coords))
        .filter(|&v| v > 0 && v <= MAX_ELEMENTS)
        .ok_or_else(|| Error::Parse { offset: 8, what: format!("dimension overflow: {frames}x{joints}x{coords}") })?;
    let expected = 20 + n as usize * 4;
    if raw.len() < expected {
        return Err(Error::Parse {
            offset: raw.len() as u64,
            what: format!("truncated payload: {} bytes, expected {expected}", raw.len()),
        });
    }
    if raw.len() > expected {
        return Err(Error::Parse { offset: expected as u64, what: "trailing bytes after payload".into() });
    }
    let data: Vec<f64> = raw[20..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::Parse { offset: 20, what: "payload contains non-finite values".into() });
    }
    Ok(PoseData { version, frames: frames as usize, joints: joints as usize, coords: coords as usize, data })
}
