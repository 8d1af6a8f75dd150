//! Dataset io: pose files, manifests, windowing, synthetic clips.

pub mod format;
pub mod synth;
pub mod windows;

pub use format::{read_pose_file, write_pose_file, PoseData};
pub use synth::{synth_motion, MotionKind};
pub use windows::{make_windows, SampleType, Window, WindowSpec};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::pose::{FrameRef, PoseSeq2D, PoseSeq3D};
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ClipEntry {
    pub name: String,
    pub split: String,
    pub frames: usize,
    pub file_3d: String,
    pub file_2d: String,
    pub camera: String,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub clips: Vec<ClipEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Data(format!("invalid manifest: {e}")))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_NAME), text)?;
        Ok(())
    }

    pub fn split(&self, split: &str) -> Vec<&ClipEntry> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }
}

/// A loaded clip: camera-space ground truth, normalized 2D observations,
/// and the camera.
#[derive(Debug, Clone)]
pub struct Clip {
    pub name: String,
    pub pose3d: PoseSeq3D,
    pub pose2d: PoseSeq2D,
    pub camera: Camera,
}

pub fn load_camera(path: &Path) -> Result<Camera> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read camera file {}: {e}", path.display())))?;
    let cam: Camera = toml::from_str(&text).map_err(|e| Error::Data(format!("invalid camera file: {e}")))?;
    cam.validate()?;
    Ok(cam)
}

pub fn save_camera(path: &Path, cam: &Camera) -> Result<()> {
    let text = toml::to_string_pretty(cam).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Load every clip of a split listed in the directory manifest.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<Clip>> {
    let manifest = Manifest::load(dir)?;
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(Error::Config(format!("no clips in split '{split}' under {}", dir.display())));
    }
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let p3 = read_pose_file(&dir.join(&e.file_3d))?.into_seq3d(FrameRef::CameraSpace)?;
        let p2 = read_pose_file(&dir.join(&e.file_2d))?.into_seq2d()?;
        if p3.frames != p2.frames || p3.joints != p2.joints {
            return Err(Error::Data(format!("clip {}: 2D/3D dimensions disagree", e.name)));
        }
        if p3.frames != e.frames {
            return Err(Error::Data(format!("clip {}: manifest frames {} vs file {}", e.name, e.frames, p3.frames)));
        }
        let camera = load_camera(&dir.join(&e.camera))?;
        out.push(Clip { name: e.name.clone(), pose3d: p3, pose2d: p2, camera });
    }
    Ok(out)
}

/// Synthesize a dataset directory: clips, cameras, and a manifest.
/// `train_fraction` of the clips go to the train split, the rest to test.
pub fn synth_dataset(
    dir: &Path,
    skeleton: &crate::skeleton::Skeleton,
    clips: usize,
    frames: usize,
    seed: u64,
    kind: MotionKind,
    train_fraction: f64,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let n_train = ((clips as f64) * train_fraction).round() as usize;
    let mut manifest = Manifest::default();
    for k in 0..clips {
        let (p3, p2, cam) = synth_motion(skeleton, frames, seed.wrapping_add(k as u64), kind)?;
        let name = format!("clip_{k:03}");
        let f3 = format!("{name}_3d.f3dp");
        let f2 = format!("{name}_2d.f3dp");
        let fc = format!("{name}_camera.toml");
        write_pose_file(&dir.join(&f3), &PoseData::from_seq3d(&p3))?;
        write_pose_file(&dir.join(&f2), &PoseData::from_seq2d(&p2))?;
        save_camera(&dir.join(&fc), &cam)?;
        manifest.clips.push(ClipEntry {
            name,
            split: if k < n_train { "train".into() } else { "test".into() },
            frames,
            file_3d: f3,
            file_2d: f2,
            camera: fc,
        });
    }
    manifest.save(dir)?;
    Ok(manifest)
}

/// Path helper: every file the manifest references, for idempotency checks.
pub fn manifest_files(dir: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    let mut out = vec![dir.join(MANIFEST_NAME)];
    for c in &manifest.clips {
        out.push(dir.join(&c.file_3d));
        out.push(dir.join(&c.file_2d));
        out.push(dir.join(&c.camera));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::build_h36m_skeleton;

    #[test]
    fn synth_dataset_roundtrips_through_manifest() {
        let dir = std::env::temp_dir().join("kinediff_data_mod_test");
        let _ = std::fs::remove_dir_all(&dir);
        let s = build_h36m_skeleton();
        let manifest = synth_dataset(&dir, &s, 5, 9, 42, MotionKind::Smooth, 0.8).unwrap();
        assert_eq!(manifest.split("train").len(), 4);
        assert_eq!(manifest.split("test").len(), 1);
        let train = load_split(&dir, "train").unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(train[0].pose3d.frames, 9);
        // f32 storage: reload equals the f32-rounded original
        let (p3, _, _) = synth_motion(&s, 9, 42, MotionKind::Smooth).unwrap();
        for (a, b) in train[0].pose3d.data.iter().zip(&p3.data) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn missing_split_is_config_error() {
        let dir = std::env::temp_dir().join("kinediff_data_mod_test2");
        let _ = std::fs::remove_dir_all(&dir);
        let s = build_h36m_skeleton();
        synth_dataset(&dir, &s, 2, 4, 1, MotionKind::Still, 1.0).unwrap();
        assert!(matches!(load_split(&dir, "test"), Err(Error::Config(_))));
    }
}
