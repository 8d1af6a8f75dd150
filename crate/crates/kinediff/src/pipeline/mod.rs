//! End-to-end wiring: training (noise, denoise, loss, step), reverse
//! sampling with hypothesis sets, and evaluation with the full metric
//! protocol.

mod infer;
mod train;
mod eval;

pub use eval::{evaluate, EvalProtocol, EvalReport};
pub use infer::{infer, DenoiseModel, InferOutput, NoisyInput, ScaleFactors};
pub use train::{train, train_step, TrainBatch, TrainReport, TrainState};

use crate::config::ExperimentConfig;
use crate::denoiser::Denoiser;
use crate::diffusion::{cosine_schedule, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::pose::{PoseSeq2D, PoseSeq3D};
use crate::skeleton::Skeleton;
use crate::tensor::checkpoint::{read_checkpoint, write_checkpoint, NamedTensorData};
use crate::tensor::{Rng, Tensor};
use std::path::Path;

/// A trained (or training) model: config, skeleton, schedule, network.
pub struct ModelState {
    pub cfg: ExperimentConfig,
    pub skeleton: Skeleton,
    pub schedule: DiffusionSchedule,
    pub denoiser: Denoiser,
    pub params: Vec<(String, Tensor)>,
}

impl ModelState {
    /// Fresh model with seed-deterministic initialization.
    pub fn new(cfg: ExperimentConfig) -> Result<ModelState> {
        cfg.validate()?;
        let skeleton = cfg.skeleton.build()?;
        let schedule = cosine_schedule(cfg.diffusion.t_max, cfg.diffusion.cosine_s)?;
        let mut init_rng = Rng::with_stream(cfg.run.seed, 0x1217);
        let denoiser = Denoiser::new(cfg.denoiser_config(&skeleton), &skeleton, &mut init_rng)?;
        let params = denoiser.params();
        Ok(ModelState { cfg, skeleton, schedule, denoiser, params })
    }

    pub fn scales(&self) -> ScaleFactors {
        ScaleFactors {
            length: self.cfg.diffusion.scale_length,
            dir: self.cfg.diffusion.scale_dir,
            pose: self.cfg.diffusion.scale_pose,
        }
    }

    pub fn disentangled(&self) -> bool {
        self.cfg.denoiser.disentangle_input
    }

    /// Write parameters (plus target-scale metadata and optional optimizer
    /// state) to a checkpoint file.
    pub fn save_checkpoint(&self, path: &Path, opt_state: Option<&[(String, Vec<usize>, Vec<f64>)]>) -> Result<()> {
        let mut tensors: Vec<NamedTensorData> = self
            .params
            .iter()
            .map(|(name, t)| NamedTensorData { name: name.clone(), shape: t.shape().to_vec(), data: t.to_vec() })
            .collect();
        tensors.push(NamedTensorData {
            name: "meta.scale_length".into(),
            shape: vec![1],
            data: vec![self.cfg.diffusion.scale_length],
        });
        tensors.push(NamedTensorData {
            name: "meta.scale_dir".into(),
            shape: vec![1],
            data: vec![self.cfg.diffusion.scale_dir],
        });
        tensors.push(NamedTensorData {
            name: "meta.scale_pose".into(),
            shape: vec![1],
            data: vec![self.cfg.diffusion.scale_pose],
        });
        if let Some(state) = opt_state {
            for (name, shape, data) in state {
                tensors.push(NamedTensorData { name: name.clone(), shape: shape.clone(), data: data.clone() });
            }
        }
        write_checkpoint(path, &tensors)
    }

    /// Load parameters from a checkpoint; scale metadata overrides the
    /// config so sampling always matches training. Returns any optimizer
    /// state found.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
        let tensors = read_checkpoint(path)?;
        let mut param_values = Vec::new();
        let mut opt_state = Vec::new();
        for t in tensors {
            if let Some(rest) = t.name.strip_prefix("meta.") {
                match rest {
                    "scale_length" => self.cfg.diffusion.scale_length = t.data[0],
                    "scale_dir" => self.cfg.diffusion.scale_dir = t.data[0],
                    "scale_pose" => self.cfg.diffusion.scale_pose = t.data[0],
                    other => return Err(Error::Data(format!("unknown checkpoint metadata meta.{other}"))),
                }
            } else if t.name.starts_with("opt.") {
                opt_state.push((t.name, t.shape, t.data));
            } else {
                param_values.push((t.name, t.shape, t.data));
            }
        }
        self.denoiser.load_params(&param_values)?;
        Ok(opt_state)
    }
}

/// Stub model that returns a fixed ground-truth window regardless of the
/// noisy input; the oracle for DDIM fixed-point tests.
pub struct OracleDenoiser {
    pub skeleton: Skeleton,
    pub gt_window: PoseSeq3D,
}

impl DenoiseModel for OracleDenoiser {
    fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    fn denoise_window(&self, _x2d: &PoseSeq2D, _noisy: NoisyInput<'_>, _t: usize) -> Result<PoseSeq3D> {
        Ok(self.gt_window.clone())
    }
}
