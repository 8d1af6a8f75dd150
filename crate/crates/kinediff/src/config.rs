//! Experiment configuration: structured TOML covering every tunable of the
//! pipeline. A config plus a seed plus data fully determines a run.

use crate::data::windows::WindowSpec;
use crate::denoiser::{AlphaSharing, DenoiserConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::optimizer::AdamConfig;
use crate::skeleton::{build_h36m_skeleton, Skeleton};
use std::path::Path;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SkeletonConfig {
    /// Empty means the built-in 17-joint layout.
    pub joint_names: Vec<String>,
    pub parents: Vec<i32>,
    /// Optional explicit hierarchy override (six levels, 0..=5).
    pub hierarchy: Option<Vec<usize>>,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        SkeletonConfig { joint_names: Vec::new(), parents: Vec::new(), hierarchy: None }
    }
}

impl SkeletonConfig {
    pub fn build(&self) -> Result<Skeleton> {
        if self.parents.is_empty() {
            let mut s = build_h36m_skeleton();
            if let Some(h) = &self.hierarchy {
                s = Skeleton::new(s.joint_names.clone(), s.parent.clone(), Some(h.clone()))?;
            }
            return Ok(s);
        }
        let names = if self.joint_names.is_empty() {
            (0..self.parents.len()).map(|i| format!("joint_{i}")).collect()
        } else {
            self.joint_names.clone()
        };
        Skeleton::new(names, self.parents.clone(), self.hierarchy.clone())
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DenoiserSection {
    pub channels: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub alpha_sharing: AlphaSharing,
    /// Noise bone quantities (true) or raw pose coordinates (false, the
    /// non-disentangled ablation).
    pub disentangle_input: bool,
}

impl Default for DenoiserSection {
    fn default() -> Self {
        DenoiserSection {
            channels: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 2,
            alpha_sharing: AlphaSharing::PerBlock,
            disentangle_input: true,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DiffusionSection {
    #[serde(rename = "T")]
    pub t_max: usize,
    #[serde(rename = "W")]
    pub ddim_steps: usize,
    #[serde(rename = "H")]
    pub hypotheses: usize,
    pub cosine_s: f64,
    pub scale_length: f64,
    pub scale_dir: f64,
    /// Target scaling for the non-disentangled ablation path.
    pub scale_pose: f64,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            t_max: 1000,
            ddim_steps: 10,
            hypotheses: 20,
            cosine_s: 0.008,
            scale_length: 2.0,
            scale_dir: 1.0,
            scale_pose: 3.0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerSection {
    pub lr: f64,
    pub lr_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Extra checkpoints every k steps; 0 means final only.
    pub checkpoint_every: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection { lr: 1e-3, lr_decay: 0.9995, steps: 2000, batch_size: 4, checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    /// Granularity for epoch-mean loss reporting in the training log.
    pub steps_per_epoch: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, steps_per_epoch: 200 }
    }
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub skeleton: SkeletonConfig,
    pub window: WindowSpec,
    pub denoiser: DenoiserSection,
    pub diffusion: DiffusionSection,
    pub loss: LossWeights,
    pub optimizer: OptimizerSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.loss.validate()?;
        let sk = self.skeleton.build()?;
        self.denoiser_config(&sk).validate()?;
        if self.diffusion.t_max < 1 {
            return Err(Error::Config("diffusion.T must be >= 1".into()));
        }
        if self.diffusion.ddim_steps < 1 || self.diffusion.ddim_steps > self.diffusion.t_max {
            return Err(Error::Config("need 1 <= diffusion.W <= diffusion.T".into()));
        }
        if self.diffusion.hypotheses < 1 {
            return Err(Error::Config("diffusion.H must be >= 1".into()));
        }
        if self.diffusion.scale_length <= 0.0 || self.diffusion.scale_dir <= 0.0 || self.diffusion.scale_pose <= 0.0 {
            return Err(Error::Config("diffusion target scales must be positive".into()));
        }
        if self.optimizer.batch_size < 1 || self.optimizer.steps < 1 {
            return Err(Error::Config("optimizer.steps and batch_size must be >= 1".into()));
        }
        if self.run.steps_per_epoch < 1 {
            return Err(Error::Config("run.steps_per_epoch must be >= 1".into()));
        }
        Ok(())
    }

    pub fn denoiser_config(&self, skeleton: &Skeleton) -> DenoiserConfig {
        DenoiserConfig {
            channels: self.denoiser.channels,
            depth: self.denoiser.depth,
            heads: self.denoiser.heads,
            mlp_ratio: self.denoiser.mlp_ratio,
            alpha_sharing: self.denoiser.alpha_sharing,
            in_channels: if self.denoiser.disentangle_input { 6 } else { 5 },
            joints: skeleton.joints,
            frames: self.window.receptive_field,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.optimizer.lr,
            lr_decay: self.optimizer.lr_decay,
            ..AdamConfig::default()
        }
    }

    /// Desk-scale defaults used by tests: 27-frame windows, C=64, d=2.
    pub fn desk_scale() -> ExperimentConfig {
        ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_desk_scale() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.window.receptive_field, 27);
        assert_eq!(cfg.denoiser.channels, 64);
        assert_eq!(cfg.denoiser.depth, 2);
        assert_eq!(cfg.diffusion.t_max, 1000);
        assert_eq!(cfg.diffusion.hypotheses, 20);
        assert_eq!(cfg.diffusion.ddim_steps, 10);
    }

    #[test]
    fn toml_roundtrip_with_renamed_keys() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        assert!(text.contains("T = 1000"));
        assert!(text.contains("W = 10"));
        assert!(text.contains("H = 20"));
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.diffusion.t_max, 1000);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            [diffusion]
            H = 5
            [optimizer]
            steps = 10
            "#,
        )
        .unwrap();
        assert_eq!(cfg.diffusion.hypotheses, 5);
        assert_eq!(cfg.diffusion.t_max, 1000);
        assert_eq!(cfg.optimizer.steps, 10);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.diffusion.ddim_steps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.denoiser.channels = 63; // not divisible by heads
        assert!(cfg.validate().is_err());
    }
}
