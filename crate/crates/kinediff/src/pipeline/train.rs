//! Training loop: disentangle ground truth, noise it at a random timestep,
//! denoise conditioned on the 2D window, and step the optimizer on the
//! weighted loss.

use super::ModelState;
use crate::data::{make_windows, Clip};
use crate::disentangle::decompose;
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossBreakdown};
use crate::optimizer::Adam;
use crate::pose::{PoseSeq2D, PoseSeq3D};
use crate::tensor::{Rng, Tensor};
use std::io::Write;
use std::path::Path;

/// One training example: a 2D window and its camera-space 3D ground truth.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x2d: Vec<PoseSeq2D>,
    pub gt3d: Vec<PoseSeq3D>,
}

pub struct TrainState {
    pub model: ModelState,
    pub opt: Adam,
    pub data_rng: Rng,
}

impl TrainState {
    pub fn new(model: ModelState) -> TrainState {
        let opt = Adam::new(model.cfg.adam_config(), &model.params);
        let data_rng = Rng::with_stream(model.cfg.run.seed, 0x7A41);
        TrainState { model, opt, data_rng }
    }
}

/// One optimizer step over a batch of windows. Ground truth is made
/// root-relative, disentangled (or kept as coordinates on the ablation
/// path), noised at a per-window uniform timestep, fused with the 2D
/// observations, denoised, and scored.
pub fn train_step(state: &mut TrainState, batch: &TrainBatch) -> Result<LossBreakdown> {
    let model = &state.model;
    let s = &model.skeleton;
    let cfg = &model.cfg;
    let bsz = batch.x2d.len();
    if bsz == 0 || batch.gt3d.len() != bsz {
        return Err(Error::Contract("train_step: empty or mismatched batch".into()));
    }
    let (n, j) = (cfg.window.receptive_field, s.joints);
    let in_ch = if cfg.denoiser.disentangle_input { 6 } else { 5 };
    let mut fused_data = Vec::with_capacity(bsz * n * j * in_ch);
    let mut ts = Vec::with_capacity(bsz);
    let mut gt_rels: Vec<PoseSeq3D> = Vec::with_capacity(bsz);
    for (x2d, gt) in batch.x2d.iter().zip(&batch.gt3d) {
        if x2d.frames != n || gt.frames != n || x2d.joints != j || gt.joints != j {
            return Err(Error::Contract("train_step: window shape does not match config".into()));
        }
        let t = 1 + state.data_rng.next_below(cfg.diffusion.t_max as u64) as usize;
        ts.push(t);
        let gt_rel = gt.to_root_relative(s.root);
        let fused = if cfg.denoiser.disentangle_input {
            let bd = decompose(s, &gt_rel);
            let l0: Vec<f64> = bd.lengths.iter().map(|v| v * cfg.diffusion.scale_length).collect();
            let d0: Vec<f64> = bd.dirs.iter().map(|v| v * cfg.diffusion.scale_dir).collect();
            let (lt, _) = model.schedule.forward_noise(&l0, t, &mut state.data_rng)?;
            let (dt, _) = model.schedule.forward_noise(&d0, t, &mut state.data_rng)?;
            crate::denoiser::fuse_inputs(x2d, &lt, &dt, s)?
        } else {
            let y0: Vec<f64> = gt_rel.data.iter().map(|v| v * cfg.diffusion.scale_pose).collect();
            let (yt, _) = model.schedule.forward_noise(&y0, t, &mut state.data_rng)?;
            crate::denoiser::fuse_pose_inputs(x2d, &yt)?
        };
        fused_data.extend_from_slice(&fused.data());
        gt_rels.push(gt_rel);
    }
    let fused = Tensor::from_vec(&[bsz, n, j, in_ch], fused_data);
    let pred = model.denoiser.forward(&fused, &ts)?;

    let mut acc: Option<Tensor> = None;
    let mut sum_bd = LossBreakdown::default();
    for (bi, gt_rel) in gt_rels.iter().enumerate() {
        let pred_b = pred.gather(0, &[bi]).reshape(&[n, j, 3]);
        let gt_t = Tensor::from_vec(&[n, j, 3], gt_rel.data.clone());
        let (loss_b, bd) = total_loss(&pred_b, &gt_t, gt_rel, s, &cfg.loss);
        sum_bd.pos += bd.pos / bsz as f64;
        sum_bd.dis += bd.dis / bsz as f64;
        sum_bd.temp += bd.temp / bsz as f64;
        sum_bd.vel += bd.vel / bsz as f64;
        sum_bd.total += bd.total / bsz as f64;
        let w = loss_b.mul_scalar(1.0 / bsz as f64);
        acc = Some(match acc.take() {
            Some(a) => a.add(&w),
            None => w,
        });
    }
    let loss = acc.expect("non-empty batch");
    if !loss.item().is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at optimizer step {} (t={ts:?})", state.opt.step)));
    }
    loss.backward();
    state.opt.step(&state.model.params);
    Ok(sum_bd)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainReport {
    pub per_step: Vec<LossBreakdown>,
    pub steps: usize,
}

impl TrainReport {
    /// Mean loss components over one epoch (chunk of steps).
    pub fn epoch_mean(&self, steps_per_epoch: usize, epoch: usize) -> Option<LossBreakdown> {
        let start = epoch * steps_per_epoch;
        if start >= self.per_step.len() {
            return None;
        }
        let chunk = &self.per_step[start..(start + steps_per_epoch).min(self.per_step.len())];
        let k = chunk.len() as f64;
        let mut out = LossBreakdown::default();
        for bd in chunk {
            out.pos += bd.pos / k;
            out.dis += bd.dis / k;
            out.temp += bd.temp / k;
            out.vel += bd.vel / k;
            out.total += bd.total / k;
        }
        Some(out)
    }
}

/// Deterministic window sampler over the training clips.
pub struct WindowSampler {
    windows: Vec<(usize, Vec<usize>)>,
}

impl WindowSampler {
    pub fn new(clips: &[Clip], spec: &crate::data::WindowSpec) -> Result<WindowSampler> {
        let mut windows = Vec::new();
        for (ci, clip) in clips.iter().enumerate() {
            for w in make_windows(clip.pose3d.frames, spec)? {
                windows.push((ci, w.model_indices));
            }
        }
        if windows.is_empty() {
            return Err(Error::Config("no training windows".into()));
        }
        Ok(WindowSampler { windows })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn sample(&self, clips: &[Clip], rng: &mut Rng, batch_size: usize) -> TrainBatch {
        let mut batch = TrainBatch { x2d: Vec::with_capacity(batch_size), gt3d: Vec::with_capacity(batch_size) };
        for _ in 0..batch_size {
            let (ci, idx) = &self.windows[rng.next_below(self.windows.len() as u64) as usize];
            batch.x2d.push(clips[*ci].pose2d.select_frames(idx));
            batch.gt3d.push(clips[*ci].pose3d.select_frames(idx));
        }
        batch
    }
}

/// Full training run: samples batches, logs per-step losses, writes the
/// final checkpoint (and periodic ones when configured).
pub fn train(state: &mut TrainState, clips: &[Clip], out_dir: &Path) -> Result<TrainReport> {
    std::fs::create_dir_all(out_dir)?;
    let sampler = WindowSampler::new(clips, &state.model.cfg.window)?;
    let steps = state.model.cfg.optimizer.steps;
    let batch_size = state.model.cfg.optimizer.batch_size;
    let ckpt_every = state.model.cfg.optimizer.checkpoint_every;
    let mut log = std::fs::File::create(out_dir.join("loss_log.csv"))?;
    writeln!(log, "step,l_pos,l_dis,l_temp,l_vel,total")?;
    let mut report = TrainReport { per_step: Vec::with_capacity(steps), steps };
    let mut batch_rng = Rng::with_stream(state.model.cfg.run.seed, 0xBA7C);
    for step in 0..steps {
        let batch = sampler.sample(clips, &mut batch_rng, batch_size);
        let bd = train_step(state, &batch)?;
        writeln!(log, "{},{},{},{},{},{}", step, bd.pos, bd.dis, bd.temp, bd.vel, bd.total)?;
        report.per_step.push(bd);
        if ckpt_every > 0 && (step + 1) % ckpt_every == 0 && step + 1 < steps {
            let opt_state = state.opt.state_tensors(&state.model.params);
            state
                .model
                .save_checkpoint(&out_dir.join(format!("checkpoint_{:06}.kdck", step + 1)), Some(&opt_state))?;
        }
    }
    let opt_state = state.opt.state_tensors(&state.model.params);
    state.model.save_checkpoint(&out_dir.join("checkpoint_final.kdck"), Some(&opt_state))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::data::{synth_dataset, MotionKind};

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.window.receptive_field = 4;
        cfg.denoiser.channels = 16;
        cfg.denoiser.depth = 1;
        cfg.denoiser.heads = 2;
        cfg.optimizer.steps = 3;
        cfg.optimizer.batch_size = 2;
        cfg.diffusion.t_max = 50;
        cfg.diffusion.ddim_steps = 2;
        cfg
    }

    fn tiny_clips(dir: &str, cfg: &ExperimentConfig) -> Vec<Clip> {
        let dir = std::env::temp_dir().join(dir);
        let _ = std::fs::remove_dir_all(&dir);
        let s = cfg.skeleton.build().unwrap();
        synth_dataset(&dir, &s, 3, 4, 5, MotionKind::Smooth, 1.0).unwrap();
        crate::data::load_split(&dir, "train").unwrap()
    }

    #[test]
    fn zero_loss_weights_leave_parameters_unchanged() {
        let mut cfg = tiny_config();
        cfg.loss.w_pos = 0.0;
        cfg.loss.w_dis = 0.0;
        let clips = tiny_clips("kd_train_zero", &cfg);
        let model = ModelState::new(cfg).unwrap();
        let before: Vec<Vec<f64>> = model.params.iter().map(|(_, t)| t.to_vec()).collect();
        let mut state = TrainState::new(model);
        let sampler = WindowSampler::new(&clips, &state.model.cfg.window).unwrap();
        let mut rng = Rng::new(0);
        let batch = sampler.sample(&clips, &mut rng, 2);
        train_step(&mut state, &batch).unwrap();
        for ((_, t), old) in state.model.params.iter().zip(&before) {
            assert_eq!(&t.to_vec(), old);
        }
    }

    #[test]
    fn fixed_seed_bit_identical_loss_trajectory() {
        let cfg = tiny_config();
        let clips = tiny_clips("kd_train_det", &cfg);
        let run = || {
            let model = ModelState::new(cfg.clone()).unwrap();
            let mut state = TrainState::new(model);
            let out = std::env::temp_dir().join("kd_train_det_out");
            let _ = std::fs::remove_dir_all(&out);
            train(&mut state, &clips, &out).unwrap().per_step.iter().map(|b| b.total).collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn training_decreases_loss_on_tiny_problem() {
        let mut cfg = tiny_config();
        cfg.optimizer.steps = 60;
        cfg.optimizer.lr = 3e-3;
        let clips = tiny_clips("kd_train_improves", &cfg);
        let model = ModelState::new(cfg).unwrap();
        let mut state = TrainState::new(model);
        let out = std::env::temp_dir().join("kd_train_improves_out");
        let _ = std::fs::remove_dir_all(&out);
        let report = train(&mut state, &clips, &out).unwrap();
        let first: f64 = report.per_step[..10].iter().map(|b| b.total).sum::<f64>() / 10.0;
        let last: f64 = report.per_step[report.per_step.len() - 10..].iter().map(|b| b.total).sum::<f64>() / 10.0;
        assert!(last < first, "loss did not improve: first {first}, last {last}");
        assert!(out.join("checkpoint_final.kdck").exists());
        assert!(out.join("loss_log.csv").exists());
    }

    #[test]
    fn checkpoint_roundtrip_restores_parameters() {
        let cfg = tiny_config();
        let clips = tiny_clips("kd_train_ckpt", &cfg);
        let model = ModelState::new(cfg.clone()).unwrap();
        let mut state = TrainState::new(model);
        let out = std::env::temp_dir().join("kd_train_ckpt_out");
        let _ = std::fs::remove_dir_all(&out);
        train(&mut state, &clips, &out).unwrap();
        let trained: Vec<Vec<f64>> = state.model.params.iter().map(|(_, t)| t.to_vec()).collect();
        let mut fresh = ModelState::new(cfg).unwrap();
        let opt_state = fresh.load_checkpoint(&out.join("checkpoint_final.kdck")).unwrap();
        assert!(!opt_state.is_empty(), "optimizer state missing from checkpoint");
        for ((_, t), want) in fresh.params.iter().zip(&trained) {
            assert_eq!(&t.to_vec(), want);
        }
    }
}
