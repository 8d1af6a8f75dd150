//! Denoising network: fuses the 2D pose sequence with noisy bone
//! quantities and regresses the clean 3D pose sequence.
//!
//! The pipeline is a linear input embedding plus hierarchical, per-joint,
//! temporal, and timestep embeddings, one vanilla spatio-temporal
//! transformer pair, then `depth` loops of kinematic-hierarchy spatial
//! attention (adjacency-bias mixing) alternating with per-joint temporal
//! attention, and a linear regression head.

use crate::error::{Error, Result};
use crate::pose::{PoseSeq2D, PoseSeq3D};
use crate::skeleton::{graph_distance_banks, AdjacencyBank, Skeleton, HIERARCHY_LEVELS};
use crate::tensor::{Rng, Tensor};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

/// How the adjacency mixing coefficients are shared across KHST blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSharing {
    /// One coefficient set per KHST block, shared across heads.
    PerBlock,
    /// A single coefficient set shared by every KHST block.
    Global,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DenoiserConfig {
    pub channels: usize,
    /// Number of KHST+KHTT loop pairs after the vanilla pair.
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub alpha_sharing: AlphaSharing,
    /// Per-joint input channels: 6 for disentangled input
    /// [x, y, length, dx, dy, dz], 5 for the pose-noise ablation.
    pub in_channels: usize,
    pub joints: usize,
    pub frames: usize,
}

impl DenoiserConfig {
    pub fn desk_scale(joints: usize, frames: usize) -> Self {
        DenoiserConfig {
            channels: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 2,
            alpha_sharing: AlphaSharing::PerBlock,
            in_channels: 6,
            joints,
            frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "channels {} must be a positive multiple of heads {}",
                self.channels, self.heads
            )));
        }
        if self.depth < 1 {
            return Err(Error::Config("denoiser depth must be >= 1".into()));
        }
        if !(self.in_channels == 5 || self.in_channels == 6) {
            return Err(Error::Config("in_channels must be 5 (pose ablation) or 6 (disentangled)".into()));
        }
        Ok(())
    }
}

pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Linear {
        Linear {
            w: Tensor::param_randn(&[in_dim, out_dim], INIT_STD, rng),
            b: Tensor::param(&[out_dim], vec![0.0; out_dim]),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        x.matmul(&self.w).add(&self.b)
    }
}

pub(crate) struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    fn new(dim: usize) -> LayerNorm {
        LayerNorm {
            gamma: Tensor::param(&[dim], vec![1.0; dim]),
            beta: Tensor::param(&[dim], vec![0.0; dim]),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        x.layer_norm(LN_EPS).mul(&self.gamma).add(&self.beta)
    }
}

/// Multi-head attention over the middle (token) axis of a [B, T, C] tensor.
pub struct Mha {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Mha {
    fn new(dim: usize, heads: usize, rng: &mut Rng) -> Mha {
        Mha {
            q: Linear::new(dim, dim, rng),
            k: Linear::new(dim, dim, rng),
            v: Linear::new(dim, dim, rng),
            o: Linear::new(dim, dim, rng),
            heads,
        }
    }

    /// Scaled dot-product attention. `bias` (shape [T, T]) is added to the
    /// attention map after the softmax, so biased rows need not sum to 1.
    pub(crate) fn forward(&self, x: &Tensor, bias: Option<&Tensor>) -> Tensor {
        let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.heads;
        let dh = c / h;
        let split = |y: Tensor| y.reshape(&[b, t, h, dh]).transpose(1, 2); // [B,H,T,dh]
        let q = split(self.q.forward(x));
        let k = split(self.k.forward(x));
        let v = split(self.v.forward(x));
        let scores = q.matmul(&k.transpose(2, 3)).mul_scalar(1.0 / (dh as f64).sqrt());
        let mut attn = scores.softmax(3);
        if let Some(bias) = bias {
            attn = attn.add(bias);
        }
        let ctx = attn.matmul(&v).transpose(1, 2).reshape(&[b, t, c]);
        self.o.forward(&ctx)
    }
}

pub(crate) struct Block {
    pub ln1: LayerNorm,
    pub attn: Mha,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    /// Adjacency mixing coefficients; present only on KHST blocks.
    pub alphas: Option<[Tensor; 4]>,
}

impl Block {
    fn new(dim: usize, heads: usize, mlp_ratio: usize, alphas: Option<[Tensor; 4]>, rng: &mut Rng) -> Block {
        Block {
            ln1: LayerNorm::new(dim),
            attn: Mha::new(dim, heads, rng),
            ln2: LayerNorm::new(dim),
            fc1: Linear::new(dim, dim * mlp_ratio, rng),
            fc2: Linear::new(dim * mlp_ratio, dim, rng),
            alphas: alphas,
        }
    }

    fn forward(&self, x: &Tensor, bias: Option<&Tensor>) -> Tensor {
        let h = x.add(&self.attn.forward(&self.ln1.forward(x), bias));
        let m = self.fc2.forward(&self.fc1.forward(&self.ln2.forward(&h)).gelu());
        h.add(&m)
    }
}

fn zero_alphas() -> [Tensor; 4] {
    [
        Tensor::param(&[], vec![0.0]),
        Tensor::param(&[], vec![0.0]),
        Tensor::param(&[], vec![0.0]),
        Tensor::param(&[], vec![0.0]),
    ]
}

/// Sinusoidal timestep features of width `dim`.
pub fn timestep_features(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / half.max(1) as f64);
        let angle = t as f64 * freq;
        out[i] = angle.sin();
        out[half + i] = angle.cos();
    }
    out
}

/// Per-joint fusion of the 2D pose with noisy bone quantities.
///
/// Channel layout per joint: [x, y, bone length of the bone whose child is
/// this joint, bone direction xyz]. The root has no incoming bone; its bone
/// slots are zero.
pub fn fuse_inputs(x2d: &PoseSeq2D, lt: &[f64], dt: &[f64], s: &Skeleton) -> Result<Tensor> {
    let (n, j, b) = (x2d.frames, x2d.joints, s.bones());
    if j != s.joints {
        return Err(Error::Contract(format!("fuse_inputs: 2D pose has {j} joints, skeleton {}", s.joints)));
    }
    if lt.len() != n * b || dt.len() != n * b * 3 {
        return Err(Error::Contract(format!(
            "fuse_inputs: expected {n}x{b} lengths and {n}x{b}x3 directions, got {} and {}",
            lt.len(),
            dt.len()
        )));
    }
    let mut data = vec![0.0; n * j * 6];
    for f in 0..n {
        for joint in 0..j {
            let o = (f * j + joint) * 6;
            let p = x2d.get(f, joint);
            data[o] = p[0];
            data[o + 1] = p[1];
            if let Some(bi) = s.bone_of_joint(joint) {
                data[o + 2] = lt[f * b + bi];
                let d = (f * b + bi) * 3;
                data[o + 3] = dt[d];
                data[o + 4] = dt[d + 1];
                data[o + 5] = dt[d + 2];
            }
        }
    }
    Ok(Tensor::from_vec(&[n, j, 6], data))
}

/// Ablation fusion: per joint [x, y, noisy pose xyz].
pub fn fuse_pose_inputs(x2d: &PoseSeq2D, yt: &[f64]) -> Result<Tensor> {
    let (n, j) = (x2d.frames, x2d.joints);
    if yt.len() != n * j * 3 {
        return Err(Error::Contract("fuse_pose_inputs: noisy pose shape mismatch".into()));
    }
    let mut data = vec![0.0; n * j * 5];
    for f in 0..n {
        for joint in 0..j {
            let o = (f * j + joint) * 5;
            let p = x2d.get(f, joint);
            let yo = (f * j + joint) * 3;
            data[o] = p[0];
            data[o + 1] = p[1];
            data[o + 2] = yt[yo];
            data[o + 3] = yt[yo + 1];
            data[o + 4] = yt[yo + 2];
        }
    }
    Ok(Tensor::from_vec(&[n, j, 5], data))
}

pub struct Denoiser {
    pub cfg: DenoiserConfig,
    pub(crate) input_proj: Linear,
    /// Hierarchical embedding: one learned row per hierarchy level.
    pub(crate) hie: Tensor,
    pub(crate) joint_emb: Tensor,
    pub(crate) temporal_emb: Tensor,
    pub(crate) time_proj: Linear,
    pub(crate) spatial_blocks: Vec<Block>,
    pub(crate) temporal_blocks: Vec<Block>,
    pub(crate) head_ln: LayerNorm,
    pub(crate) head: Linear,
    /// Constant adjacency masks A1, A2, A3, A4plus as [J, J] tensors.
    pub(crate) banks: [Tensor; 4],
    hierarchy_idx: Vec<usize>,
}

impl Denoiser {
    pub fn new(cfg: DenoiserConfig, skeleton: &Skeleton, rng: &mut Rng) -> Result<Denoiser> {
        cfg.validate()?;
        if skeleton.joints != cfg.joints {
            return Err(Error::Config("denoiser config joints do not match skeleton".into()));
        }
        let c = cfg.channels;
        let bank = graph_distance_banks(skeleton);
        let banks = bank_tensors(&bank);
        let global_alphas = matches!(cfg.alpha_sharing, AlphaSharing::Global).then(zero_alphas);
        let mut spatial_blocks = Vec::with_capacity(cfg.depth + 1);
        let mut temporal_blocks = Vec::with_capacity(cfg.depth + 1);
        let input_proj = Linear::new(cfg.in_channels, c, rng);
        let hie = Tensor::param_randn(&[HIERARCHY_LEVELS, c], INIT_STD, rng);
        let joint_emb = Tensor::param_randn(&[cfg.joints, c], INIT_STD, rng);
        let temporal_emb = Tensor::param_randn(&[cfg.frames, c], INIT_STD, rng);
        let time_proj = Linear::new(c, c, rng);
        for i in 0..=cfg.depth {
            // Block 0 is the vanilla spatio-temporal pair; blocks 1..=depth
            // carry the adjacency-bias coefficients on the spatial side.
            let alphas = if i == 0 {
                None
            } else {
                match &global_alphas {
                    Some(shared) => Some(shared.clone()),
                    None => Some(zero_alphas()),
                }
            };
            spatial_blocks.push(Block::new(c, cfg.heads, cfg.mlp_ratio, alphas, rng));
            temporal_blocks.push(Block::new(c, cfg.heads, cfg.mlp_ratio, None, rng));
        }
        let head_ln = LayerNorm::new(c);
        let head = Linear::new(c, 3, rng);
        Ok(Denoiser {
            hierarchy_idx: skeleton.hierarchy.clone(),
            cfg,
            input_proj,
            hie,
            joint_emb,
            temporal_emb,
            time_proj,
            spatial_blocks,
            temporal_blocks,
            head_ln,
            head,
            banks,
        })
    }

    /// KHST bias for one block: sum of alpha_k * A_k, or None for vanilla
    /// attention.
    fn bias_for(&self, block: &Block) -> Option<Tensor> {
        block.alphas.as_ref().map(|a| {
            let mut bias = self.banks[0].mul(&a[0]);
            for k in 1..4 {
                bias = bias.add(&self.banks[k].mul(&a[k]));
            }
            bias
        })
    }

    /// Forward over a batch of fused windows. `fused` is [B, N, J, in];
    /// `ts[i]` is the diffusion timestep of window i. Returns [B, N, J, 3].
    pub fn forward(&self, fused: &Tensor, ts: &[usize]) -> Result<Tensor> {
        let shape = fused.shape().to_vec();
        if shape.len() != 4
            || shape[1] != self.cfg.frames
            || shape[2] != self.cfg.joints
            || shape[3] != self.cfg.in_channels
        {
            return Err(Error::Contract(format!(
                "denoiser input shape {shape:?} does not match [B, {}, {}, {}]",
                self.cfg.frames, self.cfg.joints, self.cfg.in_channels
            )));
        }
        let (b, n, j, c) = (shape[0], shape[1], shape[2], self.cfg.channels);
        if ts.len() != b {
            return Err(Error::Contract("one timestep per window required".into()));
        }
        let mut x = self.input_proj.forward(fused);
        let level_emb = self.hie.gather(0, &self.hierarchy_idx); // [J, C]
        x = x.add(&level_emb).add(&self.joint_emb);
        x = x.add(&self.temporal_emb.reshape(&[n, 1, c]));
        let mut tfeat = Vec::with_capacity(b * c);
        for &t in ts {
            tfeat.extend(timestep_features(t, c));
        }
        let temb = self.time_proj.forward(&Tensor::from_vec(&[b, c], tfeat)).reshape(&[b, 1, 1, c]);
        x = x.add(&temb);

        for (i, (sb, tb)) in self.spatial_blocks.iter().zip(&self.temporal_blocks).enumerate() {
            let bias = self.bias_for(sb);
            let spatial = sb.forward(&x.reshape(&[b * n, j, c]), bias.as_ref()).reshape(&[b, n, j, c]);
            let temporal = tb
                .forward(&spatial.transpose(1, 2).reshape(&[b * j, n, c]), None)
                .reshape(&[b, j, n, c])
                .transpose(1, 2);
            if !temporal.all_finite() {
                return Err(Error::Numeric(format!("non-finite activation after block pair {i}")));
            }
            x = temporal;
        }
        Ok(self.head.forward(&self.head_ln.forward(&x)))
    }

    /// Single-window forward returning a pose sequence.
    pub fn denoise(&self, fused: &Tensor, t: usize) -> Result<PoseSeq3D> {
        let shape = fused.shape().to_vec();
        let batched = fused.reshape(&[1, shape[0], shape[1], shape[2]]);
        let out = self.forward(&batched, &[t])?;
        PoseSeq3D::new(
            shape[0],
            shape[1],
            out.to_vec(),
            crate::pose::FrameRef::RootRelative,
        )
    }

    /// Named parameters in fixed registration order.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = vec![
            ("input_proj.weight".into(), self.input_proj.w.clone()),
            ("input_proj.bias".into(), self.input_proj.b.clone()),
            ("hie".into(), self.hie.clone()),
            ("joint_emb".into(), self.joint_emb.clone()),
            ("temporal_emb".into(), self.temporal_emb.clone()),
            ("time_proj.weight".into(), self.time_proj.w.clone()),
            ("time_proj.bias".into(), self.time_proj.b.clone()),
        ];
        let mut push_block = |prefix: String, blk: &Block, include_alphas: bool| {
            for (name, t) in [
                ("ln1.gamma", &blk.ln1.gamma),
                ("ln1.beta", &blk.ln1.beta),
                ("attn.q.weight", &blk.attn.q.w),
                ("attn.q.bias", &blk.attn.q.b),
                ("attn.k.weight", &blk.attn.k.w),
                ("attn.k.bias", &blk.attn.k.b),
                ("attn.v.weight", &blk.attn.v.w),
                ("attn.v.bias", &blk.attn.v.b),
                ("attn.o.weight", &blk.attn.o.w),
                ("attn.o.bias", &blk.attn.o.b),
                ("ln2.gamma", &blk.ln2.gamma),
                ("ln2.beta", &blk.ln2.beta),
                ("mlp.fc1.weight", &blk.fc1.w),
                ("mlp.fc1.bias", &blk.fc1.b),
                ("mlp.fc2.weight", &blk.fc2.w),
                ("mlp.fc2.bias", &blk.fc2.b),
            ] {
                out.push((format!("{prefix}.{name}"), t.clone()));
            }
            if include_alphas {
                if let Some(a) = &blk.alphas {
                    for (k, t) in a.iter().enumerate() {
                        out.push((format!("{prefix}.alpha.{k}"), t.clone()));
                    }
                }
            }
        };
        let per_block = matches!(self.cfg.alpha_sharing, AlphaSharing::PerBlock);
        for (i, blk) in self.spatial_blocks.iter().enumerate() {
            push_block(format!("blocks.spatial.{i}"), blk, per_block);
        }
        for (i, blk) in self.temporal_blocks.iter().enumerate() {
            push_block(format!("blocks.temporal.{i}"), blk, false);
        }
        if !per_block {
            if let Some(a) = self.spatial_blocks.iter().find_map(|b| b.alphas.as_ref()) {
                for (k, t) in a.iter().enumerate() {
                    out.push((format!("khst.alpha.{k}"), t.clone()));
                }
            }
        }
        out.push(("head_ln.gamma".into(), self.head_ln.gamma.clone()));
        out.push(("head_ln.beta".into(), self.head_ln.beta.clone()));
        out.push(("head.weight".into(), self.head.w.clone()));
        out.push(("head.bias".into(), self.head.b.clone()));
        out
    }

    /// Load parameter values by name (shapes must match).
    pub fn load_params(&self, values: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let mine = self.params();
        let lookup: std::collections::BTreeMap<&str, &Tensor> =
            mine.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (name, shape, data) in values {
            let t = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::Data(format!("checkpoint tensor {name} has no matching parameter")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Data(format!(
                    "checkpoint tensor {name} shape {shape:?} does not match parameter shape {:?}",
                    t.shape()
                )));
            }
            t.set_data(data);
        }
        Ok(())
    }
}

fn bank_tensors(bank: &AdjacencyBank) -> [Tensor; 4] {
    let j = bank.joints;
    [
        Tensor::from_vec(&[j, j], bank.a1.clone()),
        Tensor::from_vec(&[j, j], bank.a2.clone()),
        Tensor::from_vec(&[j, j], bank.a3.clone()),
        Tensor::from_vec(&[j, j], bank.a4plus.clone()),
    ]
}

/// Kinematic-hierarchy spatial attention on a single [J, C] frame: plain
/// scaled-dot-product attention whose softmaxed map is shifted by
/// sum_k alpha_k A_k before multiplying the values.
pub fn khst_attention(h: &Tensor, mha: &Mha, bank: &AdjacencyBank, alphas: &[Tensor; 4]) -> Tensor {
    let (j, c) = (h.shape()[0], h.shape()[1]);
    let banks = bank_tensors(bank);
    let mut bias = banks[0].mul(&alphas[0]);
    for k in 1..4 {
        bias = bias.add(&banks[k].mul(&alphas[k]));
    }
    mha.forward(&h.reshape(&[1, j, c]), Some(&bias)).reshape(&[j, c])
}
