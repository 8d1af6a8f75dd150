//! Temporal windowing: seq2seq / seq2frame sampling with temporal
//! downsampling (tds) and edge-replication padding.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleType {
    /// Predict every frame of the window at once.
    Seq2Seq,
    /// Predict only the window's center frame.
    Seq2Frame,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub receptive_field: usize,
    pub sample_type: SampleType,
    pub tds: usize,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.receptive_field < 1 {
            return Err(Error::Config("receptive field must be >= 1".into()));
        }
        if self.tds < 1 {
            return Err(Error::Config("tds must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { receptive_field: 27, sample_type: SampleType::Seq2Seq, tds: 1 }
    }
}

/// One model window over raw frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// First raw index of the window's extent.
    pub start: usize,
    /// Raw indices feeding the model, edge-clamped, length = receptive
    /// field.
    pub model_indices: Vec<usize>,
    /// Number of model slots whose raw index fell beyond the sequence and
    /// was clamped (recorded so metrics can drop padded frames).
    pub pad_len: usize,
    /// Target raw frame (seq2frame only).
    pub target: Option<usize>,
}

/// Enumerate windows over a sequence of `seq_len` raw frames.
///
/// seq2seq tiles the sequence with non-overlapping extents of
/// `receptive_field * tds` raw frames, sampling every `tds`-th frame; the
/// last window is edge-replicated. seq2frame produces one centered window
/// per target frame with edge replication at the boundaries.
pub fn make_windows(seq_len: usize, spec: &WindowSpec) -> Result<Vec<Window>> {
    if seq_len < 1 {
        return Err(Error::Config("sequence must have at least one frame".into()));
    }
    spec.validate()?;
    let f = spec.receptive_field;
    let tds = spec.tds;
    let mut out = Vec::new();
    match spec.sample_type {
        SampleType::Seq2Seq => {
            let extent = f * tds;
            let mut start = 0;
            while start < seq_len {
                let mut model_indices = Vec::with_capacity(f);
                let mut pad_len = 0;
                for i in 0..f {
                    let raw = start + i * tds;
                    if raw >= seq_len {
                        pad_len += 1;
                        model_indices.push(seq_len - 1);
                    } else {
                        model_indices.push(raw);
                    }
                }
                out.push(Window { start, model_indices, pad_len, target: None });
                start += extent;
            }
        }
        SampleType::Seq2Frame => {
            let center = f / 2;
            for target in 0..seq_len {
                let mut model_indices = Vec::with_capacity(f);
                let mut pad_len = 0;
                for i in 0..f {
                    let offset = (i as isize - center as isize) * tds as isize;
                    let raw = target as isize + offset;
                    let clamped = raw.clamp(0, seq_len as isize - 1) as usize;
                    if raw != clamped as isize {
                        pad_len += 1;
                    }
                    model_indices.push(clamped);
                }
                out.push(Window {
                    start: model_indices[0],
                    model_indices,
                    pad_len,
                    target: Some(target),
                });
            }
        }
    }
    Ok(out)
}
