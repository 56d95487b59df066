use numcore::{Real, Tensor};

use crate::error::{Error, Result};

/// A `frames x channels` feature with its frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFeature<T> {
    pub data: Tensor<T>,
    pub frame_hop_ms: f64,
}

impl<T: Real> SequenceFeature<T> {
    pub fn new(data: Tensor<T>, frame_hop_ms: f64) -> Result<Self> {
        let s = data.shape();
        if s.len() != 2 || s[0] == 0 || s[1] == 0 {
            return Err(Error::Config(format!(
                "sequence feature must be frames x channels with both >= 1, got {s:?}"
            )));
        }
        Ok(Self { data, frame_hop_ms })
    }

    pub fn from_frames(frames: &[Vec<T>], frame_hop_ms: f64) -> Result<Self> {
        let n = frames.first().map(|f| f.len()).unwrap_or(0);
        let data: Vec<T> = frames.iter().flatten().copied().collect();
        Self::new(Tensor::new(&[frames.len(), n], data)?, frame_hop_ms)
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frame(&self, k: usize) -> &[T] {
        self.data.row(k)
    }
}
