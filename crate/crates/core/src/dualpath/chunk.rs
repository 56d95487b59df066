use numcore::{CustomOp, Graph, Real, Tensor, Var};

use crate::error::{Error, Result};
use crate::layers::SequenceFeature;

/// Geometry of a 50%-overlap chunking of a `frames x channels` sequence.
///
/// The sequence is front-padded with `hop` zero frames, then back-padded to
/// the least length `chunk_len + m * hop` that holds it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkLayout {
    pub frames: usize,
    pub chunk_len: usize,
    pub hop: usize,
    pub pad_front: usize,
    pub pad_back: usize,
    pub chunks: usize,
}

impl ChunkLayout {
    pub fn new(frames: usize, chunk_len: usize, hop: usize) -> Result<Self> {
        if hop == 0 || chunk_len != 2 * hop {
            return Err(Error::UnsupportedOverlap {
                chunk: chunk_len,
                hop,
            });
        }
        if frames == 0 {
            return Err(Error::EmptySequence);
        }
        let front_padded = frames + hop;
        let m = front_padded.saturating_sub(chunk_len).div_ceil(hop);
        let padded = chunk_len + m * hop;
        Ok(Self {
            frames,
            chunk_len,
            hop,
            pad_front: hop,
            pad_back: padded - front_padded,
            chunks: m + 1,
        })
    }

    pub fn padded_len(&self) -> usize {
        self.pad_front + self.frames + self.pad_back
    }

    fn validate(&self) -> Result<()> {
        let ok = self.chunk_len == 2 * self.hop
            && self.pad_front == self.hop
            && self.padded_len() == self.chunk_len + (self.chunks - 1) * self.hop
            && self.pad_back < self.hop;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("malformed chunk layout {self:?}")))
        }
    }

    /// Number of chunks covering padded position `p` (1 or 2).
    pub fn coverage(&self, p: usize) -> usize {
        let last = p / self.hop;
        let first = last.saturating_sub(1);
        (first..=last).filter(|c| *c < self.chunks).count()
    }

    /// Padded frame index for chunk `c`, offset `j`.
    fn source(&self, c: usize, j: usize) -> Option<usize> {
        let p = c * self.hop + j;
        (p >= self.pad_front && p < self.pad_front + self.frames).then(|| p - self.pad_front)
    }

    /// `x (frames x N) -> (chunks x chunk_len x N)` on the tape.
    pub fn split<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[0] != self.frames {
            return Err(Error::Config(format!(
                "chunk split expects {} x N input, got {shape:?}",
                self.frames
            )));
        }
        let n = shape[1];
        let xs = g.value(x).data();
        let mut out = vec![T::zero(); self.chunks * self.chunk_len * n];
        for c in 0..self.chunks {
            for j in 0..self.chunk_len {
                if let Some(k) = self.source(c, j) {
                    let d = (c * self.chunk_len + j) * n;
                    out[d..d + n].copy_from_slice(&xs[k * n..(k + 1) * n]);
                }
            }
        }
        let out = Tensor::new(&[self.chunks, self.chunk_len, n], out)?;
        Ok(g.custom(&[x], out, Box::new(SplitOp { layout: *self, channels: n }))?)
    }

    /// Overlap-add of `(chunks x chunk_len x N)` back to `frames x N`,
    /// dividing every frame by its chunk coverage.
    pub fn merge<T: Real>(&self, g: &mut Graph<T>, c: Var) -> Result<Var> {
        self.validate()?;
        let shape = g.shape(c).to_vec();
        if shape.len() != 3 || shape[0] != self.chunks || shape[1] != self.chunk_len {
            return Err(Error::Config(format!(
                "chunk merge expects {} x {} x N input, got {shape:?}",
                self.chunks, self.chunk_len
            )));
        }
        let n = shape[2];
        let cs = g.value(c).data();
        let mut out = vec![T::zero(); self.frames * n];
        for ci in 0..self.chunks {
            for j in 0..self.chunk_len {
                if let Some(k) = self.source(ci, j) {
                    let w = T::one() / T::lit(self.coverage(k + self.pad_front) as f64);
                    let s = (ci * self.chunk_len + j) * n;
                    for ch in 0..n {
                        out[k * n + ch] += cs[s + ch] * w;
                    }
                }
            }
        }
        let out = Tensor::new(&[self.frames, n], out)?;
        Ok(g.custom(&[c], out, Box::new(MergeOp { layout: *self, channels: n }))?)
    }
}

struct SplitOp {
    layout: ChunkLayout,
    channels: usize,
}

impl<T: Real> CustomOp<T> for SplitOp {
    fn name(&self) -> &'static str {
        "chunk_split"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let (l, n) = (&self.layout, self.channels);
        let mut gx = vec![T::zero(); l.frames * n];
        for c in 0..l.chunks {
            for j in 0..l.chunk_len {
                if let Some(k) = l.source(c, j) {
                    let s = (c * l.chunk_len + j) * n;
                    for ch in 0..n {
                        gx[k * n + ch] += grad_out[s + ch];
                    }
                }
            }
        }
        vec![Some(gx)]
    }
}

struct MergeOp {
    layout: ChunkLayout,
    channels: usize,
}

impl<T: Real> CustomOp<T> for MergeOp {
    fn name(&self) -> &'static str {
        "chunk_merge"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let (l, n) = (&self.layout, self.channels);
        let mut gc = vec![T::zero(); l.chunks * l.chunk_len * n];
        for c in 0..l.chunks {
            for j in 0..l.chunk_len {
                if let Some(k) = l.source(c, j) {
                    let w = T::one() / T::lit(l.coverage(k + l.pad_front) as f64);
                    let d = (c * l.chunk_len + j) * n;
                    for ch in 0..n {
                        gc[d + ch] = grad_out[k * n + ch] * w;
                    }
                }
            }
        }
        vec![Some(gc)]
    }
}

/// Overlapped chunks of a sequence feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedFeature<T> {
    /// `chunks x chunk_len x channels`
    pub data: Tensor<T>,
    pub layout: ChunkLayout,
    pub frame_hop_ms: f64,
}

pub fn chunk_split<T: Real>(
    x: &SequenceFeature<T>,
    chunk_len: usize,
    hop: usize,
) -> Result<ChunkedFeature<T>> {
    let layout = ChunkLayout::new(x.frames(), chunk_len, hop)?;
    let mut g = Graph::new();
    let v = g.constant(x.data.clone())?;
    let c = layout.split(&mut g, v)?;
    Ok(ChunkedFeature {
        data: g.value(c).clone(),
        layout,
        frame_hop_ms: x.frame_hop_ms,
    })
}

pub fn chunk_merge<T: Real>(c: &ChunkedFeature<T>) -> Result<SequenceFeature<T>> {
    let mut g = Graph::new();
    let v = g.constant(c.data.clone())?;
    let y = c.layout.merge(&mut g, v)?;
    SequenceFeature::new(g.value(y).clone(), c.frame_hop_ms)
}
