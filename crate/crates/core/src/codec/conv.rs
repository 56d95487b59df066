use numcore::{CustomOp, Graph, ParamId, ParamStore, Real, Rng, Tensor, Var};

use crate::error::{Error, Result};
use crate::layers::{init_uniform, SequenceFeature};

/// Learnable strided 1-D convolution encoder and transposed-convolution decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvCodecParams {
    /// `n_kernels x kernel_len`
    pub encoder: ParamId,
    /// `n_kernels x kernel_len`
    pub decoder: ParamId,
    pub n_kernels: usize,
    pub kernel_len: usize,
    pub stride: usize,
}

impl ConvCodecParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        n_kernels: usize,
        kernel_len: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_kernels == 0 || kernel_len < 2 || kernel_len % 2 != 0 {
            return Err(Error::Config(format!(
                "conv codec needs at least one kernel and an even kernel length, got {n_kernels} x {kernel_len}"
            )));
        }
        let bound = 1.0 / (kernel_len as f64).sqrt();
        let encoder = store.add(
            format!("{name}.encoder"),
            init_uniform(&[n_kernels, kernel_len], bound, rng),
        );
        let decoder = store.add(
            format!("{name}.decoder"),
            init_uniform(&[n_kernels, kernel_len], bound, rng),
        );
        Ok(Self {
            encoder,
            decoder,
            n_kernels,
            kernel_len,
            stride: kernel_len / 2,
        })
    }

    pub fn num_params(&self) -> usize {
        2 * self.n_kernels * self.kernel_len
    }

    pub fn frames(&self, len: usize) -> usize {
        if len < self.kernel_len {
            0
        } else {
            (len - self.kernel_len) / self.stride + 1
        }
    }

    /// `wav (len) -> frames x n_kernels`.
    pub fn encode<T: Real>(&self, g: &mut Graph<T>, wav: Var) -> Result<Var> {
        let frames = frame_signal(g, wav, self.kernel_len, self.stride)?;
        let basis = g.param(self.encoder)?;
        Ok(g.matmul_nt(frames, basis)?)
    }

    /// `feat (frames x n_kernels) -> wav ((frames - 1) * stride + kernel_len)`.
    pub fn decode<T: Real>(&self, g: &mut Graph<T>, feat: Var) -> Result<Var> {
        let shape = g.shape(feat);
        if shape.len() != 2 || shape[1] != self.n_kernels {
            return Err(Error::Dim {
                context: "conv decoder channels",
                expected: self.n_kernels,
                actual: shape.last().copied().unwrap_or(0),
            });
        }
        let basis = g.param(self.decoder)?;
        let frames = g.matmul(feat, basis)?;
        overlap_add(g, frames, self.stride)
    }
}

fn frame_into<T: Real>(src: &[T], dst: &mut [T], frames: usize, len: usize, stride: usize) {
    for k in 0..frames {
        dst[k * len..(k + 1) * len].copy_from_slice(&src[k * stride..k * stride + len]);
    }
}

fn add_frames<T: Real>(src: &[T], dst: &mut [T], frames: usize, len: usize, stride: usize) {
    for k in 0..frames {
        for (d, s) in dst[k * stride..k * stride + len].iter_mut().zip(&src[k * len..(k + 1) * len]) {
            *d += *s;
        }
    }
}

struct FrameOp {
    frames: usize,
    len: usize,
    stride: usize,
    samples: usize,
}

impl<T: Real> CustomOp<T> for FrameOp {
    fn name(&self) -> &'static str {
        "frame"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let mut gx = vec![T::zero(); self.samples];
        add_frames(grad_out, &mut gx, self.frames, self.len, self.stride);
        vec![Some(gx)]
    }
}

struct OverlapAddOp {
    frames: usize,
    len: usize,
    stride: usize,
}

impl<T: Real> CustomOp<T> for OverlapAddOp {
    fn name(&self) -> &'static str {
        "overlap_add"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let mut gf = vec![T::zero(); self.frames * self.len];
        frame_into(grad_out, &mut gf, self.frames, self.len, self.stride);
        vec![Some(gf)]
    }
}

/// Cuts `wav (len)` into `frames x len` strided windows; trailing samples
/// that do not fill a window are dropped.
pub fn frame_signal<T: Real>(g: &mut Graph<T>, wav: Var, len: usize, stride: usize) -> Result<Var> {
    let samples = g.value(wav).len();
    if g.shape(wav).len() != 1 {
        return Err(Error::Config(format!("framing expects a 1-D signal, got {:?}", g.shape(wav))));
    }
    if samples < len {
        return Err(Error::TooShort { needed: len, got: samples });
    }
    let frames = (samples - len) / stride + 1;
    let mut out = vec![T::zero(); frames * len];
    frame_into(g.value(wav).data(), &mut out, frames, len, stride);
    let out = Tensor::new(&[frames, len], out)?;
    let op = FrameOp {
        frames,
        len,
        stride,
        samples,
    };
    Ok(g.custom(&[wav], out, Box::new(op))?)
}

/// Sums `frames x len` windows at hop `stride` into one signal.
pub fn overlap_add<T: Real>(g: &mut Graph<T>, frames: Var, stride: usize) -> Result<Var> {
    let shape = g.shape(frames).to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::Config(format!("overlap-add expects frames x len, got {shape:?}")));
    }
    let (k, len) = (shape[0], shape[1]);
    let mut out = vec![T::zero(); (k - 1) * stride + len];
    add_frames(g.value(frames).data(), &mut out, k, len, stride);
    let out = Tensor::new(&[out.len()], out)?;
    Ok(g.custom(&[frames], out, Box::new(OverlapAddOp { frames: k, len, stride }))?)
}

pub fn conv_encode<T: Real>(
    store: &ParamStore<T>,
    p: &ConvCodecParams,
    wav: &[T],
    sample_rate: u32,
) -> Result<SequenceFeature<T>> {
    let mut g = Graph::inference(store);
    let x = g.constant(Tensor::from_vec(wav.to_vec()))?;
    let y = p.encode(&mut g, x)?;
    SequenceFeature::new(g.value(y).clone(), p.stride as f64 * 1000.0 / sample_rate as f64)
}

pub fn conv_decode<T: Real>(store: &ParamStore<T>, p: &ConvCodecParams, feat: &SequenceFeature<T>) -> Result<Vec<T>> {
    let mut g = Graph::inference(store);
    let x = g.constant(feat.data.clone())?;
    let y = p.decode(&mut g, x)?;
    Ok(g.value(y).data().to_vec())
}
