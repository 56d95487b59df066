//! Full separation models that run on either path with one parameter set.

mod checkpoint;
mod config;

pub use checkpoint::{init_from_offline, load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry, TrainingMeta};
pub use config::{FdConfig, ModelConfig, TdConfig};

use numcore::{Graph, ParamStore, Real, Rng, Tensor, Var};

use crate::codec::{encoder_norm, istft, stft_analyze, ConvCodecParams};
use crate::dualpath::{dprnn_stack_forward, stack_forward, ChunkLayout, DprnnBlock, DualBlock, Latency, PathSelector, Scheme};
use crate::error::{Error, Result};
use crate::layers::{FcParams, NormParams};

#[derive(Clone, Debug, PartialEq)]
struct FdArch {
    enc_norm: NormParams,
    blocks: Vec<DualBlock>,
    head: FcParams,
}

#[derive(Clone, Debug, PartialEq)]
struct TdArch {
    codec: ConvCodecParams,
    enc_norm: NormParams,
    blocks: Vec<DprnnBlock>,
    head: FcParams,
}

#[derive(Clone, Debug, PartialEq)]
enum Arch {
    Fd(FdArch),
    Td(TdArch),
}

/// A separation model: configuration, parameter handles and parameter values.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    arch: Arch,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let arch = match &config {
            ModelConfig::Fd(c) => {
                let n = c.bins();
                let enc_norm = NormParams::new(&mut store, "enc_norm", n);
                let blocks = (0..c.n_layers)
                    .map(|i| {
                        DualBlock::new(&mut store, &format!("block{i}"), c.scheme, n, c.hidden, c.rnn_norm, &mut rng)
                    })
                    .collect();
                let head = FcParams::new(&mut store, "mask", n, n * c.n_speakers, &mut rng);
                Arch::Fd(FdArch {
                    enc_norm,
                    blocks,
                    head,
                })
            }
            ModelConfig::Td(c) => {
                let n = c.n_kernels;
                let codec = ConvCodecParams::new(&mut store, "codec", n, c.kernel_len(), &mut rng)?;
                let enc_norm = NormParams::new(&mut store, "enc_norm", n);
                let blocks = (0..c.n_blocks)
                    .map(|i| {
                        DprnnBlock::new(&mut store, &format!("block{i}"), c.scheme, n, c.hidden, c.rnn_norm, &mut rng)
                    })
                    .collect();
                let head = FcParams::new(&mut store, "mask", n, n * c.n_speakers, &mut rng);
                Arch::Td(TdArch {
                    codec,
                    enc_norm,
                    blocks,
                    head,
                })
            }
        };
        Ok(Self {
            config,
            params: store,
            arch,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.config.scheme()
    }

    pub fn n_speakers(&self) -> usize {
        self.config.n_speakers()
    }

    pub fn num_params(&self) -> usize {
        self.params.num_elements()
    }

    pub fn latency(&self) -> Latency {
        self.config.latency()
    }

    pub fn check_path(&self, path: PathSelector) -> Result<()> {
        if path == PathSelector::Online && !self.scheme().has_online_path() {
            return Err(Error::NoOnlinePath("standard-scheme model"));
        }
        Ok(())
    }

    /// The same parameters with every dual-mode block viewed as standard.
    /// Only the offline path is available on the result.
    pub fn as_standard(&self) -> Model<T> {
        let arch = match &self.arch {
            Arch::Fd(a) => Arch::Fd(FdArch {
                blocks: a.blocks.iter().map(DualBlock::as_standard).collect(),
                ..a.clone()
            }),
            Arch::Td(a) => Arch::Td(TdArch {
                blocks: a.blocks.iter().map(DprnnBlock::as_standard).collect(),
                ..a.clone()
            }),
        };
        Model {
            config: self.config.with_scheme(Scheme::Standard),
            params: self.params.clone(),
            arch,
        }
    }

    /// Separates `mix` on a graph bound to a store laid out like `self.params`.
    /// Returns one waveform var per speaker, each as long as `mix`.
    pub fn separate(&self, g: &mut Graph<T>, mix: &[T], path: PathSelector) -> Result<Vec<Var>> {
        self.check_path(path)?;
        match (&self.arch, &self.config) {
            (Arch::Fd(a), ModelConfig::Fd(c)) => fd_forward(g, a, c, mix, path),
            (Arch::Td(a), ModelConfig::Td(c)) => td_forward(g, a, c, mix, path),
            _ => unreachable!("architecture always matches its config"),
        }
    }

    /// Inference without gradient tracking.
    pub fn infer(&self, mix: &[T], path: PathSelector) -> Result<Vec<Vec<T>>> {
        let mut g = Graph::inference(&self.params);
        let outs = self.separate(&mut g, mix, path)?;
        Ok(outs.into_iter().map(|v| g.value(v).data().to_vec()).collect())
    }

    /// Converts parameter values to another float type.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            arch: self.arch.clone(),
        }
    }
}

/// Splits `frames x (S*N)` mask logits into `S` ReLU masks of `frames x N`.
fn masks<T: Real>(g: &mut Graph<T>, head: &FcParams, x: Var, speakers: usize, n: usize) -> Result<Vec<Var>> {
    let logits = head.forward(g, x)?;
    let m = g.relu(logits)?;
    (0..speakers)
        .map(|s| Ok(g.slice(m, 1, s * n, (s + 1) * n)?))
        .collect()
}

fn fd_forward<T: Real>(
    g: &mut Graph<T>,
    a: &FdArch,
    c: &FdConfig,
    mix: &[T],
    path: PathSelector,
) -> Result<Vec<Var>> {
    let stft = c.stft();
    let (w, h) = (stft.win_len(), stft.hop_len());
    if mix.len() < w {
        return Err(Error::TooShort {
            needed: w,
            got: mix.len(),
        });
    }
    // Pad so every input sample is covered by a full set of frames.
    let pad = w - h;
    let frames = (mix.len() + pad).div_ceil(h);
    let mut padded = vec![T::zero(); stft.synth_len(frames)];
    padded[pad..pad + mix.len()].copy_from_slice(mix);
    let spec = stft_analyze(&stft, &padded)?;
    let n = stft.bins();
    let mag = g.constant(spec.magnitude.data)?;
    let x = encoder_norm(g, &a.enc_norm, mag, c.enc_norm, path)?;
    let x = g.reshape(x, &[frames, 1, n])?;
    let y = stack_forward(g, &a.blocks, x, path)?;
    let y = g.reshape(y, &[frames, n])?;
    let mut outs = Vec::with_capacity(c.n_speakers);
    for m in masks(g, &a.head, y, c.n_speakers, n)? {
        let est = g.mul(m, mag)?;
        let wav = istft(g, &stft, est, &spec.phase)?;
        outs.push(g.slice(wav, 0, pad, pad + mix.len())?);
    }
    Ok(outs)
}

fn td_forward<T: Real>(
    g: &mut Graph<T>,
    a: &TdArch,
    c: &TdConfig,
    mix: &[T],
    path: PathSelector,
) -> Result<Vec<Var>> {
    let (l, s) = (c.kernel_len(), c.stride());
    if mix.len() < l {
        return Err(Error::TooShort {
            needed: l,
            got: mix.len(),
        });
    }
    let frames = (mix.len() - l).div_ceil(s) + 1;
    let mut padded = vec![T::zero(); (frames - 1) * s + l];
    padded[..mix.len()].copy_from_slice(mix);
    let wav = g.constant(Tensor::from_vec(padded))?;
    let enc = a.codec.encode(g, wav)?;
    let x = encoder_norm(g, &a.enc_norm, enc, c.enc_norm, path)?;
    let layout = ChunkLayout::new(frames, c.chunk, c.chunk / 2)?;
    let chunks = layout.split(g, x)?;
    let y = dprnn_stack_forward(g, &a.blocks, chunks, path)?;
    let y = layout.merge(g, y)?;
    let mut outs = Vec::with_capacity(c.n_speakers);
    for m in masks(g, &a.head, y, c.n_speakers, c.n_kernels)? {
        let est = g.mul(m, enc)?;
        let wav = a.codec.decode(g, est)?;
        outs.push(g.slice(wav, 0, 0, mix.len())?);
    }
    Ok(outs)
}
