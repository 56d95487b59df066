use std::f64::consts::PI;
use std::sync::Arc;

use numcore::{CustomOp, Graph, Real, Tensor, Var};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::SequenceFeature;

/// Short-time Fourier analysis with a periodic Hann window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            win_ms: 32.0,
            hop_ms: 8.0,
        }
    }
}

fn samples(ms: f64, sample_rate: u32) -> Option<usize> {
    let n = ms * sample_rate as f64 / 1000.0;
    (n >= 1.0 && (n - n.round()).abs() < 1e-9).then(|| n.round() as usize)
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        let (Some(w), Some(h)) = (samples(self.win_ms, self.sample_rate), samples(self.hop_ms, self.sample_rate)) else {
            return Err(Error::Config(format!(
                "window {} ms and hop {} ms must be whole sample counts at {} Hz",
                self.win_ms, self.hop_ms, self.sample_rate
            )));
        };
        if w % 2 != 0 || h > w || w % h != 0 {
            return Err(Error::Config(format!(
                "window of {w} samples must be even and a multiple of the {h}-sample hop"
            )));
        }
        Ok(())
    }

    pub fn win_len(&self) -> usize {
        samples(self.win_ms, self.sample_rate).unwrap_or(0)
    }

    pub fn hop_len(&self) -> usize {
        samples(self.hop_ms, self.sample_rate).unwrap_or(0)
    }

    pub fn bins(&self) -> usize {
        self.win_len() / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        if len < self.win_len() {
            0
        } else {
            (len - self.win_len()) / self.hop_len() + 1
        }
    }

    /// Signal length produced by synthesizing `frames` frames.
    pub fn synth_len(&self, frames: usize) -> usize {
        (frames.max(1) - 1) * self.hop_len() + self.win_len()
    }

    pub fn window(&self) -> Vec<f64> {
        hann(self.win_len())
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Magnitude and phase spectrogram, both `frames x bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<T> {
    pub magnitude: SequenceFeature<T>,
    pub phase: Tensor<T>,
}

pub fn stft_analyze<T: Real>(cfg: &StftConfig, wav: &[T]) -> Result<Spectrogram<T>> {
    cfg.validate()?;
    let (w, h, f) = (cfg.win_len(), cfg.hop_len(), cfg.bins());
    if wav.len() < w {
        return Err(Error::TooShort {
            needed: w,
            got: wav.len(),
        });
    }
    let k = cfg.frames(wav.len());
    let window = cfg.window();
    let fft = FftPlanner::new().plan_fft_forward(w);
    let mut buf = vec![Complex64::default(); w];
    let mut mag = Vec::with_capacity(k * f);
    let mut phase = Vec::with_capacity(k * f);
    for t in 0..k {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(wav[t * h + i].as_f64() * window[i], 0.0);
        }
        fft.process(&mut buf);
        for b in &buf[..f] {
            mag.push(T::lit(b.norm()));
            phase.push(T::lit(b.arg()));
        }
    }
    Ok(Spectrogram {
        magnitude: SequenceFeature::new(Tensor::new(&[k, f], mag)?, cfg.hop_ms)?,
        phase: Tensor::new(&[k, f], phase)?,
    })
}

/// Inverse STFT by weighted overlap-add, normalized by the summed squared
/// window.
struct Synthesis {
    w: usize,
    h: usize,
    frames: usize,
    window: Vec<f64>,
    /// `1 / max(sum of w^2, 1e-8)` per output sample.
    inv_env: Vec<f64>,
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
}

impl Synthesis {
    fn new(cfg: &StftConfig, frames: usize) -> Self {
        let (w, h) = (cfg.win_len(), cfg.hop_len());
        let window = cfg.window();
        let len = cfg.synth_len(frames);
        let mut env = vec![0.0; len];
        for t in 0..frames {
            for i in 0..w {
                env[t * h + i] += window[i] * window[i];
            }
        }
        let inv_env = env.iter().map(|e| 1.0 / e.max(1e-8)).collect();
        let mut planner = FftPlanner::new();
        Self {
            w,
            h,
            frames,
            window,
            inv_env,
            inverse: planner.plan_fft_inverse(w),
            forward: planner.plan_fft_forward(w),
        }
    }

    fn run<T: Real>(&self, mag: &[T], phase: &[T]) -> Vec<f64> {
        let (w, f) = (self.w, self.w / 2 + 1);
        let mut out = vec![0.0; self.inv_env.len()];
        let mut buf = vec![Complex64::default(); w];
        for t in 0..self.frames {
            for b in 0..f {
                let x = Complex64::from_polar(mag[t * f + b].as_f64(), phase[t * f + b].as_f64());
                buf[b] = x;
                if b > 0 && b < w - b {
                    buf[w - b] = x.conj();
                }
            }
            self.inverse.process(&mut buf);
            for i in 0..w {
                out[t * self.h + i] += self.window[i] * buf[i].re / w as f64;
            }
        }
        for (o, s) in out.iter_mut().zip(&self.inv_env) {
            *o *= s;
        }
        out
    }
}

struct IstftOp {
    synth: Synthesis,
    phase: Vec<f64>,
}

impl<T: Real> CustomOp<T> for IstftOp {
    fn name(&self) -> &'static str {
        "istft"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        let s = &self.synth;
        let (w, f) = (s.w, s.w / 2 + 1);
        let mut gm = vec![T::zero(); s.frames * f];
        let mut buf = vec![Complex64::default(); w];
        for t in 0..s.frames {
            for (i, b) in buf.iter_mut().enumerate() {
                let n = t * s.h + i;
                *b = Complex64::new(s.window[i] * grad_out[n].as_f64() * s.inv_env[n], 0.0);
            }
            s.forward.process(&mut buf);
            for b in 0..f {
                let c = if b == 0 || 2 * b == w { 1.0 } else { 2.0 };
                let rot = Complex64::from_polar(1.0, self.phase[t * f + b]);
                let d = c / w as f64 * (rot * buf[b].conj()).re;
                gm[t * f + b] = T::lit(d);
            }
        }
        vec![Some(gm)]
    }
}

pub fn istft_synthesize<T: Real>(cfg: &StftConfig, magnitude: &Tensor<T>, phase: &Tensor<T>) -> Result<Vec<T>> {
    let mut g = Graph::new();
    let m = g.constant(magnitude.clone())?;
    let y = istft(&mut g, cfg, m, phase)?;
    Ok(g.value(y).data().to_vec())
}

/// Differentiable inverse STFT of a `frames x bins` magnitude with a fixed
/// phase. Gradients flow to the magnitude only.
pub fn istft<T: Real>(g: &mut Graph<T>, cfg: &StftConfig, magnitude: Var, phase: &Tensor<T>) -> Result<Var> {
    cfg.validate()?;
    let shape = g.shape(magnitude).to_vec();
    if shape.len() != 2 || shape[1] != cfg.bins() || phase.shape() != shape.as_slice() {
        return Err(Error::Config(format!(
            "istft expects matching frames x {} magnitude and phase, got {shape:?} and {:?}",
            cfg.bins(),
            phase.shape()
        )));
    }
    if shape[0] == 0 {
        return Err(Error::EmptySequence);
    }
    let synth = Synthesis::new(cfg, shape[0]);
    let out = synth.run(g.value(magnitude).data(), phase.data());
    let out = Tensor::new(&[out.len()], out.into_iter().map(T::lit).collect())?;
    let op = IstftOp {
        synth,
        phase: phase.data().iter().map(|p| p.as_f64()).collect(),
    };
    Ok(g.custom(&[magnitude], out, Box::new(op))?)
}

#[cfg(test)]
mod tests {
    use numcore::{grad_check, Rng};

    use super::*;

    fn cfg() -> StftConfig {
        StftConfig::default()
    }

    #[test]
    fn config_sizes() {
        let c = cfg();
        assert_eq!((c.win_len(), c.hop_len(), c.bins()), (256, 64, 129));
        let c = StftConfig {
            sample_rate: 16000,
            ..c
        };
        assert_eq!(c.bins(), 257);
        let bad = StftConfig {
            hop_ms: 7.0,
            ..c
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_signal_has_zero_magnitude() {
        let s = stft_analyze(&cfg(), &vec![0.0f64; 1000]).unwrap();
        assert!(s.magnitude.data.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn too_short_input() {
        assert!(matches!(
            stft_analyze(&cfg(), &[0.0f64; 10]),
            Err(Error::TooShort { needed: 256, got: 10 })
        ));
    }

    #[test]
    fn bin_centered_sine_concentrates_energy() {
        let c = cfg();
        let bin = 20;
        let wav: Vec<f64> = (0..2000)
            .map(|n| (2.0 * PI * bin as f64 * n as f64 / c.win_len() as f64).sin())
            .collect();
        let s = stft_analyze(&c, &wav).unwrap();
        for t in 1..s.magnitude.frames() - 1 {
            let frame = s.magnitude.frame(t);
            let total: f64 = frame.iter().map(|m| m * m).sum();
            let near: f64 = frame[bin - 1..=bin + 1].iter().map(|m| m * m).sum();
            assert!(near / total > 0.99, "frame {t}: {}", near / total);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let c = cfg();
        let mut rng = Rng::new(0);
        let wav: Vec<f64> = (0..600).map(|_| rng.normal()).collect();
        let s = stft_analyze(&c, &wav).unwrap();
        let w = c.window();
        let n = c.win_len();
        for t in 0..s.magnitude.frames() {
            let time: f64 = (0..n).map(|i| (wav[t * c.hop_len() + i] * w[i]).powi(2)).sum();
            let m = s.magnitude.frame(t);
            let freq: f64 = m
                .iter()
                .enumerate()
                .map(|(b, v)| if b == 0 || 2 * b == n { v * v } else { 2.0 * v * v })
                .sum::<f64>()
                / n as f64;
            assert!((time - freq).abs() < 1e-9 * time.max(1.0));
        }
    }

    #[test]
    fn round_trip_is_identity_on_interior() {
        let c = cfg();
        let mut rng = Rng::new(1);
        let wav: Vec<f64> = (0..256 + 64 * 20).map(|_| rng.normal()).collect();
        let s = stft_analyze(&c, &wav).unwrap();
        let y = istft_synthesize(&c, &s.magnitude.data, &s.phase).unwrap();
        assert_eq!(y.len(), wav.len());
        let d = (c.win_len()..wav.len() - c.win_len())
            .map(|n| (y[n] - wav[n]).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn zero_magnitude_is_silence() {
        let c = cfg();
        let z = Tensor::<f64>::zeros(&[4, c.bins()]);
        let y = istft_synthesize(&c, &z, &z).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn istft_gradient_matches_finite_differences() {
        let c = StftConfig {
            sample_rate: 1000,
            win_ms: 8.0,
            hop_ms: 2.0,
        };
        let mut rng = Rng::new(2);
        let phase = Tensor::uniform(&[3, c.bins()], -3.0, 3.0, &mut rng);
        let weights = Tensor::uniform(&[c.synth_len(3)], -1.0, 1.0, &mut rng);
        let m = Tensor::uniform(&[3, c.bins()], 0.1, 1.0, &mut rng);
        let r = grad_check(
            |g, x| {
                let y = istft(g, &c, x, &phase)?;
                let w = g.constant(weights.clone())?;
                let p = g.mul(y, w)?;
                g.sum(p)
            },
            &m,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
    }
}
