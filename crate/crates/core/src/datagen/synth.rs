use std::f64::consts::PI;

use numcore::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A procedural harmonic "speaker".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpeakerSpec {
    /// Fundamental frequency band in Hz, `[lo, hi)`.
    pub f0_range: (f64, f64),
    pub harmonics: usize,
    /// Rate of the amplitude envelope in Hz; 0 keeps it constant.
    pub envelope_hz: f64,
    /// Relative depth of the slow pitch glide.
    pub vibrato: f64,
    /// Probability that a segment is voiced.
    pub voiced_prob: f64,
}

impl SynthSpeakerSpec {
    pub fn low() -> Self {
        Self {
            f0_range: (90.0, 150.0),
            harmonics: 12,
            envelope_hz: 3.0,
            vibrato: 0.04,
            voiced_prob: 0.8,
        }
    }

    pub fn high() -> Self {
        Self {
            f0_range: (180.0, 300.0),
            ..Self::low()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.f0_range;
        if !(lo > 0.0 && hi > lo) || !(0.0..=1.0).contains(&self.voiced_prob) || self.vibrato < 0.0 {
            return Err(Error::Config(format!("invalid speaker spec {self:?}")));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.f0_range.0 < other.f0_range.1 && other.f0_range.0 < self.f0_range.1
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Sum of harmonics with a time-varying envelope and pauses, scaled to unit RMS.
pub fn synth_speaker(spec: &SynthSpeakerSpec, samples: usize, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let sr = sample_rate as f64;
    let f0 = rng.uniform(spec.f0_range.0, spec.f0_range.1);
    let glide_hz = rng.uniform(0.5, 2.0);
    let glide_phase = rng.uniform(0.0, 2.0 * PI);
    let env_phase = rng.uniform(0.0, 2.0 * PI);
    let harmonic_phase: Vec<f64> = (0..spec.harmonics).map(|_| rng.uniform(0.0, 2.0 * PI)).collect();

    // voiced/unvoiced segments of 100-400 ms with 10 ms ramps
    let mut gate = vec![0.0; samples];
    let ramp = (0.01 * sr).max(1.0);
    let mut segments = Vec::new();
    let mut start = 0;
    while start < samples {
        let len = ((rng.uniform(0.1, 0.4) * sr) as usize).max(1).min(samples - start);
        segments.push((start, len, rng.bernoulli(spec.voiced_prob)));
        start += len;
    }
    // an active speaker is never fully silent
    if !segments.iter().any(|s| s.2) {
        if let Some(first) = segments.first_mut() {
            first.2 = true;
        }
    }
    for (start, len, voiced) in segments {
        if voiced {
            for i in 0..len {
                let edge = (i as f64 + 1.0).min((len - i) as f64);
                gate[start + i] = (edge / ramp).min(1.0);
            }
        }
    }

    let nyquist = sr / 2.0;
    let mut phase = 0.0;
    let mut out = vec![0.0; samples];
    for (n, o) in out.iter_mut().enumerate() {
        let t = n as f64 / sr;
        let f = f0 * (1.0 + spec.vibrato * (2.0 * PI * glide_hz * t + glide_phase).sin());
        phase += 2.0 * PI * f / sr;
        let env = if spec.envelope_hz > 0.0 {
            0.6 + 0.4 * (2.0 * PI * spec.envelope_hz * t + env_phase).sin()
        } else {
            1.0
        };
        let mut acc = 0.0;
        for (k, hp) in harmonic_phase.iter().enumerate() {
            let h = (k + 1) as f64;
            if h * f >= nyquist {
                break;
            }
            acc += (h * phase + hp).sin() / h;
        }
        *o = acc * env * gate[n];
    }
    let r = rms(&out);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v /= r);
    }
    out
}

/// Dry noise: white noise through a one-pole low-pass, unit RMS.
pub fn synth_noise(samples: usize, rng: &mut Rng) -> Vec<f64> {
    let a = rng.uniform(0.0, 0.9);
    let mut y = 0.0;
    let mut out: Vec<f64> = (0..samples)
        .map(|_| {
            y = a * y + (1.0 - a) * rng.normal();
            y
        })
        .collect();
    let r = rms(&out);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v /= r);
    }
    out
}

/// A 50 ms exponentially decaying sparse impulse response with a unit direct path.
pub fn reverb_fir(sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let len = (0.05 * sample_rate as f64).round().max(1.0) as usize;
    let decay = rng.uniform(0.005, 0.015) * sample_rate as f64;
    let mut h = vec![0.0; len];
    h[0] = 1.0;
    for (i, v) in h.iter_mut().enumerate().skip(1) {
        if rng.bernoulli(0.1) {
            *v = rng.normal() * 0.5 * (-(i as f64) / decay).exp();
        }
    }
    h
}

/// Causal convolution truncated to the input length.
pub fn apply_fir(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| h.iter().take(n + 1).enumerate().map(|(k, hk)| hk * x[n - k]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use rustfft::num_complex::Complex64;
    use rustfft::FftPlanner;

    use super::*;

    #[test]
    fn no_harmonics_is_silence() {
        let spec = SynthSpeakerSpec {
            harmonics: 0,
            ..SynthSpeakerSpec::low()
        };
        assert!(synth_speaker(&spec, 800, 8000, &mut Rng::new(0)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_harmonic_is_a_tone_at_f0() {
        let spec = SynthSpeakerSpec {
            f0_range: (125.0, 125.0 + 1e-9),
            harmonics: 1,
            envelope_hz: 0.0,
            vibrato: 0.0,
            voiced_prob: 1.0,
        };
        let n = 8000;
        let x = synth_speaker(&spec, n, 8000, &mut Rng::new(1));
        let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak = (1..n / 2).max_by(|a, b| buf[*a].norm().total_cmp(&buf[*b].norm())).unwrap();
        assert_eq!(peak, 125);
    }

    #[test]
    fn same_seed_same_waveform() {
        let s = SynthSpeakerSpec::high();
        assert_eq!(
            synth_speaker(&s, 500, 8000, &mut Rng::new(3)),
            synth_speaker(&s, 500, 8000, &mut Rng::new(3))
        );
    }

    #[test]
    fn presets_have_disjoint_bands() {
        assert!(!SynthSpeakerSpec::low().overlaps(&SynthSpeakerSpec::high()));
    }

    #[test]
    fn fir_keeps_direct_path() {
        let h = reverb_fir(8000, &mut Rng::new(0));
        assert_eq!(h.len(), 400);
        let y = apply_fir(&[1.0, 0.0, 0.0], &h);
        assert_eq!(y, h[..3].to_vec());
    }
}
