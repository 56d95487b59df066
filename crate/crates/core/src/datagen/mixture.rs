use numcore::Rng;
use serde::{Deserialize, Serialize};

use super::synth::{apply_fir, reverb_fir, synth_noise, synth_speaker, SynthSpeakerSpec};
use crate::error::{Error, Result};

/// Sampling rules for one two-speaker noisy mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixConfig {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub speakers: [SynthSpeakerSpec; 2],
    /// Overlap ratio range; equal bounds force a value.
    pub overlap: (f64, f64),
    /// Energy ratio of speaker 1 to speaker 2 in dB.
    pub speaker_snr_db: (f64, f64),
    /// Energy ratio of the speech sum to the noise in dB.
    pub noise_snr_db: (f64, f64),
    pub noise: bool,
    pub reverb: bool,
    /// RMS of the first speaker.
    pub level: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            duration_s: 2.0,
            speakers: [SynthSpeakerSpec::low(), SynthSpeakerSpec::high()],
            overlap: (0.0, 1.0),
            speaker_snr_db: (0.0, 5.0),
            noise_snr_db: (10.0, 20.0),
            noise: true,
            reverb: false,
            level: 0.1,
        }
    }
}

impl MixConfig {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo <= hi && lo.is_finite() && hi.is_finite();
        if self.samples() < 2 {
            return Err(Error::Config(format!("duration {} s is too short", self.duration_s)));
        }
        if !ordered(self.overlap) || self.overlap.0 < 0.0 || self.overlap.1 > 1.0 {
            return Err(Error::Config(format!("overlap range {:?} must lie in [0, 1]", self.overlap)));
        }
        if !ordered(self.speaker_snr_db) || !ordered(self.noise_snr_db) || self.level <= 0.0 {
            return Err(Error::Config("snr ranges must be ordered and level positive".into()));
        }
        for s in &self.speakers {
            s.validate()?;
        }
        if self.speakers[0].overlaps(&self.speakers[1]) {
            return Err(Error::Config("speaker f0 bands must be disjoint".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureMeta {
    pub overlap_ratio: f64,
    pub speaker_snr_db: f64,
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

/// `mixture[i] == (sources[0][i] + sources[1][i]) + noise[i]` in f32.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureExample {
    pub mixture: Vec<f32>,
    pub sources: Vec<Vec<f32>>,
    pub noise: Vec<f32>,
    pub meta: MixtureMeta,
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.uniform(lo, hi)
    }
}

/// Samples of each speaker's active region: speaker 1 on `[0, L)` and
/// speaker 2 on `[T - L, T)` with `L = T / (2 - overlap)`.
pub fn active_len(total: usize, overlap: f64) -> usize {
    ((total as f64 / (2.0 - overlap)).round() as usize).clamp(1, total)
}

pub fn make_mixture(seed: u64, cfg: &MixConfig) -> Result<MixtureExample> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let total = cfg.samples();
    let overlap = draw(&mut rng, cfg.overlap);
    let speaker_snr = draw(&mut rng, cfg.speaker_snr_db);
    let noise_snr = draw(&mut rng, cfg.noise_snr_db);
    let l = active_len(total, overlap);

    let mut sources = Vec::with_capacity(2);
    for (i, spec) in cfg.speakers.iter().enumerate() {
        let mut s_rng = rng.fork(i as u64 + 1);
        let active = synth_speaker(spec, l, cfg.sample_rate, &mut s_rng);
        let offset = if i == 0 { 0 } else { total - l };
        let mut s = vec![0.0; total];
        s[offset..offset + l].copy_from_slice(&active);
        if cfg.reverb {
            s = apply_fir(&s, &reverb_fir(cfg.sample_rate, &mut s_rng));
        }
        sources.push(s);
    }
    let (e0, e1) = (energy(&sources[0]), energy(&sources[1]));
    let g0 = if e0 > 0.0 { cfg.level * (total as f64 / e0).sqrt() } else { 0.0 };
    let target_e1 = g0 * g0 * e0 / 10f64.powf(speaker_snr / 10.0);
    let g1 = if e1 > 0.0 { (target_e1 / e1).sqrt() } else { 0.0 };
    let s0: Vec<f32> = sources[0].iter().map(|v| (v * g0) as f32).collect();
    let s1: Vec<f32> = sources[1].iter().map(|v| (v * g1) as f32).collect();

    let speech: Vec<f64> = s0.iter().zip(&s1).map(|(a, b)| (a + b) as f64).collect();
    let noise: Vec<f32> = if cfg.noise {
        let n = synth_noise(total, &mut rng.fork(3));
        let gn = (energy(&speech) / energy(&n) / 10f64.powf(noise_snr / 10.0)).sqrt();
        n.iter().map(|v| (v * gn) as f32).collect()
    } else {
        vec![0.0; total]
    };
    let mixture = s0.iter().zip(&s1).zip(&noise).map(|((a, b), n)| (a + b) + n).collect();
    Ok(MixtureExample {
        mixture,
        sources: vec![s0, s1],
        noise,
        meta: MixtureMeta {
            overlap_ratio: overlap,
            speaker_snr_db: speaker_snr,
            noise_snr_db: cfg.noise.then_some(noise_snr),
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e32(x: &[f32]) -> f64 {
        x.iter().map(|v| (*v as f64).powi(2)).sum()
    }

    #[test]
    fn mixture_is_exact_sum() {
        let m = make_mixture(1, &MixConfig::default()).unwrap();
        for i in 0..m.mixture.len() {
            assert_eq!(m.mixture[i], (m.sources[0][i] + m.sources[1][i]) + m.noise[i]);
        }
        assert_eq!(m.mixture.len(), 16000);
    }

    #[test]
    fn zero_overlap_gives_disjoint_support() {
        let cfg = MixConfig {
            overlap: (0.0, 0.0),
            ..Default::default()
        };
        let m = make_mixture(2, &cfg).unwrap();
        let last0 = m.sources[0].iter().rposition(|v| *v != 0.0).unwrap();
        let first1 = m.sources[1].iter().position(|v| *v != 0.0).unwrap();
        assert!(last0 < first1 + 1);
    }

    #[test]
    fn zero_db_speakers_have_equal_energy() {
        let cfg = MixConfig {
            speaker_snr_db: (0.0, 0.0),
            ..Default::default()
        };
        let m = make_mixture(3, &cfg).unwrap();
        let (a, b) = (e32(&m.sources[0]), e32(&m.sources[1]));
        assert!((a - b).abs() / a < 1e-6);
    }

    #[test]
    fn noise_level_matches_sampled_snr() {
        for seed in 0..10 {
            let m = make_mixture(seed, &MixConfig::default()).unwrap();
            let speech: Vec<f32> = m.sources[0].iter().zip(&m.sources[1]).map(|(a, b)| a + b).collect();
            let measured = 10.0 * (e32(&speech) / e32(&m.noise)).log10();
            let target = m.meta.noise_snr_db.unwrap();
            assert!((measured - target).abs() < 0.1);
            assert!((10.0..=20.0).contains(&target));
            assert!((0.0..=5.0).contains(&m.meta.speaker_snr_db));
            assert!((0.0..=1.0).contains(&m.meta.overlap_ratio));
        }
    }

    #[test]
    fn overlapping_bands_are_rejected() {
        let cfg = MixConfig {
            speakers: [SynthSpeakerSpec::low(), SynthSpeakerSpec::low()],
            ..Default::default()
        };
        assert!(make_mixture(0, &cfg).is_err());
    }

    #[test]
    fn reverb_keeps_the_sum_exact() {
        let cfg = MixConfig {
            reverb: true,
            duration_s: 0.5,
            ..Default::default()
        };
        let m = make_mixture(4, &cfg).unwrap();
        for i in 0..m.mixture.len() {
            assert_eq!(m.mixture[i], (m.sources[0][i] + m.sources[1][i]) + m.noise[i]);
        }
    }
}
