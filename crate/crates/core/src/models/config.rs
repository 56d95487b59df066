use serde::{Deserialize, Serialize};

use crate::codec::StftConfig;
use crate::dualpath::{latency_frames, Latency, LatencyModel, Scheme};
use crate::error::{Error, Result};
use crate::layers::NormKind;

/// Frequency-domain masker: stacked dual-mode LSTM blocks over STFT magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_layers: usize,
    pub hidden: usize,
    pub n_speakers: usize,
    pub scheme: Scheme,
    pub enc_norm: NormKind,
    pub rnn_norm: NormKind,
}

impl FdConfig {
    pub fn full() -> Self {
        Self {
            sample_rate: 16000,
            win_ms: 32.0,
            hop_ms: 8.0,
            n_layers: 4,
            hidden: 256,
            n_speakers: 2,
            scheme: Scheme::Decomposed,
            enc_norm: NormKind::Cln,
            rnn_norm: NormKind::Cln,
        }
    }

    pub fn desk() -> Self {
        Self {
            sample_rate: 8000,
            n_layers: 2,
            hidden: 64,
            ..Self::full()
        }
    }

    pub fn tiny() -> Self {
        Self {
            hidden: 32,
            ..Self::desk()
        }
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            sample_rate: self.sample_rate,
            win_ms: self.win_ms,
            hop_ms: self.hop_ms,
        }
    }

    pub fn bins(&self) -> usize {
        self.stft().bins()
    }

    pub fn validate(&self) -> Result<()> {
        self.stft().validate()?;
        if self.n_layers == 0 || self.hidden == 0 || self.n_speakers == 0 {
            return Err(Error::Config(
                "fd model needs n_layers, hidden and n_speakers >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Time-domain masker: conv encoder, chunk-online dual-path blocks, conv decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdConfig {
    pub sample_rate: u32,
    pub kernel_ms: f64,
    pub n_kernels: usize,
    pub n_blocks: usize,
    pub hidden: usize,
    /// Chunk length in encoder frames; chunks overlap by half.
    pub chunk: usize,
    pub n_speakers: usize,
    pub scheme: Scheme,
    pub enc_norm: NormKind,
    pub rnn_norm: NormKind,
}

impl TdConfig {
    pub fn full() -> Self {
        Self {
            sample_rate: 16000,
            kernel_ms: 2.0,
            n_kernels: 64,
            n_blocks: 6,
            hidden: 128,
            chunk: 100,
            n_speakers: 2,
            scheme: Scheme::Reorganized,
            enc_norm: NormKind::Cln,
            rnn_norm: NormKind::Cln,
        }
    }

    pub fn desk() -> Self {
        Self {
            sample_rate: 8000,
            n_blocks: 2,
            hidden: 32,
            ..Self::full()
        }
    }

    pub fn tiny() -> Self {
        Self {
            n_kernels: 32,
            hidden: 16,
            chunk: 20,
            ..Self::desk()
        }
    }

    pub fn kernel_len(&self) -> usize {
        (self.kernel_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn stride(&self) -> usize {
        self.kernel_len() / 2
    }

    pub fn frame_hop_ms(&self) -> f64 {
        self.stride() as f64 * 1000.0 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.kernel_ms * self.sample_rate as f64 / 1000.0;
        if (l - l.round()).abs() > 1e-9 || self.kernel_len() < 2 || self.kernel_len() % 2 != 0 {
            return Err(Error::Config(format!(
                "kernel of {} ms at {} Hz must be an even whole number of samples",
                self.kernel_ms, self.sample_rate
            )));
        }
        if self.chunk < 2 || self.chunk % 2 != 0 {
            return Err(Error::UnsupportedOverlap {
                chunk: self.chunk,
                hop: self.chunk / 2,
            });
        }
        if self.n_kernels == 0 || self.n_blocks == 0 || self.hidden == 0 || self.n_speakers == 0 {
            return Err(Error::Config(
                "td model needs n_kernels, n_blocks, hidden and n_speakers >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Either model family, tagged by `kind` in serialized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Fd(FdConfig),
    Td(TdConfig),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Fd(c) => c.validate(),
            ModelConfig::Td(c) => c.validate(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            ModelConfig::Fd(c) => c.scheme,
            ModelConfig::Td(c) => c.scheme,
        }
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        let mut c = self.clone();
        match &mut c {
            ModelConfig::Fd(f) => f.scheme = scheme,
            ModelConfig::Td(t) => t.scheme = scheme,
        }
        c
    }

    pub fn sample_rate(&self) -> u32 {
        match self {
            ModelConfig::Fd(c) => c.sample_rate,
            ModelConfig::Td(c) => c.sample_rate,
        }
    }

    pub fn n_speakers(&self) -> usize {
        match self {
            ModelConfig::Fd(c) => c.n_speakers,
            ModelConfig::Td(c) => c.n_speakers,
        }
    }

    pub fn latency(&self) -> Latency {
        match self {
            ModelConfig::Fd(c) => latency_frames(LatencyModel::StackedRnn { window_ms: c.win_ms }),
            ModelConfig::Td(c) => latency_frames(LatencyModel::Dprnn {
                chunk_len: c.chunk,
                frame_hop_ms: c.frame_hop_ms(),
                window_ms: c.kernel_ms,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [
            ModelConfig::Fd(FdConfig::full()),
            ModelConfig::Fd(FdConfig::desk()),
            ModelConfig::Td(TdConfig::full()),
            ModelConfig::Td(TdConfig::tiny()),
        ] {
            c.validate().unwrap();
        }
        assert_eq!(FdConfig::full().bins(), 257);
        assert_eq!((TdConfig::full().kernel_len(), TdConfig::full().stride()), (32, 16));
    }

    #[test]
    fn full_scale_latencies() {
        assert_eq!(ModelConfig::Td(TdConfig::full()).latency().ms, 100.0);
        assert_eq!(ModelConfig::Fd(FdConfig::full()).latency().ms, 32.0);
    }

    #[test]
    fn tagged_round_trip() {
        let c = ModelConfig::Td(TdConfig::desk());
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"kind\":\"td\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<ModelConfig>(r#"{"kind":"td","bogus":1}"#).is_err());
    }

    #[test]
    fn odd_chunk_is_rejected() {
        let c = TdConfig {
            chunk: 25,
            ..TdConfig::tiny()
        };
        assert!(matches!(c.validate(), Err(Error::UnsupportedOverlap { .. })));
    }
}
