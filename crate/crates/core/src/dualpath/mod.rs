//! Dual-mode recurrent blocks, overlapped chunking and the chunk-online
//! dual-path block.

mod block;
mod chunk;
mod dprnn;
mod latency;

pub use block::{stack_forward, DualBlock};
pub use chunk::{chunk_merge, chunk_split, ChunkLayout, ChunkedFeature};
pub use dprnn::{dprnn_stack_forward, DprnnBlock};
pub use latency::{latency_frames, Latency, LatencyModel};

use serde::{Deserialize, Serialize};

/// Which execution path a dual-mode block or model runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSelector {
    /// Causal: no frame depends on later frames.
    Online,
    /// Full context.
    Offline,
}

impl PathSelector {
    pub fn as_str(self) -> &'static str {
        match self {
            PathSelector::Online => "online",
            PathSelector::Offline => "offline",
        }
    }
}

impl std::fmt::Display for PathSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PathSelector {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "online" => Ok(PathSelector::Online),
            "offline" => Ok(PathSelector::Offline),
            other => Err(crate::Error::Parse {
                what: "path",
                detail: format!("expected online or offline, got {other:?}"),
            }),
        }
    }
}

/// How a bidirectional block is split into two paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Plain bidirectional block, offline only.
    Standard,
    /// Online path keeps the forward recurrence and adds its own projection.
    Decomposed,
    /// Second recurrence reads reversed input offline and the original input online.
    Reorganized,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::Decomposed => "decomposed",
            Scheme::Reorganized => "reorganized",
        }
    }

    pub fn has_online_path(self) -> bool {
        self != Scheme::Standard
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "standard" => Ok(Scheme::Standard),
            "decomposed" => Ok(Scheme::Decomposed),
            "reorganized" => Ok(Scheme::Reorganized),
            other => Err(crate::Error::Parse {
                what: "scheme",
                detail: format!("expected standard, decomposed or reorganized, got {other:?}"),
            }),
        }
    }
}
