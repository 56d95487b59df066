/// What a model's algorithmic latency is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatencyModel {
    /// Frame-recursive model over an analysis window.
    StackedRnn { window_ms: f64 },
    /// Chunk-online dual-path model over encoder frames.
    Dprnn {
        chunk_len: usize,
        frame_hop_ms: f64,
        window_ms: f64,
    },
}

/// Theoretical latency in frames and milliseconds, plus the input lookahead
/// an online output sample may depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Latency {
    pub frames: usize,
    pub ms: f64,
    pub lookahead_ms: f64,
}

impl Latency {
    /// Lookahead in samples, rounded up.
    pub fn lookahead_samples(&self, sample_rate: u32) -> usize {
        (self.lookahead_ms * sample_rate as f64 / 1000.0 - 1e-9).ceil() as usize
    }
}

pub fn latency_frames(model: LatencyModel) -> Latency {
    match model {
        LatencyModel::StackedRnn { window_ms } => Latency {
            frames: 1,
            ms: window_ms,
            lookahead_ms: window_ms,
        },
        LatencyModel::Dprnn {
            chunk_len,
            frame_hop_ms,
            window_ms,
        } => {
            let ms = chunk_len as f64 * frame_hop_ms;
            Latency {
                frames: chunk_len,
                ms,
                lookahead_ms: ms + window_ms,
            }
        }
    }
}
