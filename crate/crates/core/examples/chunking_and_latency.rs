//! Overlapped chunking of a feature sequence and the latency of online
//! models at full and desk scale.

use dualsep::dualpath::{chunk_merge, chunk_split, ChunkLayout};
use dualsep::layers::SequenceFeature;
use dualsep::models::{FdConfig, ModelConfig, TdConfig};
use numcore::{Rng, Tensor};

fn main() -> dualsep::Result<()> {
    let layout = ChunkLayout::new(150, 100, 50)?;
    println!(
        "150 frames, chunk 100, hop 50: pad {}+{} -> {} chunks",
        layout.pad_front, layout.pad_back, layout.chunks
    );

    let x = SequenceFeature::new(Tensor::<f64>::uniform(&[37, 4], -1.0, 1.0, &mut Rng::new(3)), 1.0)?;
    let c = chunk_split(&x, 10, 5)?;
    let y = chunk_merge(&c)?;
    println!(
        "37 frames -> chunks {:?}, merge error {:.1e}",
        c.data.shape(),
        y.data.max_abs_diff(&x.data)
    );

    for (name, cfg) in [
        ("td full", ModelConfig::Td(TdConfig::full())),
        ("td desk", ModelConfig::Td(TdConfig::desk())),
        ("fd full", ModelConfig::Fd(FdConfig::full())),
        ("fd desk", ModelConfig::Fd(FdConfig::desk())),
    ] {
        let l = cfg.latency();
        println!(
            "{name:9} latency {:6.1} ms ({} frames), lookahead {} samples",
            l.ms,
            l.frames,
            l.lookahead_samples(cfg.sample_rate())
        );
    }
    Ok(())
}
