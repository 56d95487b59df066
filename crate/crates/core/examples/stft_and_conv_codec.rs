//! STFT analysis/synthesis and the learnable convolutional codec.

use dualsep::codec::{conv_decode, conv_encode, istft_synthesize, stft_analyze, ConvCodecParams, StftConfig};
use numcore::{ParamStore, Rng};

fn main() -> dualsep::Result<()> {
    let cfg = StftConfig::default();
    let sr = cfg.sample_rate as f64;
    let wav: Vec<f64> = (0..8000)
        .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / sr).sin())
        .collect();

    let spec = stft_analyze(&cfg, &wav)?;
    let (frames, bins) = (spec.magnitude.frames(), spec.magnitude.channels());
    println!("window {} hop {} -> {frames} frames x {bins} bins", cfg.win_len(), cfg.hop_len());
    let peak = (0..bins)
        .max_by(|&a, &b| spec.magnitude.frame(10)[a].total_cmp(&spec.magnitude.frame(10)[b]))
        .unwrap_or(0);
    println!("peak bin {peak} = {:.1} Hz", peak as f64 * sr / cfg.win_len() as f64);

    let y = istft_synthesize(&cfg, &spec.magnitude.data, &spec.phase)?;
    let w = cfg.win_len();
    let err = wav[w..wav.len() - w]
        .iter()
        .zip(&y[w..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("interior reconstruction error {err:.2e}");

    let mut store = ParamStore::<f64>::new();
    let codec = ConvCodecParams::new(&mut store, "codec", 64, 16, &mut Rng::new(0))?;
    let feat = conv_encode(&store, &codec, &wav[..800], 8000)?;
    let back = conv_decode(&store, &codec, &feat)?;
    println!(
        "conv codec: {} samples -> {} x {} -> {} samples",
        800,
        feat.frames(),
        feat.channels(),
        back.len()
    );
    Ok(())
}
