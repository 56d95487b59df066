//! Online outputs never depend on input beyond the model's lookahead; the
//! offline path does.

use dualsep::dualpath::{PathSelector, Scheme};
use dualsep::models::{FdConfig, Model, ModelConfig, TdConfig};
use numcore::Rng;

fn main() -> dualsep::Result<()> {
    for cfg in [
        ModelConfig::Td(TdConfig {
            scheme: Scheme::Reorganized,
            ..TdConfig::tiny()
        }),
        ModelConfig::Fd(FdConfig::tiny()),
    ] {
        let model = Model::<f64>::new(cfg, 0)?;
        let sr = model.config.sample_rate();
        let lookahead = model.latency().lookahead_samples(sr);
        let mut rng = Rng::new(1);
        let mix: Vec<f64> = (0..4000).map(|_| rng.uniform(-0.3, 0.3)).collect();
        let t = 2000;
        let mut late = mix.clone();
        for v in &mut late[t + lookahead + 1..] {
            *v = rng.uniform(-0.3, 0.3);
        }
        for path in [PathSelector::Online, PathSelector::Offline] {
            let a = model.infer(&mix, path)?;
            let b = model.infer(&late, path)?;
            let diff = a
                .iter()
                .zip(&b)
                .flat_map(|(x, y)| x[..=t].iter().zip(&y[..=t]).map(|(p, q)| (p - q).abs()))
                .fold(0.0, f64::max);
            println!(
                "{} {path}: lookahead {lookahead} samples, change before t from later input {diff:.2e}",
                model.scheme()
            );
        }
    }
    Ok(())
}
