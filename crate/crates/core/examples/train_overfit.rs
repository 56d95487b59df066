//! Overfits a tiny online model on four synthetic mixtures and reports the
//! training-set SI-SDR improvement.
//!
//! cargo run --release --example train_overfit -- [td|fd] [steps]

use dualsep::datagen::{make_mixture, MixConfig, Utterance};
use dualsep::dualpath::PathSelector;
use dualsep::metrics::evaluate;
use dualsep::models::{FdConfig, Model, ModelConfig, TdConfig};
use dualsep::training::{train_loop, TrainConfig};

fn main() -> dualsep::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = args.next().unwrap_or_else(|| "td".into());
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let mix = MixConfig {
        duration_s: 1.0,
        ..Default::default()
    };
    let data: Vec<Utterance> = (0..4).map(|i| make_mixture(100 + i, &mix).map(Into::into)).collect::<Result<_, _>>()?;
    let cfg = if kind == "fd" {
        ModelConfig::Fd(FdConfig::tiny())
    } else {
        ModelConfig::Td(TdConfig::tiny())
    };
    let model = Model::<f32>::new(cfg, 0)?;
    println!("{kind}: {} parameters, latency {:.1} ms", model.num_params(), model.latency().ms);

    let before = evaluate(&model, &data, PathSelector::Online)?;
    let tc = TrainConfig {
        batch_size: 1,
        max_epochs: usize::MAX,
        max_steps: Some(steps),
        ..Default::default()
    };
    let out = train_loop(model, &data, &data, &tc, |r| {
        if r.epoch % 10 == 0 {
            println!("epoch {:3} steps {:4} lr {:.1e} loss {:7.3} dB", r.epoch, r.steps, r.lr, r.train_loss);
        }
    })?;
    let after = evaluate(&out.best, &data, PathSelector::Online)?;
    println!("before: {}", before.summary_line());
    println!("after:  {}", after.summary_line());
    Ok(())
}
