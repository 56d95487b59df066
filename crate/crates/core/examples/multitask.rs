//! Multitask training: one backward pass through the sum of the online and
//! offline losses.

use dualsep::datagen::{make_mixture, MixConfig, Utterance};
use dualsep::dualpath::{PathSelector, Scheme};
use dualsep::metrics::evaluate;
use dualsep::models::{Model, ModelConfig, TdConfig};
use dualsep::training::{multitask_step, train_loop, MultitaskWeights, Strategy, TrainConfig};

fn main() -> dualsep::Result<()> {
    let mix = MixConfig {
        duration_s: 0.5,
        ..Default::default()
    };
    let data: Vec<Utterance> = (0..4).map(|i| make_mixture(i, &mix).map(Into::into)).collect::<Result<_, _>>()?;
    let cfg = ModelConfig::Td(TdConfig {
        scheme: Scheme::Reorganized,
        ..TdConfig::tiny()
    });

    let mut model = Model::<f32>::new(cfg, 0)?;
    let batch: Vec<&Utterance> = data.iter().collect();
    let (off, on) = multitask_step(&mut model, &batch, MultitaskWeights::default())?;
    println!("one step: offline loss {off:.3} dB, online loss {on:.3} dB, grad norm {:.3}", model.params.grad_norm());

    let tc = TrainConfig {
        batch_size: 2,
        max_epochs: 30,
        strategy: Strategy::Multitask,
        ..Default::default()
    };
    let out = train_loop(model, &data, &data, &tc, |r| {
        if r.epoch % 5 == 0 {
            println!(
                "epoch {:2}: offline {:7.3} online {:7.3}",
                r.epoch,
                r.train.offline.unwrap_or(f64::NAN),
                r.train.online.unwrap_or(f64::NAN)
            );
        }
    })?;
    for path in [PathSelector::Offline, PathSelector::Online] {
        println!("{}", evaluate(&out.best, &data, path)?.summary_line());
    }
    Ok(())
}
