//! Pretrains an offline model, saves it, initializes an online model from the
//! checkpoint and fine-tunes the online path.

use dualsep::datagen::{make_mixture, MixConfig, Utterance};
use dualsep::dualpath::{PathSelector, Scheme};
use dualsep::metrics::evaluate;
use dualsep::models::{init_from_offline, load_checkpoint, save_checkpoint, Model, ModelConfig, TdConfig};
use dualsep::training::{train_loop, Strategy, TrainConfig};

fn main() -> dualsep::Result<()> {
    let mix = MixConfig {
        duration_s: 0.5,
        ..Default::default()
    };
    let data: Vec<Utterance> = (0..4).map(|i| make_mixture(i, &mix).map(Into::into)).collect::<Result<_, _>>()?;
    let base = TdConfig {
        scheme: Scheme::Standard,
        ..TdConfig::tiny()
    };

    let offline = Model::<f32>::new(ModelConfig::Td(base.clone()), 0)?;
    let tc = TrainConfig {
        batch_size: 1,
        max_epochs: 20,
        strategy: Strategy::FromScratchOffline,
        ..Default::default()
    };
    let pre = train_loop(offline, &data, &data, &tc, |_| {})?;
    println!("offline: {}", evaluate(&pre.best, &data, PathSelector::Offline)?.summary_line());

    let dir = std::env::temp_dir().join("dualsep_offline_ckpt");
    save_checkpoint(&pre.best, &pre.meta, &dir)?;
    let (restored, _) = load_checkpoint::<f32>(&dir)?;

    for scheme in [Scheme::Decomposed, Scheme::Reorganized] {
        let target = ModelConfig::Td(TdConfig { scheme, ..base.clone() });
        let online = init_from_offline(&restored, &target, 1)?;
        let same = online.infer(&data[0].mixture, PathSelector::Offline)? == pre.best.infer(&data[0].mixture, PathSelector::Offline)?;
        println!("{scheme}: offline path reproduces the pretrained model: {same}");
        let start = evaluate(&online, &data, PathSelector::Online)?;
        let tc = TrainConfig {
            strategy: Strategy::InitFromOffline,
            ..tc.clone()
        };
        let tuned = train_loop(online, &data, &data, &tc, |_| {})?;
        let end = evaluate(&tuned.best, &data, PathSelector::Online)?;
        println!(
            "  online SI-SDRi {:.2} dB -> {:.2} dB after fine-tuning",
            start.summary.si_sdri, end.summary.si_sdri
        );
    }
    Ok(())
}
