use dualsep::datagen::{build_dataset, load_split, make_mixture, DatasetConfig, MixConfig, Split, Utterance};
use dualsep::dualpath::{PathSelector, Scheme};
use dualsep::metrics::evaluate;
use dualsep::models::{load_checkpoint, save_checkpoint, Model, ModelConfig, TdConfig};
use dualsep::training::{batch_gradients, gradient_snapshot, train_loop, Objective, TrainConfig};

fn small_td() -> ModelConfig {
    ModelConfig::Td(TdConfig {
        sample_rate: 4000,
        n_kernels: 8,
        hidden: 4,
        chunk: 8,
        n_blocks: 1,
        scheme: Scheme::Reorganized,
        ..TdConfig::tiny()
    })
}

fn data(n: usize) -> Vec<Utterance> {
    let mix = MixConfig {
        sample_rate: 4000,
        duration_s: 0.2,
        ..Default::default()
    };
    (0..n).map(|i| make_mixture(50 + i as u64, &mix).unwrap().into()).collect()
}

/// Replays the recorded epoch losses through the stated rules: halve the
/// rate after 3 epochs without a new best training loss, stop after 15
/// epochs without a new best validation loss.
#[test]
fn history_follows_schedule_rules() {
    let d = data(2);
    let cfg = TrainConfig {
        lr0: 2e-3,
        batch_size: 1,
        max_epochs: 40,
        early_stop_patience: 4,
        ..Default::default()
    };
    let out = train_loop(Model::<f32>::new(small_td(), 0).unwrap(), &d, &d, &cfg, |_| {}).unwrap();
    let h = &out.history;

    let (mut lr, mut best, mut stale) = (cfg.lr0, f64::INFINITY, 0);
    for r in &h[1..] {
        assert_eq!(r.lr, lr, "epoch {}", r.epoch);
        if r.train_loss < best {
            best = r.train_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale == 3 {
                lr *= 0.5;
                stale = 0;
            }
        }
    }

    let mut best_val = h[0].val_loss;
    let mut since = 0;
    for r in &h[1..] {
        if r.val_loss < best_val {
            best_val = r.val_loss;
            since = 0;
            assert!(r.best);
        } else {
            since += 1;
            assert!(!r.best);
        }
    }
    let last = h.last().unwrap().epoch;
    assert!(since == cfg.early_stop_patience || last == cfg.max_epochs, "stopped at {last} after {since} stale epochs");
    assert_eq!(out.meta.best_val_loss, Some(best_val));
    assert_eq!(h[out.best_epoch].val_loss, best_val);
}

#[test]
fn batch_gradient_is_mean_of_utterance_gradients() {
    let d = data(3);
    let base = Model::<f64>::new(small_td(), 1).unwrap();
    let obj = Objective::path(PathSelector::Online);

    let mut all = base.clone();
    batch_gradients(&mut all, &d.iter().collect::<Vec<_>>(), obj).unwrap();
    let singles: Vec<_> = d
        .iter()
        .map(|u| {
            let mut m = base.clone();
            batch_gradients(&mut m, &[u], obj).unwrap();
            gradient_snapshot(&m)
        })
        .collect();
    for (i, (name, g)) in gradient_snapshot(&all).iter().enumerate() {
        for k in 0..g.len() {
            let mean = singles.iter().map(|s| s[i].1.data()[k]).sum::<f64>() / 3.0;
            assert!((g.data()[k] - mean).abs() <= 1e-12 * mean.abs().max(1e-3), "{name}[{k}]");
        }
    }
}

#[test]
fn disk_pipeline_trains_and_restores() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        mix: MixConfig {
            sample_rate: 4000,
            duration_s: 0.2,
            ..Default::default()
        },
        n_train: 3,
        n_val: 1,
        n_test: 1,
        seed: 9,
        ..Default::default()
    };
    build_dataset(&cfg, tmp.path()).unwrap();
    let train = load_split(tmp.path(), Split::Train).unwrap();
    let val = load_split(tmp.path(), Split::Val).unwrap();
    assert_eq!((train.len(), val.len()), (3, 1));

    let tc = TrainConfig {
        max_epochs: 2,
        batch_size: 2,
        ..Default::default()
    };
    let out = train_loop(Model::<f32>::new(small_td(), 2).unwrap(), &train, &val, &tc, |_| {}).unwrap();
    let ckpt = tmp.path().join("ckpt");
    save_checkpoint(&out.best, &out.meta, &ckpt).unwrap();
    let (restored, manifest) = load_checkpoint::<f32>(&ckpt).unwrap();
    assert_eq!(manifest.meta, out.meta);
    let test = load_split(tmp.path(), Split::Test).unwrap();
    let a = evaluate(&out.best, &test, PathSelector::Online).unwrap();
    let b = evaluate(&restored, &test, PathSelector::Online).unwrap();
    assert_eq!(a, b);
}
