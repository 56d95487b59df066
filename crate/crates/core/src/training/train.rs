use std::io::Write;
use std::path::Path;

use numcore::{derive_seed, Graph, ParamId, Real, Rng, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{clip_gradients, Adam, EarlyStopper, PlateauSchedule};
use super::pit::pit_neg_snr;
use crate::datagen::Utterance;
use crate::dualpath::{PathSelector, Scheme};
use crate::error::{Error, Result};
use crate::models::{Model, TrainingMeta};

/// Which paths are trained and how the model is initialized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    FromScratchOnline,
    FromScratchOffline,
    /// Online path, starting from a pretrained offline model.
    InitFromOffline,
    /// Weighted sum of both path losses.
    Multitask,
    InitPlusMultitask,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FromScratchOnline => "from_scratch_online",
            Strategy::FromScratchOffline => "from_scratch_offline",
            Strategy::InitFromOffline => "init_from_offline",
            Strategy::Multitask => "multitask",
            Strategy::InitPlusMultitask => "init_plus_multitask",
        }
    }

    pub fn uses_init(self) -> bool {
        matches!(self, Strategy::InitFromOffline | Strategy::InitPlusMultitask)
    }

    pub fn is_multitask(self) -> bool {
        matches!(self, Strategy::Multitask | Strategy::InitPlusMultitask)
    }

    /// Path whose metrics are reported for this strategy.
    pub fn eval_path(self) -> PathSelector {
        match self {
            Strategy::FromScratchOffline => PathSelector::Offline,
            _ => PathSelector::Online,
        }
    }

    pub fn objective(self, weights: MultitaskWeights) -> Objective {
        if self.is_multitask() {
            Objective {
                offline: weights.offline,
                online: weights.online,
            }
        } else if self == Strategy::FromScratchOffline {
            Objective::path(PathSelector::Offline)
        } else {
            Objective::path(PathSelector::Online)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultitaskWeights {
    pub offline: f64,
    pub online: f64,
}

impl Default for MultitaskWeights {
    fn default() -> Self {
        Self {
            offline: 1.0,
            online: 1.0,
        }
    }
}

/// Per-path weights of the training loss. A zero weight skips that path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub offline: f64,
    pub online: f64,
}

impl Objective {
    pub fn path(path: PathSelector) -> Self {
        match path {
            PathSelector::Offline => Self {
                offline: 1.0,
                online: 0.0,
            },
            PathSelector::Online => Self {
                offline: 0.0,
                online: 1.0,
            },
        }
    }

    fn terms(self) -> impl Iterator<Item = (PathSelector, f64)> {
        [(PathSelector::Offline, self.offline), (PathSelector::Online, self.online)]
            .into_iter()
            .filter(|(_, w)| *w != 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_patience_epochs: usize,
    pub early_stop_patience: usize,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stops after this many optimizer steps when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Chosen by the caller, never read from a file.
    #[serde(skip)]
    pub strategy: Strategy,
    pub multitask_weights: MultitaskWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            lr_decay: 0.5,
            decay_patience_epochs: 3,
            early_stop_patience: 15,
            clip_norm: 5.0,
            batch_size: 4,
            max_epochs: 100,
            max_steps: None,
            seed: 0,
            strategy: Strategy::FromScratchOnline,
            multitask_weights: MultitaskWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.multitask_weights;
        let bad = if !(self.lr0 > 0.0) {
            Some("lr0 must be positive")
        } else if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            Some("lr_decay must lie in (0, 1)")
        } else if self.decay_patience_epochs == 0 || self.early_stop_patience == 0 {
            Some("patience values must be at least 1")
        } else if !(self.clip_norm > 0.0) {
            Some("clip_norm must be positive")
        } else if self.batch_size == 0 {
            Some("batch_size must be at least 1")
        } else if !(w.offline >= 0.0 && w.online >= 0.0) || w.offline + w.online == 0.0 {
            Some("multitask weights must be non-negative and not both zero")
        } else {
            None
        };
        match bad {
            Some(msg) => Err(Error::Config(msg.into())),
            None => Ok(()),
        }
    }
}

/// Mean losses (dB) of a batch or dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathLosses {
    pub total: f64,
    pub offline: Option<f64>,
    pub online: Option<f64>,
}

impl PathLosses {
    fn mean(items: &[PathLosses]) -> PathLosses {
        let n = items.len().max(1) as f64;
        let opt = |f: fn(&PathLosses) -> Option<f64>| {
            items.iter().map(f).try_fold(0.0, |s, v| v.map(|v| s + v)).map(|s| s / n)
        };
        PathLosses {
            total: items.iter().map(|p| p.total).sum::<f64>() / n,
            offline: opt(|p| p.offline),
            online: opt(|p| p.online),
        }
    }
}

fn to_real<T: Real>(x: &[f32]) -> Vec<T> {
    x.iter().map(|v| T::lit(*v as f64)).collect()
}

fn check_objective<T: Real>(model: &Model<T>, objective: Objective) -> Result<()> {
    if objective.online != 0.0 {
        model.check_path(PathSelector::Online)?;
    }
    Ok(())
}

/// Loss of one utterance on a graph bound to `model.params`.
fn utterance_loss<T: Real>(
    g: &mut Graph<T>,
    model: &Model<T>,
    u: &Utterance,
    objective: Objective,
) -> Result<(numcore::Var, PathLosses)> {
    let mix = to_real::<T>(&u.mixture);
    let refs: Vec<Vec<T>> = u.sources.iter().map(|s| to_real(s)).collect();
    let mut total = None;
    let mut losses = PathLosses::default();
    for (path, w) in objective.terms() {
        let outs = model.separate(g, &mix, path)?;
        let (l, _) = pit_neg_snr(g, &outs, &refs)?;
        let v = g.scalar(l).as_f64();
        match path {
            PathSelector::Offline => losses.offline = Some(v),
            PathSelector::Online => losses.online = Some(v),
        }
        let wl = g.scale(l, T::lit(w))?;
        total = Some(match total {
            None => wl,
            Some(t) => g.add(t, wl)?,
        });
    }
    let total = total.ok_or_else(|| Error::Config("objective has no active path".into()))?;
    losses.total = g.scalar(total).as_f64();
    Ok((total, losses))
}

/// Mean objective over `data` without gradients.
pub fn evaluate_loss<T: Real>(model: &Model<T>, data: &[Utterance], objective: Objective) -> Result<PathLosses> {
    check_objective(model, objective)?;
    let items = data
        .par_iter()
        .map(|u| {
            let mut g = Graph::inference(&model.params);
            utterance_loss(&mut g, model, u, objective).map(|(_, l)| l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathLosses::mean(&items))
}

type Grads<T> = Vec<(ParamId, Vec<T>)>;

/// Replaces the gradients of `model.params` with the batch-mean gradient of
/// the objective. Utterances run on separate tapes; their gradients are
/// summed in batch order.
pub fn batch_gradients<T: Real>(model: &mut Model<T>, batch: &[&Utterance], objective: Objective) -> Result<PathLosses> {
    check_objective(model, objective)?;
    let results = batch
        .par_iter()
        .map(|u| -> Result<(PathLosses, Grads<T>)> {
            let mut g = Graph::with_params(&model.params);
            let (loss, l) = utterance_loss(&mut g, model, u, objective)?;
            g.backward(loss)?;
            let grads = g.param_grads().into_iter().map(|(id, gr)| (id, gr.to_vec())).collect();
            Ok((l, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<_> = model.params.ids().collect();
    for id in &ids {
        model.params.get_mut(*id).clear_grad();
    }
    let mut losses = Vec::with_capacity(results.len());
    for (l, grads) in &results {
        losses.push(*l);
        model
            .params
            .accumulate_grads(grads.iter().map(|(id, g)| (*id, g.as_slice())))?;
    }
    let inv = T::lit(1.0 / batch.len().max(1) as f64);
    for id in ids {
        if let Some(g) = model.params.get_mut(id).grad_mut() {
            g.iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok(PathLosses::mean(&losses))
}

/// Gradients of `w_off * offline + w_on * online` in one pass. Returns the
/// mean offline and online losses.
pub fn multitask_step<T: Real>(
    model: &mut Model<T>,
    batch: &[&Utterance],
    weights: MultitaskWeights,
) -> Result<(f64, f64)> {
    if model.scheme() == Scheme::Standard {
        return Err(Error::NoOnlinePath("standard-scheme model"));
    }
    let objective = Objective {
        offline: weights.offline,
        online: weights.online,
    };
    let l = batch_gradients(model, batch, objective)?;
    Ok((l.offline.unwrap_or(f64::NAN), l.online.unwrap_or(f64::NAN)))
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train: PathLosses,
    pub val: PathLosses,
    pub best: bool,
}

pub struct TrainOutcome<T> {
    pub best: Model<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
    pub meta: TrainingMeta,
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in history {
        let line = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(numcore::Error::NonFinite { op }) => Error::Diverged {
            epoch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Trains with Adam, gradient clipping, learning-rate halving on stagnant
/// training loss and early stopping on stagnant validation loss.
///
/// Epoch 0 is recorded before any update. The returned model is the one
/// with the lowest validation loss.
pub fn train_loop<T: Real>(
    mut model: Model<T>,
    train: &[Utterance],
    val: &[Utterance],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let objective = cfg.strategy.objective(cfg.multitask_weights);
    check_objective(&model, objective)?;

    let mut adam = Adam::default();
    let mut schedule = PlateauSchedule::new(cfg.lr0, cfg.lr_decay, cfg.decay_patience_epochs);
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut history = Vec::new();

    let train0 = evaluate_loss(&model, train, objective).map_err(diverged(0))?;
    let val0 = evaluate_loss(&model, val, objective).map_err(diverged(0))?;
    stopper.observe(val0.total);
    let rec = EpochRecord {
        epoch: 0,
        steps: 0,
        lr: cfg.lr0,
        train_loss: train0.total,
        val_loss: val0.total,
        train: train0,
        val: val0,
        best: true,
    };
    on_epoch(&rec);
    history.push(rec);
    let mut best = (model.clone(), 0usize, train0.total);

    let mut steps = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr;
        Rng::new(derive_seed(cfg.seed, epoch as u64)).shuffle(&mut order);
        let mut batch_losses = Vec::new();
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Utterance> = idx.iter().map(|&i| &train[i]).collect();
            let l = batch_gradients(&mut model, &batch, objective).map_err(diverged(epoch))?;
            if !l.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("loss {}", l.total),
                });
            }
            batch_losses.push(l);
            clip_gradients(&mut model.params, cfg.clip_norm);
            adam.step(&mut model.params, lr);
            steps += 1;
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
        }
        let tr = PathLosses::mean(&batch_losses);
        let va = evaluate_loss(&model, val, objective).map_err(diverged(epoch))?;
        schedule.observe(tr.total);
        let (improved, stop) = stopper.observe(va.total);
        if improved {
            best = (model.clone(), epoch, tr.total);
        }
        let rec = EpochRecord {
            epoch,
            steps,
            lr,
            train_loss: tr.total,
            val_loss: va.total,
            train: tr,
            val: va,
            best: improved,
        };
        on_epoch(&rec);
        history.push(rec);
        if stop || cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }
    let (best_model, best_epoch, best_train) = best;
    let meta = TrainingMeta {
        epoch: best_epoch,
        best_train_loss: Some(best_train),
        best_val_loss: Some(stopper.best()),
        strategy: Some(cfg.strategy.as_str().to_string()),
        path: Some(cfg.strategy.eval_path()),
    };
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        history,
        steps,
        meta,
    })
}

/// Snapshot of every parameter gradient, in store order.
pub fn gradient_snapshot<T: Real>(model: &Model<T>) -> Vec<(String, Tensor<T>)> {
    model
        .params
        .iter()
        .map(|(_, p)| {
            let g = p.tensor.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![T::zero(); p.tensor.len()]);
            (p.name.clone(), Tensor::new(p.tensor.shape(), g).expect("same shape"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_mixture, MixConfig};
    use crate::models::{ModelConfig, TdConfig};

    fn data(n: usize) -> Vec<Utterance> {
        let cfg = MixConfig {
            sample_rate: 2000,
            duration_s: 0.1,
            overlap: (1.0, 1.0),
            ..Default::default()
        };
        (0..n).map(|i| make_mixture(i as u64, &cfg).unwrap().into()).collect()
    }

    fn model(scheme: Scheme) -> Model<f64> {
        Model::new(
            ModelConfig::Td(TdConfig {
                sample_rate: 2000,
                n_kernels: 4,
                hidden: 3,
                chunk: 6,
                n_blocks: 1,
                scheme,
                ..TdConfig::tiny()
            }),
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_online_weight_equals_offline_training() {
        let d = data(2);
        let batch: Vec<&Utterance> = d.iter().collect();
        let mut a = model(Scheme::Decomposed);
        let mut b = a.clone();
        multitask_step(
            &mut a,
            &batch,
            MultitaskWeights {
                offline: 1.0,
                online: 0.0,
            },
        )
        .unwrap();
        batch_gradients(&mut b, &batch, Objective::path(PathSelector::Offline)).unwrap();
        assert_eq!(gradient_snapshot(&a), gradient_snapshot(&b));
    }

    #[test]
    fn multitask_gradient_is_sum_of_path_gradients() {
        let d = data(2);
        let batch: Vec<&Utterance> = d.iter().collect();
        let mut both = model(Scheme::Reorganized);
        let (mut off, mut on) = (both.clone(), both.clone());
        multitask_step(&mut both, &batch, MultitaskWeights::default()).unwrap();
        batch_gradients(&mut off, &batch, Objective::path(PathSelector::Offline)).unwrap();
        batch_gradients(&mut on, &batch, Objective::path(PathSelector::Online)).unwrap();
        let (gb, go, gn) = (gradient_snapshot(&both), gradient_snapshot(&off), gradient_snapshot(&on));
        for i in 0..gb.len() {
            for k in 0..gb[i].1.len() {
                let sum = go[i].1.data()[k] + gn[i].1.data()[k];
                let v = gb[i].1.data()[k];
                assert!((v - sum).abs() <= 1e-9 * v.abs().max(1e-6), "{} {v} {sum}", gb[i].0);
            }
        }
    }

    #[test]
    fn standard_model_cannot_multitask() {
        let d = data(1);
        let mut m = model(Scheme::Standard);
        assert!(multitask_step(&mut m, &[&d[0]], MultitaskWeights::default()).is_err());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let d = data(3);
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 2,
            lr0: 1e-2,
            ..Default::default()
        };
        let a = train_loop(model(Scheme::Reorganized), &d, &d[..1], &cfg, |_| {}).unwrap();
        let b = train_loop(model(Scheme::Reorganized), &d, &d[..1], &cfg, |_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 3);
        assert_eq!(a.steps, 4);
    }

    #[test]
    fn max_steps_stops_early() {
        let d = data(3);
        let cfg = TrainConfig {
            max_epochs: 10,
            batch_size: 1,
            max_steps: Some(4),
            ..Default::default()
        };
        let out = train_loop(model(Scheme::Decomposed), &d, &d, &cfg, |_| {}).unwrap();
        assert_eq!(out.steps, 4);
        assert_eq!(out.history.last().unwrap().epoch, 2);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            lr_decay: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
