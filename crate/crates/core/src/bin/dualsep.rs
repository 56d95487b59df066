use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualsep::config::{ModelKind, Preset, RunConfig};
use dualsep::datagen::{build_dataset, load_split, read_manifest, wav_read, wav_write, Split, WavFormat, MANIFEST_FILE};
use dualsep::dualpath::{PathSelector, Scheme};
use dualsep::layers::NormKind;
use dualsep::metrics::evaluate;
use dualsep::models::{init_from_offline, load_checkpoint, save_checkpoint, Model};
use dualsep::selftest::{run_selftest, SelftestOptions};
use dualsep::training::{evaluate_loss, train_loop, write_history, Objective};
use dualsep::{Error, Result};

#[derive(Parser)]
#[command(name = "dualsep", version, about = "Dual-mode recurrent speech separation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-speaker dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Train a model under one of the training strategies.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Initialize from an offline-trained checkpoint.
        #[arg(long)]
        init_from: Option<PathBuf>,
        /// Train on the sum of online and offline losses.
        #[arg(long)]
        multitask: bool,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        path: Option<PathSelector>,
        /// Report file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate one mixture file.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        path: Option<PathSelector>,
    },
    /// Run the built-in correctness suites.
    Selftest {
        /// Corrupt a backward pass; gradient checks must then fail.
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    reverb: bool,
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    pcm16: bool,
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    path: Option<PathSelector>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long, value_parser = parse_norm)]
    enc_norm: Option<NormKind>,
    #[arg(long, value_parser = parse_norm)]
    rnn_norm: Option<NormKind>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

fn parse_norm(s: &str) -> std::result::Result<NormKind, String> {
    match s {
        "gln" => Ok(NormKind::Gln),
        "cln" => Ok(NormKind::Cln),
        _ => Err(format!("expected gln or cln, got {s:?}")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn base_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn data_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| Error::Config("no dataset directory given (--data or data_dir)".into()))
}

fn cmd_synth(mut cfg: RunConfig, out: PathBuf, f: DataFlags) -> Result<()> {
    let d = &mut cfg.data;
    set(&mut d.n_train, f.n_train);
    set(&mut d.n_val, f.n_val);
    set(&mut d.n_test, f.n_test);
    set(&mut d.seed, f.seed);
    set(&mut d.mix.duration_s, f.duration);
    set(&mut d.mix.sample_rate, f.sample_rate);
    d.mix.reverb |= f.reverb;
    d.mix.noise &= !f.no_noise;
    if f.pcm16 {
        d.format = WavFormat::Pcm16;
    }
    cfg.data_dir = Some(out.clone());
    let entries = build_dataset(&cfg.data, &out)?;
    cfg.echo_into(&out)?;
    println!("wrote {} utterances to {}", entries.len(), out.display());
    Ok(())
}

fn check_sample_rate(data: &Path, model: &Model<f32>) -> Result<()> {
    let entries = read_manifest(&data.join(MANIFEST_FILE))?;
    let want = model.config.sample_rate();
    if let Some(e) = entries.iter().find(|e| e.sample_rate != want) {
        return Err(Error::Config(format!(
            "dataset {} is at {} Hz but the model runs at {want} Hz",
            data.display(),
            e.sample_rate
        )));
    }
    Ok(())
}

fn cmd_train(
    mut cfg: RunConfig,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    init_from: Option<PathBuf>,
    multitask: bool,
    m: ModelFlags,
    t: TrainFlags,
) -> Result<()> {
    set(&mut cfg.model, m.model);
    set(&mut cfg.scheme, m.scheme);
    set(&mut cfg.path, m.path);
    set(&mut cfg.preset, m.preset);
    cfg.enc_norm = m.enc_norm.or(cfg.enc_norm);
    cfg.rnn_norm = m.rnn_norm.or(cfg.rnn_norm);
    set(&mut cfg.seed, t.seed);
    set(&mut cfg.train.max_epochs, t.epochs);
    cfg.train.max_steps = t.max_steps.or(cfg.train.max_steps);
    set(&mut cfg.train.lr0, t.lr);
    set(&mut cfg.train.batch_size, t.batch_size);
    cfg.multitask |= multitask;
    cfg.init_from = init_from.or(cfg.init_from);
    cfg.data_dir = Some(data_dir(&cfg, data)?);
    cfg.out_dir = out.or(cfg.out_dir);
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory given (--out or out_dir)".into()))?;
    let data = cfg.data_dir.clone().expect("set above");
    let model_cfg = cfg.model_config();
    cfg.validate()?;
    let tc = cfg.train_config();

    let train = load_split(&data, Split::Train)?;
    let val = load_split(&data, Split::Val)?;
    let model = match &cfg.init_from {
        Some(src) => {
            let (pre, _) = load_checkpoint::<f32>(src)?;
            let model = init_from_offline(&pre, &model_cfg, cfg.seed)?;
            let off = Objective::path(PathSelector::Offline);
            let a = evaluate_loss(&pre, &val, off)?.total;
            let b = evaluate_loss(&model, &val, off)?.total;
            println!("init check: offline val loss pretrained {a:.6} dB, initialized {b:.6} dB");
            model
        }
        None => Model::new(model_cfg, cfg.seed)?,
    };
    check_sample_rate(&data, &model)?;
    cfg.echo_into(&out)?;
    println!(
        "training {} ({} params, {}) on {} utterances",
        cfg.model,
        model.num_params(),
        tc.strategy.as_str(),
        train.len()
    );
    let outcome = train_loop(model, &train, &val, &tc, |r| {
        let mut line = format!(
            "epoch {:4} steps {:6} lr {:.2e} train {:8.3} val {:8.3}",
            r.epoch, r.steps, r.lr, r.train_loss, r.val_loss
        );
        for (name, v) in [("offline", r.train.offline), ("online", r.train.online)] {
            if let Some(v) = v {
                line.push_str(&format!(" {name} {v:8.3}"));
            }
        }
        if r.best {
            line.push_str(" *");
        }
        println!("{line}");
    })?;
    write_history(&out.join("history.jsonl"), &outcome.history)?;
    save_checkpoint(&outcome.best, &outcome.meta, &out.join("checkpoint"))?;
    println!(
        "best epoch {} (val loss {:.3} dB), checkpoint at {}",
        outcome.best_epoch,
        outcome.meta.best_val_loss.unwrap_or(f64::NAN),
        out.join("checkpoint").display()
    );
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| Error::Parse {
        what: "split",
        detail: format!("expected train, val or test, got {s:?}"),
    })
}

fn default_path(model: &Model<f32>) -> PathSelector {
    if model.scheme().has_online_path() {
        PathSelector::Online
    } else {
        PathSelector::Offline
    }
}

fn cmd_eval(
    mut cfg: RunConfig,
    checkpoint: PathBuf,
    data: Option<PathBuf>,
    split: String,
    path: Option<PathSelector>,
    out: PathBuf,
) -> Result<()> {
    let split = parse_split(&split)?;
    let data = data_dir(&cfg, data)?;
    let (model, _) = load_checkpoint::<f32>(&checkpoint)?;
    let path = path.unwrap_or_else(|| default_path(&model));
    model.check_path(path)?;
    check_sample_rate(&data, &model)?;
    let utts = load_split(&data, split)?;
    let report = evaluate(&model, &utts, path)?;
    cfg.path = path;
    cfg.data_dir = Some(data);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        cfg.echo_into(dir)?;
    }
    report.write(&out)?;
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_infer(mut cfg: RunConfig, checkpoint: PathBuf, input: PathBuf, out: PathBuf, path: Option<PathSelector>) -> Result<()> {
    let (model, _) = load_checkpoint::<f32>(&checkpoint)?;
    let path = path.unwrap_or_else(|| default_path(&model));
    model.check_path(path)?;
    let (mix, sr) = wav_read(&input)?;
    if sr != model.config.sample_rate() {
        return Err(Error::Config(format!(
            "{} is at {sr} Hz but the model runs at {} Hz",
            input.display(),
            model.config.sample_rate()
        )));
    }
    let ests = model.infer(&mix, path)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for (i, e) in ests.iter().enumerate() {
        let p = out.join(format!("s{}.wav", i + 1));
        wav_write(&p, e, sr, WavFormat::Float32)?;
        println!("wrote {}", p.display());
    }
    cfg.path = path;
    cfg.echo_into(&out)
}

fn cmd_selftest(inject_fault: bool) -> ExitCode {
    let summary = run_selftest(SelftestOptions { inject_fault }, |c| println!("{}", c.line()));
    println!(
        "{} checks, {} failed, {:.1} s",
        summary.checks.len(),
        summary.failures(),
        summary.seconds
    );
    if summary.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = || base_config(cli.config.as_deref());
    match cli.command {
        Command::Synth { out, data } => cmd_synth(cfg()?, out, data)?,
        Command::Train {
            data,
            out,
            init_from,
            multitask,
            model,
            train,
        } => cmd_train(cfg()?, data, out, init_from, multitask, model, train)?,
        Command::Eval {
            checkpoint,
            data,
            split,
            path,
            out,
        } => cmd_eval(cfg()?, checkpoint, data, split, path, out)?,
        Command::Infer {
            checkpoint,
            input,
            out,
            path,
        } => cmd_infer(cfg()?, checkpoint, input, out, path)?,
        Command::Selftest { inject_fault } => return Ok(cmd_selftest(inject_fault)),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NoOnlinePath(_) = e {
                eprintln!("hint: standard-scheme checkpoints only support --path offline");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
