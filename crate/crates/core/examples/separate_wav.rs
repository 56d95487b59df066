//! Separates a WAV file with a checkpoint, or with an untrained model when no
//! checkpoint is given.
//!
//! cargo run --example separate_wav -- <mixture.wav> [checkpoint_dir] [online|offline]

use std::path::PathBuf;

use dualsep::datagen::{make_mixture, wav_read, wav_write, MixConfig, WavFormat};
use dualsep::dualpath::PathSelector;
use dualsep::models::{load_checkpoint, Model, ModelConfig, TdConfig};

fn main() -> dualsep::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = std::env::temp_dir().join("dualsep_separate");
    std::fs::create_dir_all(&dir).map_err(|e| dualsep::Error::io(&dir, e))?;
    let input = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            let p = dir.join("mixture.wav");
            let ex = make_mixture(3, &MixConfig::default())?;
            wav_write(&p, &ex.mixture, 8000, WavFormat::Float32)?;
            p
        }
    };
    let model = match args.next() {
        Some(ckpt) => load_checkpoint::<f32>(ckpt.as_ref())?.0,
        None => Model::new(ModelConfig::Td(TdConfig::tiny()), 0)?,
    };
    let path: PathSelector = args.next().map(|s| s.parse()).transpose()?.unwrap_or(PathSelector::Online);

    let (mix, sr) = wav_read(&input)?;
    println!("{}: {} samples at {sr} Hz, {path} path", input.display(), mix.len());
    for (i, est) in model.infer(&mix, path)?.iter().enumerate() {
        let p = dir.join(format!("s{}.wav", i + 1));
        wav_write(&p, est, sr, WavFormat::Float32)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}
