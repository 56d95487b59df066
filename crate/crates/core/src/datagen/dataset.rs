use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use numcore::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mixture::{make_mixture, MixConfig};
use super::wav::{wav_read, wav_write, WavFormat};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub mix: MixConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    pub format: WavFormat,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mix: MixConfig::default(),
            n_train: 64,
            n_val: 16,
            n_test: 16,
            seed: 0,
            format: WavFormat::Float32,
        }
    }
}

impl DatasetConfig {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }

    /// Seed of example `index` in `split`. Streams never collide across splits.
    pub fn example_seed(&self, split: Split, index: usize) -> u64 {
        derive_seed(self.seed, (split.stream() << 32) | index as u64)
    }
}

/// One line of `manifest.jsonl`; paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub split: Split,
    pub id: String,
    pub mixture: PathBuf,
    pub sources: Vec<PathBuf>,
    pub noise: PathBuf,
    pub sample_rate: u32,
    pub samples: usize,
    pub overlap_ratio: f64,
    pub speaker_snr_db: f64,
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

/// A mixture with its reference sources, ready for training or evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub mixture: Vec<f32>,
    pub sources: Vec<Vec<f32>>,
}

fn write_example(root: &Path, cfg: &DatasetConfig, split: Split, index: usize) -> Result<ManifestEntry> {
    let seed = cfg.example_seed(split, index);
    let ex = make_mixture(seed, &cfg.mix)?;
    let id = format!("{index:05}");
    let rel = PathBuf::from(split.as_str()).join(&id);
    let dir = root.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let sr = cfg.mix.sample_rate;
    let put = |name: &str, x: &[f32]| -> Result<PathBuf> {
        wav_write(&dir.join(name), x, sr, cfg.format)?;
        Ok(rel.join(name))
    };
    Ok(ManifestEntry {
        split,
        id,
        mixture: put("mixture.wav", &ex.mixture)?,
        sources: vec![put("s1.wav", &ex.sources[0])?, put("s2.wav", &ex.sources[1])?],
        noise: put("noise.wav", &ex.noise)?,
        sample_rate: sr,
        samples: ex.mixture.len(),
        overlap_ratio: ex.meta.overlap_ratio,
        speaker_snr_db: ex.meta.speaker_snr_db,
        noise_snr_db: ex.meta.noise_snr_db,
        seed,
    })
}

/// Generates every split under `root` and writes `root/manifest.jsonl`.
pub fn build_dataset(cfg: &DatasetConfig, root: &Path) -> Result<Vec<ManifestEntry>> {
    cfg.mix.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let jobs: Vec<(Split, usize)> = Split::ALL
        .iter()
        .flat_map(|&s| (0..cfg.count(s)).map(move |i| (s, i)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(s, i)| write_example(root, cfg, s, i))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&root.join(MANIFEST_FILE), &entries)?;
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in entries {
        let line = serde_json::to_string(e).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                what: "manifest",
                detail: format!("{} line {}: {e}", path.display(), i + 1),
            })
        })
        .collect()
}

/// Loads the utterances of one split listed in `root/manifest.jsonl`.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<Utterance>> {
    let entries = read_manifest(&root.join(MANIFEST_FILE))?;
    entries
        .iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let (mixture, _) = wav_read(&root.join(&e.mixture))?;
            let sources = e
                .sources
                .iter()
                .map(|p| wav_read(&root.join(p)).map(|(x, _)| x))
                .collect::<Result<Vec<_>>>()?;
            Ok(Utterance { mixture, sources })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetConfig {
        DatasetConfig {
            mix: MixConfig {
                duration_s: 0.1,
                ..Default::default()
            },
            n_train: 2,
            n_val: 1,
            n_test: 0,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn writes_examples_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let entries = build_dataset(&tiny(), dir.path()).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), entries);
        let train = load_split(dir.path(), Split::Train).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0].sources.len(), 2);
        assert!(dir.path().join("train/00001/noise.wav").exists());
    }

    #[test]
    fn same_seed_same_files() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        build_dataset(&tiny(), a.path()).unwrap();
        build_dataset(&tiny(), b.path()).unwrap();
        for f in ["manifest.jsonl", "train/00000/mixture.wav", "val/00000/s2.wav"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn split_seeds_are_disjoint() {
        let c = DatasetConfig::default();
        let mut seeds: Vec<u64> = Split::ALL
            .iter()
            .flat_map(|&s| (0..100).map(move |i| (s, i)))
            .map(|(s, i)| c.example_seed(s, i))
            .collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 300);
    }

    #[test]
    fn overlap_ratios_look_uniform() {
        let cfg = MixConfig {
            duration_s: 0.01,
            ..Default::default()
        };
        let mut counts = [0usize; 10];
        for seed in 0..1000 {
            let m = make_mixture(seed, &cfg).unwrap();
            counts[((m.meta.overlap_ratio * 10.0) as usize).min(9)] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 100.0).powi(2) / 100.0).sum();
        // 99.9th percentile of chi-square with 9 degrees of freedom
        assert!(chi2 < 27.88, "{chi2} {counts:?}");
    }
}
