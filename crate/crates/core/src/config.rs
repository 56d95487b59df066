//! Run configuration shared by the command-line subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::DatasetConfig;
use crate::dualpath::{PathSelector, Scheme};
use crate::error::{Error, Result};
use crate::layers::NormKind;
use crate::models::{FdConfig, ModelConfig, TdConfig};
use crate::training::{Strategy, TrainConfig};

/// File name of the effective configuration written into output directories.
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fd,
    Td,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Desk,
    Full,
}

macro_rules! str_enum {
    ($ty:ident, $what:literal, $($variant:ident => $s:literal),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    _ => Err(Error::Parse { what: $what, detail: format!("unknown value {s:?}") }),
                }
            }
        }
    };
}

str_enum!(ModelKind, "model kind", Fd => "fd", Td => "td");
str_enum!(Preset, "preset", Tiny => "tiny", Desk => "desk", Full => "full");

/// Everything a subcommand needs. Values come from defaults, then an
/// optional TOML file, then command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub scheme: Scheme,
    pub path: PathSelector,
    pub preset: Preset,
    /// Overrides the preset's encoder normalization.
    pub enc_norm: Option<NormKind>,
    /// Overrides the preset's block normalization.
    pub rnn_norm: Option<NormKind>,
    pub seed: u64,
    pub multitask: bool,
    pub init_from: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub data: DatasetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Td,
            scheme: Scheme::Reorganized,
            path: PathSelector::Online,
            preset: Preset::Desk,
            enc_norm: None,
            rnn_norm: None,
            seed: 0,
            multitask: false,
            init_from: None,
            data_dir: None,
            out_dir: None,
            train: TrainConfig::default(),
            data: DatasetConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "run config",
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { what, detail } => Error::Parse {
                what,
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "run config",
            detail: e.to_string(),
        })
    }

    /// Writes the effective configuration to `dir/config.toml`.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_ECHO_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn strategy(&self) -> Strategy {
        match (self.init_from.is_some(), self.multitask, self.path) {
            (true, true, _) => Strategy::InitPlusMultitask,
            (true, false, _) => Strategy::InitFromOffline,
            (false, true, _) => Strategy::Multitask,
            (false, false, PathSelector::Offline) => Strategy::FromScratchOffline,
            (false, false, PathSelector::Online) => Strategy::FromScratchOnline,
        }
    }

    /// Training settings with the strategy and seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            strategy: self.strategy(),
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = match (self.model, self.preset) {
            (ModelKind::Fd, Preset::Tiny) => ModelConfig::Fd(FdConfig::tiny()),
            (ModelKind::Fd, Preset::Desk) => ModelConfig::Fd(FdConfig::desk()),
            (ModelKind::Fd, Preset::Full) => ModelConfig::Fd(FdConfig::full()),
            (ModelKind::Td, Preset::Tiny) => ModelConfig::Td(TdConfig::tiny()),
            (ModelKind::Td, Preset::Desk) => ModelConfig::Td(TdConfig::desk()),
            (ModelKind::Td, Preset::Full) => ModelConfig::Td(TdConfig::full()),
        }
        .with_scheme(self.scheme);
        match &mut cfg {
            ModelConfig::Fd(c) => {
                c.enc_norm = self.enc_norm.unwrap_or(c.enc_norm);
                c.rnn_norm = self.rnn_norm.unwrap_or(c.rnn_norm);
            }
            ModelConfig::Td(c) => {
                c.enc_norm = self.enc_norm.unwrap_or(c.enc_norm);
                c.rnn_norm = self.rnn_norm.unwrap_or(c.rnn_norm);
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model_config();
        model.validate()?;
        self.train_config().validate()?;
        self.data.mix.validate()?;
        if self.data.mix.sample_rate != model.sample_rate() {
            return Err(Error::Config(format!(
                "data sample rate {} Hz does not match the {} preset's {} Hz",
                self.data.mix.sample_rate,
                self.preset,
                model.sample_rate()
            )));
        }
        if self.path == PathSelector::Online && !self.scheme.has_online_path() {
            return Err(Error::NoOnlinePath("standard"));
        }
        let uses_online = self.path == PathSelector::Online || self.multitask;
        let gln = [self.enc_norm, self.rnn_norm].contains(&Some(NormKind::Gln));
        if uses_online && gln {
            return Err(Error::NonCausalNorm("online run with gLN"));
        }
        if self.multitask && !self.scheme.has_online_path() {
            return Err(Error::Config("multitask training needs a decomposed or reorganized scheme".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[train]\nlr = 0.1").is_err());
        assert!(RunConfig::from_toml_str("[train]\nstrategy = \"multitask\"").is_err());
    }

    #[test]
    fn file_values_override_defaults() {
        let c = RunConfig::from_toml_str("model = \"fd\"\nscheme = \"decomposed\"\n[train]\nlr0 = 0.01").unwrap();
        assert_eq!(c.model, ModelKind::Fd);
        assert_eq!(c.train.lr0, 0.01);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert!(matches!(c.model_config(), ModelConfig::Fd(f) if f.scheme == Scheme::Decomposed));
    }

    #[test]
    fn strategy_follows_flags() {
        let mut c = RunConfig::default();
        assert_eq!(c.strategy(), Strategy::FromScratchOnline);
        c.path = PathSelector::Offline;
        assert_eq!(c.strategy(), Strategy::FromScratchOffline);
        c.multitask = true;
        assert_eq!(c.strategy(), Strategy::Multitask);
        c.init_from = Some("ckpt".into());
        assert_eq!(c.train_config().strategy, Strategy::InitPlusMultitask);
    }

    #[test]
    fn inconsistent_configs_fail_validation() {
        let c = RunConfig {
            scheme: Scheme::Standard,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::NoOnlinePath(_))));
        let c = RunConfig {
            preset: Preset::Full,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig {
            enc_norm: Some(NormKind::Gln),
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::NonCausalNorm(_))));
        let c = RunConfig {
            rnn_norm: Some(NormKind::Gln),
            path: PathSelector::Offline,
            ..Default::default()
        };
        c.validate().unwrap();
    }
}
