//! Dual-mode recurrent speech separation.
//!
//! One set of parameters serves both a causal (online) and a full-context
//! (offline) execution path. Bidirectional recurrent blocks are either
//! decomposed (the online path keeps only the forward recurrence and gets its
//! own projection) or reorganized (the second recurrence reads the reversed
//! sequence offline and the original sequence online).

pub mod error;
pub mod codec;
pub mod config;
pub mod datagen;
pub mod dualpath;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod selftest;
pub mod training;

pub use error::{Error, Result};
