//! Config-file loading and the flag-over-file-over-default merge.
//!
//! The file is TOML; its keys mirror the flag names one to one. Every
//! section is optional and falls back to the library defaults, so an empty
//! (or absent) file is valid.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use scenemix::augment::AugmentConfig;
use scenemix::chat::ChatBackend;
use scenemix::scene::FilterConfig;
use scenemix::tta::{DEFAULT_DURATION_SECS, DEFAULT_SAMPLE_RATE};

use crate::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TtaKind {
    Fixture,
    Http,
}

/// The `[tta]` section: which noise backend to use and how to call it.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaConfig {
    pub backend: TtaKind,
    pub endpoint: String,
    pub timeout_secs: f64,
    pub resample: bool,
    pub max_in_flight: usize,
    pub duration: f64,
    pub sample_rate: u32,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            backend: TtaKind::Fixture,
            endpoint: String::new(),
            timeout_secs: 60.0,
            resample: true,
            max_in_flight: 2,
            duration: DEFAULT_DURATION_SECS,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Root seed for randomized subcommands; a `--seed` flag overrides it.
    pub seed: Option<u64>,
    pub filter: FilterConfig,
    pub chat: Option<ChatBackend>,
    pub tta: TtaConfig,
    pub augment: AugmentConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?;
        toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(usage)
    }
}
