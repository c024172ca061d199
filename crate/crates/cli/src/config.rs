use std::fs;
use std::path::Path;

use gsdkit_core::{Error, Rational, Result};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub patch: Option<u32>,
    pub rows: Option<u32>,
    pub cols: Option<u32>,
}

/// Optional JSON config; command-line flags take precedence over it.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub target_gsd_cm: Option<Rational>,
    #[serde(default)]
    pub grid: GridSection,
    pub pair_resolutions: Option<Vec<u32>>,
    pub workers: Option<usize>,
    pub timeout: Option<u64>,
    pub log_level: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: PipelineConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::InvalidValue("workers must be at least 1".into()));
        }
        if self.timeout == Some(0) {
            return Err(Error::InvalidValue("timeout must be positive".into()));
        }
        if let Some(level) = &self.log_level {
            level.parse::<crate::log::Level>()?;
        }
        Ok(())
    }
}
