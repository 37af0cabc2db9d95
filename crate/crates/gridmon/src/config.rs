use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

/// `serve` configuration (TOML). Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_ingest")]
    pub ingest_listen: SocketAddr,
    #[serde(default = "default_http")]
    pub http_listen: SocketAddr,
    #[serde(default = "default_data")]
    pub data_dir: PathBuf,
    #[serde(default = "default_wal")]
    pub wal_dir: PathBuf,
    pub points_file: PathBuf,
    pub keys_file: PathBuf,
    pub tokens_file: PathBuf,
    #[serde(default = "default_hot_window")]
    pub hot_window_hours: u64,
    /// Whole segments older than this are deleted; unset keeps everything.
    #[serde(default)]
    pub retention_days: Option<u32>,
    #[serde(default = "default_grace")]
    pub rollup_grace_s: u64,
    #[serde(default = "default_rollup_interval")]
    pub rollup_interval_s: u64,
    #[serde(default = "default_demote_interval")]
    pub demote_interval_s: u64,
    /// CSV files dropped here are imported like `POST /api/v1/import/bulk`.
    #[serde(default)]
    pub watch_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub fsync: bool,
}

fn default_ingest() -> SocketAddr {
    ([127, 0, 0, 1], gridmon_ingest::DEFAULT_INGEST_PORT).into()
}

fn default_http() -> SocketAddr {
    ([127, 0, 0, 1], 8080).into()
}

fn default_data() -> PathBuf {
    "data".into()
}

fn default_wal() -> PathBuf {
    "wal".into()
}

fn default_hot_window() -> u64 {
    48
}

fn default_grace() -> u64 {
    30
}

fn default_rollup_interval() -> u64 {
    10
}

fn default_demote_interval() -> u64 {
    600
}

fn default_true() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(&'static str),
}

impl Config {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c: Config = toml::from_str(text)?;
        for p in [
            &mut c.data_dir,
            &mut c.wal_dir,
            &mut c.points_file,
            &mut c.keys_file,
            &mut c.tokens_file,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(w) = &mut c.watch_dir {
            if w.is_relative() {
                *w = base.join(&*w);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.hot_window_hours == 0 {
            return Err(ConfigError::Invalid("hot_window_hours must be at least 1"));
        }
        if self.retention_days == Some(0) {
            return Err(ConfigError::Invalid("retention_days must be at least 1"));
        }
        if self.rollup_interval_s == 0 || self.demote_interval_s == 0 {
            return Err(ConfigError::Invalid("maintenance intervals must be positive"));
        }
        Ok(())
    }
}
