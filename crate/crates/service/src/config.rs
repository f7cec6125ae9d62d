use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ServiceError;

/// Default request body cap: 512 MiB.
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_workers() -> usize {
    2
}

fn default_limit() -> usize {
    DEFAULT_MAX_UPLOAD_BYTES
}

fn default_sweep() -> u64 {
    60
}

/// `serve --config` file. Relative paths are taken from the config file's
/// directory. `AREALINK_BIND`, `AREALINK_WORKERS` and `AREALINK_WEBHOOK_URL`
/// override the matching keys.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Task metadata, uploads and result archives.
    pub data_dir: PathBuf,
    pub catalog_dir: PathBuf,
    pub token_file: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_limit")]
    pub max_upload_bytes: usize,
    #[serde(default)]
    pub webhook_url: Option<String>,
    /// Boundary index used for coordinate-keyed cohorts.
    #[serde(default)]
    pub boundary_index: Option<PathBuf>,
    /// Crosswalk manifests for ZCTA and CBSA datasets.
    #[serde(default)]
    pub crosswalks: Vec<PathBuf>,
    #[serde(default = "default_sweep")]
    pub sweep_interval_secs: u64,
}

impl ServiceConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut c: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut c.data_dir);
        rebase(&mut c.catalog_dir);
        rebase(&mut c.token_file);
        if let Some(p) = c.boundary_index.as_mut() {
            rebase(p);
        }
        c.crosswalks.iter_mut().for_each(rebase);
        c.apply_env(|k| std::env::var(k).ok())?;
        if c.workers == 0 {
            return Err(ServiceError::Config("workers must be at least 1".into()));
        }
        if c.sweep_interval_secs == 0 {
            return Err(ServiceError::Config("sweep_interval_secs must be at least 1".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(b) = var("AREALINK_BIND") {
            self.bind = b;
        }
        if let Some(w) = var("AREALINK_WORKERS") {
            self.workers = w.parse().map_err(|_| ServiceError::Config(format!("AREALINK_WORKERS={w:?} is not a count")))?;
        }
        if let Some(u) = var("AREALINK_WEBHOOK_URL") {
            self.webhook_url = (!u.is_empty()).then_some(u);
        }
        Ok(())
    }
}
