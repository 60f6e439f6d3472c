//! Layered configuration: command-line flags > environment > TOML file > defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use soilcopilot_core::coherence::DEFAULT_MAX_BASELINE_M;
use soilcopilot_core::tillage::{
    DetectionParams, DEFAULT_BSI_THRESHOLD, DEFAULT_CHANGE_THRESHOLD, DEFAULT_MIN_REGION_DIM,
};
use thiserror::Error;

use crate::copilot::agent::DEFAULT_MAX_TOOL_CALLS;
use crate::copilot::HttpBackendConfig;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_BIND: &str = "127.0.0.1";
pub const DEFAULT_DATA_DIR: &str = "data";
pub const DEFAULT_TIMEOUT_S: f64 = 60.0;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_MODEL: &str = "gpt-4-turbo";
pub const CONFIG_ENV: &str = "SOILCOPILOT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

/// Every setting as an optional override; one instance per layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub data_dir: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub bsi_threshold: Option<f64>,
    pub change_threshold: Option<f64>,
    pub max_baseline_m: Option<f64>,
    pub min_region_dim: Option<usize>,
    pub port: Option<u16>,
    pub bind: Option<String>,
    pub max_tool_calls: Option<usize>,
    #[serde(default)]
    pub backend: BackendLayer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendLayer {
    pub endpoint_url: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_s: Option<f64>,
    pub max_retries: Option<u32>,
}

macro_rules! overlay_fields {
    ($low:expr, $high:expr, $($f:ident),*) => {
        $( if $high.$f.is_some() { $low.$f = $high.$f.clone(); } )*
    };
}

impl ConfigLayer {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |message: String| ConfigError::File { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        toml::from_str(&text).map_err(|e| file_err(e.to_string()))
    }

    /// Reads the documented environment variables through `get`.
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        fn parse<T: std::str::FromStr>(key: &'static str, v: Option<String>) -> Result<Option<T>, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<T>().map_err(|e| ConfigError::Invalid { key, message: e.to_string() }))
                .transpose()
        }
        let non_empty = |k: &str| get(k).filter(|s| !s.trim().is_empty());
        Ok(Self {
            data_dir: non_empty("SOILCOPILOT_DATA_DIR").map(PathBuf::from),
            corpus_dir: non_empty("SOILCOPILOT_CORPUS_DIR").map(PathBuf::from),
            bsi_threshold: parse("SOILCOPILOT_BSI_THRESHOLD", get("SOILCOPILOT_BSI_THRESHOLD"))?,
            change_threshold: parse("SOILCOPILOT_CHANGE_THRESHOLD", get("SOILCOPILOT_CHANGE_THRESHOLD"))?,
            max_baseline_m: parse("SOILCOPILOT_MAX_BASELINE_M", get("SOILCOPILOT_MAX_BASELINE_M"))?,
            min_region_dim: parse("SOILCOPILOT_MIN_REGION_DIM", get("SOILCOPILOT_MIN_REGION_DIM"))?,
            port: parse("SOILCOPILOT_PORT", get("SOILCOPILOT_PORT"))?,
            bind: non_empty("SOILCOPILOT_BIND"),
            max_tool_calls: parse("SOILCOPILOT_MAX_TOOL_CALLS", get("SOILCOPILOT_MAX_TOOL_CALLS"))?,
            backend: BackendLayer {
                endpoint_url: non_empty("CHAT_ENDPOINT_URL"),
                api_key: non_empty("CHAT_API_KEY"),
                model: non_empty("CHAT_MODEL"),
                timeout_s: parse("CHAT_TIMEOUT_S", get("CHAT_TIMEOUT_S"))?,
                max_retries: parse("CHAT_MAX_RETRIES", get("CHAT_MAX_RETRIES"))?,
            },
        })
    }

    /// `self` with every field set in `higher` replaced.
    pub fn overlay(mut self, higher: &ConfigLayer) -> Self {
        overlay_fields!(
            self,
            higher,
            data_dir,
            corpus_dir,
            bsi_threshold,
            change_threshold,
            max_baseline_m,
            min_region_dim,
            port,
            bind,
            max_tool_calls
        );
        overlay_fields!(self.backend, higher.backend, endpoint_url, api_key, model, timeout_s, max_retries);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSettings {
    pub endpoint_url: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
}

impl BackendSettings {
    /// Remote backend settings, or `None` in mock-only mode.
    pub fn http_config(&self) -> Option<HttpBackendConfig> {
        let url = self.endpoint_url.clone()?;
        Some(HttpBackendConfig {
            api_key: self.api_key.clone(),
            model: self.model.clone(),
            timeout: Duration::from_secs_f64(self.timeout_s),
            max_retries: self.max_retries,
            ..HttpBackendConfig::new(url)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
    pub detection: DetectionParams,
    pub port: u16,
    pub bind: String,
    pub max_tool_calls: usize,
    pub backend: BackendSettings,
}

impl CliConfig {
    /// Applies `layers` lowest-precedence first over the defaults and validates.
    pub fn resolve(layers: &[ConfigLayer]) -> Result<Self, ConfigError> {
        let merged = layers.iter().fold(ConfigLayer::default(), |acc, l| acc.overlay(l));
        let detection = DetectionParams {
            bsi_threshold: merged.bsi_threshold.unwrap_or(DEFAULT_BSI_THRESHOLD),
            change_threshold: merged.change_threshold.unwrap_or(DEFAULT_CHANGE_THRESHOLD),
            max_baseline_m: merged.max_baseline_m.unwrap_or(DEFAULT_MAX_BASELINE_M),
            min_region_dim: merged.min_region_dim.unwrap_or(DEFAULT_MIN_REGION_DIM),
            ..DetectionParams::default()
        };
        let cfg = Self {
            data_dir: merged.data_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            corpus_dir: merged.corpus_dir,
            detection,
            port: merged.port.unwrap_or(DEFAULT_PORT),
            bind: merged.bind.unwrap_or_else(|| DEFAULT_BIND.to_string()),
            max_tool_calls: merged.max_tool_calls.unwrap_or(DEFAULT_MAX_TOOL_CALLS),
            backend: BackendSettings {
                endpoint_url: merged.backend.endpoint_url,
                api_key: merged.backend.api_key,
                model: merged.backend.model.unwrap_or_else(|| DEFAULT_MODEL.to_string()),
                timeout_s: merged.backend.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S),
                max_retries: merged.backend.max_retries.unwrap_or(DEFAULT_MAX_RETRIES),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, message: &str| Err(ConfigError::Invalid { key, message: message.to_string() });
        let d = &self.detection;
        if !(-1.0..=1.0).contains(&d.bsi_threshold) {
            return invalid("bsi_threshold", "must lie in [-1, 1]");
        }
        if !(0.0..=1.0).contains(&d.change_threshold) {
            return invalid("change_threshold", "must lie in [0, 1]");
        }
        if !(d.max_baseline_m.is_finite() && d.max_baseline_m > 0.0) {
            return invalid("max_baseline_m", "must be positive");
        }
        if d.min_region_dim == 0 {
            return invalid("min_region_dim", "must be at least 1");
        }
        if self.max_tool_calls == 0 {
            return invalid("max_tool_calls", "must be at least 1");
        }
        if !(self.backend.timeout_s.is_finite() && self.backend.timeout_s > 0.0) {
            return invalid("timeout_s", "must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults() {
        let c = CliConfig::resolve(&[]).unwrap();
        assert_eq!(c.detection.bsi_threshold, 0.06);
        assert_eq!(c.detection.change_threshold, 0.3);
        assert_eq!(c.detection.max_baseline_m, 100.0);
        assert_eq!(c.detection.min_region_dim, 3);
        assert_eq!(c.max_tool_calls, 8);
        assert_eq!(c.backend.timeout_s, 60.0);
        assert!(c.backend.http_config().is_none());
    }

    #[test]
    fn precedence() {
        let file: ConfigLayer = toml::from_str("port = 1\nbsi_threshold = 0.1\n[backend]\nmodel = \"file\"\n").unwrap();
        let env_map: HashMap<&str, &str> = [("SOILCOPILOT_PORT", "2"), ("CHAT_MODEL", "env")].into();
        let env = ConfigLayer::from_env(|k| env_map.get(k).map(|v| v.to_string())).unwrap();
        let flags = ConfigLayer { port: Some(3), ..ConfigLayer::default() };
        let c = CliConfig::resolve(&[file.clone(), env.clone()]).unwrap();
        assert_eq!((c.port, c.detection.bsi_threshold, c.backend.model.as_str()), (2, 0.1, "env"));
        let c = CliConfig::resolve(&[file, env, flags]).unwrap();
        assert_eq!(c.port, 3);
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = ConfigLayer { change_threshold: Some(1.5), ..ConfigLayer::default() };
        assert!(CliConfig::resolve(&[bad]).is_err());
        let bad_env = ConfigLayer::from_env(|k| (k == "CHAT_TIMEOUT_S").then(|| "soon".to_string()));
        assert!(bad_env.is_err());
    }
}
