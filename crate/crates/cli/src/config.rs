//! Operator configuration: flags override environment variables, which
//! override the config file, which overrides built-in defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use pythoness_core::backends::{Backend, HttpBackend, HttpConfig, ScriptedBackend};
use pythoness_core::cache::{Cache, CACHE_DIR_ENV};
use pythoness_core::{Error, Result};
use serde::Deserialize;

pub const CONFIG_ENV: &str = "PYTHONESS_CONFIG";
pub const BACKEND_ENV: &str = "PYTHONESS_BACKEND";
pub const URL_ENV: &str = "PYTHONESS_BACKEND_URL";
pub const MODEL_ENV: &str = "PYTHONESS_MODEL";

/// The config file: one flat TOML table.
///
/// ```toml
/// backend = "http"                 # or "scripted:path/to/script.json"
/// backend_url = "http://localhost:8000/v1"
/// backend_model = "gpt-4o"
/// backend_key_env = "PYTHONESS_API_KEY"
/// require_key = true
/// request_timeout_seconds = 120
/// max_attempts = 5
/// cache_root = ".pythoness_cache"
/// fuzz_seed = 0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub backend: Option<String>,
    pub backend_url: Option<String>,
    pub backend_model: Option<String>,
    pub backend_key_env: Option<String>,
    pub require_key: Option<bool>,
    pub request_timeout_seconds: Option<f64>,
    pub max_attempts: Option<u32>,
    pub cache_root: Option<PathBuf>,
    pub fuzz_seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The file named by the flag, else by `$PYTHONESS_CONFIG`, else none.
    pub fn resolve(flag: Option<&Path>) -> Result<ConfigFile> {
        match flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        {
            Some(p) => Self::load(&p),
            None => Ok(ConfigFile::default()),
        }
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub backend: String,
    pub http: HttpConfig,
    pub cache_root: PathBuf,
    pub fuzz_seed: u64,
}

impl Settings {
    pub fn resolve(file: &ConfigFile, backend_flag: Option<&str>, root_flag: Option<&Path>) -> Result<Settings> {
        let mut http = HttpConfig::default();
        if let Some(url) = env(URL_ENV).or_else(|| file.backend_url.clone()) {
            http.base_url = url;
        }
        if let Some(model) = env(MODEL_ENV).or_else(|| file.backend_model.clone()) {
            http.model = model;
        }
        if let Some(key_env) = &file.backend_key_env {
            http.api_key_env = key_env.clone();
        }
        if let Some(require) = file.require_key {
            http.require_key = require;
        }
        if let Some(secs) = file.request_timeout_seconds {
            if !(secs > 0.0 && secs.is_finite()) {
                return Err(Error::Config("request_timeout_seconds must be positive".into()));
            }
            http.timeout = Duration::from_secs_f64(secs);
        }
        if let Some(n) = file.max_attempts {
            http.max_attempts = n;
        }
        let backend = backend_flag
            .map(str::to_string)
            .or_else(|| env(BACKEND_ENV))
            .or_else(|| file.backend.clone())
            .unwrap_or_else(|| "http".into());
        let cache_root = root_flag
            .map(Path::to_path_buf)
            .or_else(|| env(CACHE_DIR_ENV).map(PathBuf::from))
            .or_else(|| file.cache_root.clone())
            .unwrap_or_else(|| Cache::resolve(None).root().to_path_buf());
        Ok(Settings {
            backend,
            http,
            cache_root,
            fuzz_seed: file.fuzz_seed.unwrap_or(0),
        })
    }

    pub fn cache(&self) -> Cache {
        Cache::new(&self.cache_root)
    }

    pub fn backend(&self) -> Result<Arc<dyn Backend>> {
        build_backend(&self.backend, &self.http)
    }
}

/// `scripted:PATH` or `http`.
pub fn build_backend(spec: &str, http: &HttpConfig) -> Result<Arc<dyn Backend>> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Arc::new(ScriptedBackend::from_file(Path::new(path))?));
    }
    if spec == "http" {
        return Ok(Arc::new(HttpBackend::new(http.clone())?));
    }
    Err(Error::Config(format!(
        "unknown backend `{spec}`; expected `http` or `scripted:PATH`"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file() {
        let file = ConfigFile {
            backend: Some("scripted:a.json".into()),
            cache_root: Some("from-file".into()),
            fuzz_seed: Some(9),
            ..ConfigFile::default()
        };
        let s = Settings::resolve(&file, Some("http"), Some(Path::new("from-flag"))).unwrap();
        assert_eq!(s.backend, "http");
        assert_eq!(s.cache_root, PathBuf::from("from-flag"));
        assert_eq!(s.fuzz_seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("colour = 'blue'").is_err());
        let f: ConfigFile = toml::from_str("backend_model = 'm'\nmax_attempts = 2").unwrap();
        assert_eq!(f.max_attempts, Some(2));
    }

    #[test]
    fn unknown_backend_is_a_config_error() {
        assert!(matches!(build_backend("carrier-pigeon", &HttpConfig::default()), Err(Error::Config(_))));
    }
}
