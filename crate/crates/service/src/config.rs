//! Settings from an optional TOML file, overridden by `STRATA_*` variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use strata_core::sonify::{
    Backends, ColorLexicon, RemoteCaptioner, RemoteGenerator, Rgb, StubCaptioner, StubGenerator,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub library_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Text-to-audio endpoint; the offline stub is used when unset.
    pub generator_url: Option<String>,
    /// Image captioning endpoint; the offline stub is used when unset.
    pub captioner_url: Option<String>,
    pub backend_timeout_s: u64,
    pub backend_retries: u32,
    pub port: u16,
    /// Extra colour words, e.g. `teal = [0, 128, 128]`.
    pub colors: BTreeMap<String, [u8; 3]>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("strata-data"),
            library_dir: None,
            static_dir: None,
            generator_url: None,
            captioner_url: None,
            backend_timeout_s: 30,
            backend_retries: 2,
            port: 8080,
            colors: BTreeMap::new(),
        }
    }
}

impl Config {
    /// Reads `path` (if any), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        let non_empty = |k: &str| var(k).filter(|v| !v.trim().is_empty());
        if let Some(v) = non_empty("STRATA_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = non_empty("STRATA_LIBRARY_DIR") {
            self.library_dir = Some(v.into());
        }
        if let Some(v) = non_empty("STRATA_STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        if let Some(v) = non_empty("STRATA_GENERATOR_URL") {
            self.generator_url = Some(v);
        }
        if let Some(v) = non_empty("STRATA_CAPTIONER_URL") {
            self.captioner_url = Some(v);
        }
        if let Some(v) = non_empty("STRATA_BACKEND_TIMEOUT_S") {
            self.backend_timeout_s = v.parse().map_err(|e| format!("STRATA_BACKEND_TIMEOUT_S: {e}"))?;
        }
        if let Some(v) = non_empty("STRATA_BACKEND_RETRIES") {
            self.backend_retries = v.parse().map_err(|e| format!("STRATA_BACKEND_RETRIES: {e}"))?;
        }
        if let Some(v) = non_empty("STRATA_PORT") {
            self.port = v.parse().map_err(|e| format!("STRATA_PORT: {e}"))?;
        }
        Ok(())
    }

    pub fn backends(&self) -> Backends {
        let timeout = Duration::from_secs(self.backend_timeout_s);
        Backends {
            generator: match &self.generator_url {
                Some(url) => Arc::new(RemoteGenerator::new(url.clone(), timeout, self.backend_retries)),
                None => Arc::new(StubGenerator),
            },
            captioner: match &self.captioner_url {
                Some(url) => Arc::new(RemoteCaptioner::new(url.clone(), timeout, self.backend_retries)),
                None => Arc::new(StubCaptioner),
            },
            lexicon: ColorLexicon::with_entries(
                self.colors
                    .iter()
                    .map(|(name, [r, g, b])| (name.clone(), Rgb(*r, *g, *b))),
            ),
        }
    }
}
