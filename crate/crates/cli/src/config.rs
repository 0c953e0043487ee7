//! Settings come from, lowest precedence first: built-in defaults, a JSON or
//! TOML config file, `FAB_*` environment variables, command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fab_core::backend::BackendKind;
use fab_core::params::DEFAULT_DEPTH;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    directory: Option<String>,
    keys: Option<PathBuf>,
    depth: Option<u32>,
    backend: Option<BackendKind>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    /// `host:port` of a directory server, or `file:<dir>` for a local store.
    pub directory: Option<String>,
    pub keys: PathBuf,
    pub depth: u32,
    pub backend: BackendKind,
}

impl Default for Config {
    fn default() -> Self {
        Self { directory: None, keys: PathBuf::from("keys"), depth: DEFAULT_DEPTH, backend: BackendKind::Groth16 }
    }
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        _ => bail!("config file must end in .toml or .json: {}", path.display()),
    };
    Ok(cfg)
}

impl Config {
    pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(path) = file {
            let f = read_file(path)?;
            cfg.directory = f.directory.or(cfg.directory);
            cfg.keys = f.keys.unwrap_or(cfg.keys);
            cfg.depth = f.depth.unwrap_or(cfg.depth);
            cfg.backend = f.backend.unwrap_or(cfg.backend);
        }
        if let Some(v) = env("FAB_DIRECTORY") {
            cfg.directory = Some(v);
        }
        if let Some(v) = env("FAB_KEYS") {
            cfg.keys = PathBuf::from(v);
        }
        if let Some(v) = env("FAB_DEPTH") {
            cfg.depth = v.parse().with_context(|| format!("FAB_DEPTH={v}"))?;
        }
        if let Some(v) = env("FAB_BACKEND") {
            cfg.backend = v.parse().map_err(|e| anyhow::anyhow!("FAB_BACKEND={v}: {e}"))?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("fab.toml");
        std::fs::write(&toml_path, "directory = \"127.0.0.1:9\"\ndepth = 12\nbackend = \"reference\"\n").unwrap();
        let cfg = Config::load(Some(&toml_path), |_| None).unwrap();
        assert_eq!(cfg.directory.as_deref(), Some("127.0.0.1:9"));
        assert_eq!((cfg.depth, cfg.backend), (12, BackendKind::Reference));

        let env = |k: &str| (k == "FAB_DEPTH").then(|| "16".to_string());
        assert_eq!(Config::load(Some(&toml_path), env).unwrap().depth, 16);

        let json_path = dir.path().join("fab.json");
        std::fs::write(&json_path, r#"{"keys":"k2"}"#).unwrap();
        let cfg = Config::load(Some(&json_path), |_| None).unwrap();
        assert_eq!(cfg.keys, PathBuf::from("k2"));
        assert_eq!(cfg.depth, DEFAULT_DEPTH);

        std::fs::write(&json_path, r#"{"colour":"red"}"#).unwrap();
        assert!(Config::load(Some(&json_path), |_| None).is_err());
        assert!(Config::load(None, |k| (k == "FAB_BACKEND").then(|| "plonk".into())).is_err());
    }
}
