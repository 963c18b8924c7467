//! TOML configuration. Relative paths are resolved against the directory
//! of the configuration file.

use std::path::{Path, PathBuf};

use goalflow_core::retriever::{DEFAULT_ALPHA, DEFAULT_EMBEDDING_DIM, DEFAULT_TAU};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "GOALFLOW_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Disabled,
    Scripted,
    Http,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Disabled => "disabled",
            Self::Scripted => "scripted",
            Self::Http => "http",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Rule file for the scripted provider.
    pub fixture: Option<PathBuf>,
    /// Base of an OpenAI-style API; `/chat/completions` is appended.
    pub base_url: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Disabled,
            fixture: None,
            base_url: None,
            model: "gpt-3.5-turbo".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_ms: 250,
            api_key_env: "GOALFLOW_API_KEY".into(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieverSection {
    pub alpha: f64,
    pub tau: f64,
    pub embedding_dim: usize,
}

impl Default for RetrieverSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Goal repository YAML. Goals added over HTTP are written back here.
    #[serde(default)]
    pub goals: Option<PathBuf>,
    /// A directory of `.md`/`.txt` documents or a JSON document list.
    #[serde(default)]
    pub kb: Option<PathBuf>,
    /// Operational metadata seed (JSON).
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub keywords: Option<PathBuf>,
    #[serde(default)]
    pub retriever: RetrieverSection,
    #[serde(default)]
    pub provider: ProviderConfig,
    /// Use the bundled demo assets for every path left unset.
    #[serde(skip)]
    pub demo: bool,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

impl Config {
    /// The bundled demo: data-hygiene and ticket goals, a small KB, a
    /// 12-dataset store and the scripted provider.
    pub fn demo() -> Self {
        Self {
            listen: default_listen(),
            data_dir: std::env::temp_dir().join("goalflow-demo"),
            goals: None,
            kb: None,
            store: None,
            templates: None,
            keywords: None,
            retriever: RetrieverSection::default(),
            provider: ProviderConfig {
                kind: ProviderKind::Scripted,
                ..ProviderConfig::default()
            },
            demo: true,
        }
    }

    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data_dir);
        for p in [
            &mut cfg.goals,
            &mut cfg.kb,
            &mut cfg.store,
            &mut cfg.templates,
            &mut cfg.keywords,
            &mut cfg.provider.fixture,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    /// `--config` if given, else the environment variable, else the demo.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::demo()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.retriever;
        if !(0.0..=1.0).contains(&r.alpha) {
            return Err(ConfigError::Invalid(format!("retriever.alpha {} is outside [0, 1]", r.alpha)));
        }
        if !(0.0..=1.0).contains(&r.tau) {
            return Err(ConfigError::Invalid(format!("retriever.tau {} is outside [0, 1]", r.tau)));
        }
        if r.embedding_dim == 0 {
            return Err(ConfigError::Invalid("retriever.embedding_dim must be positive".into()));
        }
        let p = &self.provider;
        match p.kind {
            ProviderKind::Scripted if p.fixture.is_none() && !self.demo => {
                Err(ConfigError::Invalid("provider.kind = \"scripted\" requires provider.fixture".into()))
            }
            ProviderKind::Http if p.base_url.is_none() => {
                Err(ConfigError::Invalid("provider.kind = \"http\" requires provider.base_url".into()))
            }
            _ if p.max_in_flight == 0 => Err(ConfigError::Invalid("provider.max_in_flight must be positive".into())),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_file() {
        let cfg = Config::parse(
            "goals = \"goals.yaml\"\n[provider]\nkind = \"scripted\"\nfixture = \"f.json\"\n",
            Path::new("/etc/gf"),
            "test",
        )
        .unwrap();
        assert_eq!(cfg.goals.unwrap(), Path::new("/etc/gf/goals.yaml"));
        assert_eq!(cfg.data_dir, Path::new("/etc/gf/data"));
        assert_eq!(cfg.provider.fixture.unwrap(), Path::new("/etc/gf/f.json"));
        assert_eq!(cfg.provider.max_retries, 2);
        assert_eq!(cfg.provider.max_in_flight, 4);
    }

    #[test]
    fn provider_requirements() {
        let base = Path::new("/");
        assert!(Config::parse("[provider]\nkind = \"scripted\"\n", base, "t").is_err());
        assert!(Config::parse("[provider]\nkind = \"http\"\n", base, "t").is_err());
        assert!(Config::parse("[provider]\nkind = \"http\"\nbase_url = \"http://x\"\n", base, "t").is_ok());
        assert!(Config::parse("[retriever]\nalpha = 1.5\n", base, "t").is_err());
        assert!(Config::parse("bogus = 1\n", base, "t").is_err());
    }

    #[test]
    fn empty_file_is_disabled_provider() {
        let cfg = Config::parse("", Path::new("/"), "t").unwrap();
        assert_eq!(cfg.provider.kind, ProviderKind::Disabled);
        assert_eq!(cfg.listen, "127.0.0.1:8080");
    }
}
