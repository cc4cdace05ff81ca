use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gamechat_core::negotiation::DEFAULT_LATENCY;
use gamechat_core::scenario::{build_variant, T_MAX, VARIANTS_PER_SUITE};
use gamechat_core::sim::DEFAULT_DT;
use gamechat_core::{Method, ScenarioKind, ScenarioSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} is required for the llm backend")]
    MissingEnv(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Rule,
    Llm,
}

/// `"all"` or a single variant index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantSelection {
    All,
    One(usize),
}

impl VariantSelection {
    pub fn indices(self) -> Vec<usize> {
        match self {
            VariantSelection::All => (0..VARIANTS_PER_SUITE).collect(),
            VariantSelection::One(i) => vec![i],
        }
    }
}

impl fmt::Display for VariantSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantSelection::All => f.write_str("all"),
            VariantSelection::One(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for VariantSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(VariantSelection::All);
        }
        s.parse()
            .map(VariantSelection::One)
            .map_err(|_| format!("variant must be \"all\" or an index, got {s:?}"))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VariantRepr {
    Index(usize),
    Word(String),
}

impl Serialize for VariantSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            VariantSelection::All => s.serialize_str("all"),
            VariantSelection::One(i) => s.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for VariantSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match VariantRepr::deserialize(d)? {
            VariantRepr::Index(i) => Ok(VariantSelection::One(i)),
            VariantRepr::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `"all"` or one method name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSelection {
    All,
    One(Method),
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::All => Method::ALL.to_vec(),
            MethodSelection::One(m) => vec![m],
        }
    }
}

impl fmt::Display for MethodSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSelection::All => f.write_str("all"),
            MethodSelection::One(m) => f.write_str(m.name()),
        }
    }
}

impl FromStr for MethodSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(MethodSelection::All);
        }
        s.parse().map(MethodSelection::One).map_err(|e| format!("{e}"))
    }
}

impl Serialize for MethodSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything needed to reproduce a batch of runs. Stored as flat JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub variant: VariantSelection,
    pub method: MethodSelection,
    pub backend: Backend,
    pub seed: u64,
    pub dt: f64,
    pub t_max: f64,
    pub latency: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Doorway,
            variant: VariantSelection::All,
            method: MethodSelection::All,
            backend: Backend::Rule,
            seed: 0,
            dt: DEFAULT_DT,
            t_max: T_MAX,
            latency: DEFAULT_LATENCY,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        positive("latency", self.latency)?;
        if self.t_max < self.dt {
            return Err(ConfigError::Invalid(format!(
                "t_max {} is shorter than one step of {}",
                self.t_max, self.dt
            )));
        }
        if let VariantSelection::One(i) = self.variant {
            if i >= VARIANTS_PER_SUITE {
                return Err(ConfigError::Invalid(format!(
                    "variant {i} out of range 0..{VARIANTS_PER_SUITE}"
                )));
            }
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<Method> {
        self.method.methods()
    }

    /// True when some selected run would call the chat endpoint.
    pub fn needs_llm(&self) -> bool {
        self.backend == Backend::Llm && self.methods().iter().any(|m| m.uses_dialogue())
    }

    /// Scenario specs for the selected variants, with this config's step and
    /// horizon.
    pub fn scenarios(&self) -> Result<Vec<ScenarioSpec>, ConfigError> {
        self.variant
            .indices()
            .into_iter()
            .map(|i| {
                let mut spec =
                    build_variant(self.scenario, i, self.seed).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                spec.dt = self.dt;
                spec.t_max = self.t_max;
                Ok(spec)
            })
            .collect()
    }
}
