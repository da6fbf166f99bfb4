//! Run configuration: a TOML file whose every key can be overridden with
//! `key=value` pairs from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cluster::{Linkage, TieBreak};
use crate::embedding::TableFormat;
use crate::error::{Error, Result};
use crate::game::GameParams;

/// Where verses come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposeMode {
    /// Observation followed by the matched sentence.
    #[default]
    Template,
    /// Ask the external provider; requires `provider_url`.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    /// Embedding table file. When absent a synthetic table of
    /// `synthetic_count` x `synthetic_dim` is generated from `seed`.
    pub table: Option<PathBuf>,
    /// Defaults to a guess from the table's file extension.
    pub table_format: Option<TableFormat>,
    pub synthetic_count: usize,
    pub synthetic_dim: usize,
    /// Reference corpus, one sentence per line. Required.
    pub corpus: Option<PathBuf>,
    /// Observation script; defaults to the corpus.
    pub script: Option<PathBuf>,
    pub linkage: Linkage,
    pub feedback_levels: u32,
    pub epsilon: f64,
    pub max_iterations: u64,
    pub saturation_window: u64,
    pub k_retrieval: usize,
    pub max_verse_len: usize,
    pub accuracy_window: u64,
    pub divergence_k: usize,
    pub hint_tie_break: TieBreak,
    pub output_dir: PathBuf,
    /// Component atlas file; the built-in stroke atlas when absent.
    pub atlas: Option<PathBuf>,
    pub provider_url: Option<String>,
    pub provider_timeout_secs: u64,
    /// Fall back to the script (observations) and the template (verses)
    /// when the provider fails.
    pub provider_fallback: bool,
    pub compose: ComposeMode,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let params = GameParams::default();
        SimulationConfig {
            seed: params.seed,
            table: None,
            table_format: None,
            synthetic_count: 3768,
            synthetic_dim: 768,
            corpus: None,
            script: None,
            linkage: Linkage::Average,
            feedback_levels: params.feedback_levels,
            epsilon: params.epsilon,
            max_iterations: params.max_iterations,
            saturation_window: params.saturation_window,
            k_retrieval: params.k_retrieval,
            max_verse_len: crate::corpus::DEFAULT_MAX_VERSE_LEN,
            accuracy_window: params.accuracy_window,
            divergence_k: params.divergence_k,
            hint_tie_break: params.hint_tie_break,
            output_dir: PathBuf::from("out"),
            atlas: None,
            provider_url: None,
            provider_timeout_secs: 10,
            provider_fallback: true,
            compose: ComposeMode::Template,
        }
    }
}

impl SimulationConfig {
    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.table, &mut self.corpus, &mut self.script, &mut self.atlas]
            .into_iter()
            .flatten()
        {
            join(p);
        }
        join(&mut self.output_dir);
    }

    /// Apply one `key=value` override. The value is read as a TOML literal
    /// when it parses as one of the right type, otherwise as a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let current = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let toml::Value::Table(table) = current else {
            unreachable!("config serializes to a table")
        };
        let attempt = |v: toml::Value| -> std::result::Result<Self, String> {
            let mut t = table.clone();
            t.insert(key.to_string(), v);
            toml::Value::Table(t)
                .try_into()
                .map_err(|e: toml::de::Error| e.to_string())
        };
        let literal = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"));
        let result = match literal {
            Some(v) => attempt(v).or_else(|_| attempt(toml::Value::String(value.into()))),
            None => attempt(toml::Value::String(value.into())),
        };
        *self = result.map_err(|e| Error::Config(format!("--{key}={value}: {e}")))?;
        Ok(())
    }

    /// Apply `key=value` strings (a leading `--` is accepted and stripped).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let o = o.strip_prefix("--").unwrap_or(o);
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(key.trim().replace('-', "_").as_str(), value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let exists = |name: &str, p: &Path| -> Result<()> {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} file {} does not exist", p.display())))
            }
        };
        match &self.corpus {
            None => return bad("corpus path is required".into()),
            Some(p) => exists("corpus", p)?,
        }
        if let Some(p) = &self.script {
            exists("script", p)?;
        }
        if let Some(p) = &self.table {
            exists("table", p)?;
        } else {
            if self.synthetic_count < 4 {
                return bad("synthetic_count must be at least 4".into());
            }
            if self.synthetic_dim < 3 {
                return bad("synthetic_dim must be at least 3".into());
            }
        }
        if let Some(p) = &self.atlas {
            exists("atlas", p)?;
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.feedback_levels < 2 {
            return bad(format!(
                "feedback_levels must be at least 2, got {}",
                self.feedback_levels
            ));
        }
        for (name, v) in [
            ("saturation_window", self.saturation_window),
            ("k_retrieval", self.k_retrieval as u64),
            ("max_verse_len", self.max_verse_len as u64),
            ("accuracy_window", self.accuracy_window),
            ("divergence_k", self.divergence_k as u64),
            ("provider_timeout_secs", self.provider_timeout_secs),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.compose == ComposeMode::External && self.provider_url.is_none() {
            return bad("compose = \"external\" needs provider_url".into());
        }
        Ok(())
    }

    pub fn game_params(&self) -> GameParams {
        GameParams {
            seed: self.seed,
            feedback_levels: self.feedback_levels,
            epsilon: self.epsilon,
            k_retrieval: self.k_retrieval,
            hint_tie_break: self.hint_tie_break,
            max_iterations: self.max_iterations,
            saturation_window: self.saturation_window,
            accuracy_window: self.accuracy_window,
            divergence_k: self.divergence_k,
        }
    }

    pub fn provider_timeout(&self) -> Duration {
        Duration::from_secs(self.provider_timeout_secs)
    }

    /// Script file for observations: the explicit script or the corpus.
    pub fn script_path(&self) -> Option<&Path> {
        self.script.as_deref().or(self.corpus.as_deref())
    }
}
