//! TOML run configuration: `seed` and `out` at the top level, then flat
//! `[env]`, `[train]` and `[eval]` sections. Every key is optional except
//! the seed, which may also come from `--seed` or `MASKGRAD_SEED`.
//!
//! ```toml
//! seed = 7
//! out = "runs/reach"
//!
//! [env]
//! task = "reach"
//! demos = 100
//! horizon = 100        # any EnvSpec field may be overridden
//!
//! [train]
//! method = "transmask"
//! norm = "sparsemax"
//! epochs = 200
//!
//! [eval]
//! regimes = ["id", "ood-irrelevant"]
//! episodes = 100
//! seeds = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;
use crate::world::{EnvSpec, Regime, Task};

pub const SEED_ENV_VAR: &str = "MASKGRAD_SEED";
pub const DEFAULT_DEMOS: usize = 100;
pub const DEFAULT_EPISODES: usize = 100;
pub const DEFAULT_EVAL_SEEDS: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub env: EnvSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSection {
    pub task: Task,
    pub demos: usize,
    /// Overrides applied on top of the task's default [`EnvSpec`].
    #[serde(flatten)]
    pub overrides: toml::Table,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { task: Task::Reach, demos: DEFAULT_DEMOS, overrides: toml::Table::new() }
    }
}

impl EnvSection {
    /// The task default with the overrides merged in. Unknown keys are a
    /// configuration error.
    pub fn spec(&self) -> Result<EnvSpec> {
        let base = EnvSpec::for_task(self.task);
        if self.overrides.is_empty() {
            return Ok(base);
        }
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in &self.overrides {
            table.insert(k.clone(), v.clone());
        }
        let spec: EnvSpec = table.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[env]: {}", e.message())))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub regimes: Vec<Regime>,
    pub episodes: usize,
    /// Number of evaluation seeds, counted up from the run seed.
    pub seeds: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { regimes: Regime::ALL.to_vec(), episodes: DEFAULT_EPISODES, seeds: DEFAULT_EVAL_SEEDS }
    }
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Seed precedence: command line, then config file, then `MASKGRAD_SEED`.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>, env_value: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match env_value {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV_VAR}={v:?} is not an unsigned integer"))),
        None => Err(Error::Config(format!("no seed given: pass --seed, set `seed` in the config, or set {SEED_ENV_VAR}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let f = RunFile::parse("").unwrap();
        assert_eq!(f.seed, None);
        assert_eq!(f.env.spec().unwrap(), EnvSpec::reach());
        assert_eq!(f.train, TrainConfig::default());
        assert_eq!(f.eval.regimes.len(), 4);
    }

    #[test]
    fn env_overrides_merge() {
        let f = RunFile::parse("seed = 3\n[env]\ntask = \"push\"\nhorizon = 50\ndistractors = 2\n").unwrap();
        let spec = f.env.spec().unwrap();
        assert_eq!(spec.task, Task::Push);
        assert_eq!(spec.horizon, 50);
        assert_eq!(spec.distractors, 2);
        assert_eq!(spec.state_dim(), 2 + 2 + 2 + 4 + 4);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunFile::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunFile::parse("[train]\nepochz = 1"), Err(Error::Config(_))));
        let f = RunFile::parse("[env]\nwidth = 1").unwrap();
        assert!(matches!(f.env.spec(), Err(Error::Config(_))));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some("3")).unwrap(), 3);
        assert!(matches!(resolve_seed(None, None, None), Err(Error::Config(_))));
        assert!(matches!(resolve_seed(None, None, Some("x")), Err(Error::Config(_))));
    }
}
