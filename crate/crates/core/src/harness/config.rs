use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::doe::ClassifierConfig;
use crate::error::{Error, Result};
use crate::funcapprox::{Architecture, DEEP_HIDDEN};
use crate::medoe::BoostConfig;
use crate::ppo::{PPOConfig, CHAINBALL_BUFFER, OVERCOOKED_BUFFER};

use super::compose::FULL_SOURCE_SEEDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    FromScratch,
    PreSkilledBp,
    PreSkilledNoBp,
    MedoeExpert,
    MedoeExpertNoBp,
    MedoeMlp,
}

impl Baseline {
    pub const ALL: [Baseline; 6] = [
        Baseline::FromScratch,
        Baseline::PreSkilledBp,
        Baseline::PreSkilledNoBp,
        Baseline::MedoeExpert,
        Baseline::MedoeExpertNoBp,
        Baseline::MedoeMlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::FromScratch => "from-scratch",
            Baseline::PreSkilledBp => "pre-skilled-bp",
            Baseline::PreSkilledNoBp => "pre-skilled-no-bp",
            Baseline::MedoeExpert => "medoe-expert",
            Baseline::MedoeExpertNoBp => "medoe-expert-no-bp",
            Baseline::MedoeMlp => "medoe-mlp",
        }
    }

    pub fn uses_sources(self) -> bool {
        self != Baseline::FromScratch
    }

    pub fn uses_prior(self) -> bool {
        matches!(self, Baseline::PreSkilledBp | Baseline::MedoeExpert | Baseline::MedoeMlp)
    }

    pub fn is_medoe(self) -> bool {
        matches!(self, Baseline::MedoeExpert | Baseline::MedoeExpertNoBp | Baseline::MedoeMlp)
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == lower)
            .ok_or_else(|| Error::config(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Chainball,
    Overcooked,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Chainball => "chainball",
            EnvKind::Overcooked => "overcooked",
        }
    }
}

fn default_chain_length() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub kind: EnvKind,
    #[serde(default = "default_chain_length")]
    pub chain_length: usize,
    /// Defaults to tabular for Chainball and the deep MLP for the kitchen.
    #[serde(default)]
    pub architecture: Option<Architecture>,
}

impl EnvironmentConfig {
    pub fn architecture(&self) -> Architecture {
        self.architecture.clone().unwrap_or(match self.kind {
            EnvKind::Chainball => Architecture::Tabular,
            EnvKind::Overcooked => Architecture::Mlp {
                hidden: DEEP_HIDDEN.to_vec(),
            },
        })
    }
}

fn default_tolerance() -> f64 {
    0.1
}

fn default_attempts() -> usize {
    1
}

fn default_eval_episodes() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Environment steps per run, source stage included.
    pub total_steps: u64,
    /// Cap on a single source-stage attempt.
    pub source_step_cap: u64,
    #[serde(default = "default_attempts")]
    pub source_attempts: usize,
    /// Converged once the source return reaches `max - tolerance * |max|`.
    #[serde(default = "default_tolerance")]
    pub source_tolerance: f64,
    pub eval_interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub buffer_capacity: Option<usize>,
    /// Replay sub-teams in their source tasks at every evaluation.
    #[serde(default)]
    pub forgetting: bool,
    /// Save the team at every evaluation under `step_<N>/`.
    #[serde(default)]
    pub checkpoint_every_eval: bool,
}

fn default_source_seeds() -> usize {
    FULL_SOURCE_SEEDS
}

fn default_repeats() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub baseline: Baseline,
    pub environment: EnvironmentConfig,
    /// Checkpoints trained per source task.
    #[serde(default = "default_source_seeds")]
    pub source_seeds: usize,
    /// Seeds per composed team.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub max_teams: Option<usize>,
    #[serde(default)]
    pub allow_partial_teams: bool,
    #[serde(default = "default_true")]
    pub train_missing_sources: bool,
    /// Step environments on worker threads.
    #[serde(default)]
    pub threaded_envs: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub budget: BudgetConfig,
    #[serde(default)]
    pub ppo: Option<PPOConfig>,
    #[serde(default)]
    pub medoe: Option<BoostConfig>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

impl ExperimentConfig {
    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn ppo(&self) -> PPOConfig {
        self.ppo.clone().unwrap_or_else(|| match self.environment.kind {
            EnvKind::Chainball => PPOConfig::chainball(),
            EnvKind::Overcooked => PPOConfig::overcooked(),
        })
    }

    pub fn boost(&self) -> BoostConfig {
        self.medoe.clone().unwrap_or_else(|| match self.environment.kind {
            EnvKind::Chainball => BoostConfig::chainball(),
            EnvKind::Overcooked => BoostConfig::overcooked(),
        })
    }

    pub fn buffer_capacity(&self) -> usize {
        self.budget.buffer_capacity.unwrap_or(match self.environment.kind {
            EnvKind::Chainball => CHAINBALL_BUFFER,
            EnvKind::Overcooked => OVERCOOKED_BUFFER,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name must be a non-empty file name"));
        }
        self.ppo().validate()?;
        self.boost().validate()?;
        if !self.allow_partial_teams && self.source_seeds != FULL_SOURCE_SEEDS {
            return Err(Error::config(format!(
                "source_seeds = {} needs allow_partial_teams = true (full protocol uses {FULL_SOURCE_SEEDS})",
                self.source_seeds
            )));
        }
        if self.source_seeds == 0 || self.repeats == 0 || self.max_teams == Some(0) {
            return Err(Error::config("source_seeds, repeats and max_teams must be positive"));
        }
        let b = &self.budget;
        if b.total_steps == 0 || b.eval_interval == 0 || b.eval_episodes == 0 {
            return Err(Error::config("total_steps, eval_interval and eval_episodes must be positive"));
        }
        if self.baseline.uses_sources() && (b.source_step_cap == 0 || b.source_attempts == 0) {
            return Err(Error::config("source_step_cap and source_attempts must be positive"));
        }
        if !(b.source_tolerance >= 0.0) {
            return Err(Error::config("source_tolerance must be non-negative"));
        }
        match self.environment.kind {
            EnvKind::Chainball if self.environment.chain_length < 5 => {
                Err(Error::config("chain_length must be at least 5"))
            }
            EnvKind::Overcooked if self.environment.architecture() == Architecture::Tabular => {
                Err(Error::config("the kitchen has no discrete state ids; use an mlp architecture"))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "t"
        baseline = "medoe-expert"
        source_seeds = 2
        allow_partial_teams = true
        [environment]
        kind = "chainball"
        [budget]
        total_steps = 1000
        source_step_cap = 100
        eval_interval = 100
    "#;

    #[test]
    fn minimal_config_fills_presets() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.ppo(), PPOConfig::chainball());
        assert_eq!(cfg.boost(), BoostConfig::chainball());
        assert_eq!(cfg.environment.chain_length, 11);
        assert_eq!(cfg.budget.eval_episodes, 100);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_teams_need_opt_in() {
        let text = MINIMAL.replace("allow_partial_teams = true", "");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("medoe-expert", "medoe-magic");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn kitchen_rejects_tabular() {
        let text = MINIMAL.replace("\"chainball\"", "\"overcooked\"\narchitecture = { type = \"tabular\" }");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn baseline_names_round_trip() {
        for b in Baseline::ALL {
            assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
        }
    }
}
