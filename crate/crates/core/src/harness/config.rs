//! Run configuration: a sectioned TOML file overlaid on built-in defaults.
//!
//! ```toml
//! [run]
//! scenario = "volte-pc"
//! algorithm = "proposed"
//! seed = 7
//! train_episodes = 1000
//!
//! [volte]
//! ppp_intensity = 0.5
//! ```
//!
//! Every key is optional; missing keys take the scenario default and
//! unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{DqnConfig, EpsilonSchedule};
use crate::baselines::BaselineKind;
use crate::env::{SonParams, VolteParams};
use crate::error::{Error, Result};
use crate::events::{EnvKind, EventConfig};
use crate::metrics::{MosModel, PacketErrorModel};
use crate::radio::RadioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "volte-pc")]
    VoltePc,
    #[serde(rename = "son-fm")]
    SonFm,
}

impl Scenario {
    pub fn env_kind(self) -> EnvKind {
        match self {
            Self::VoltePc => EnvKind::Indoor,
            Self::SonFm => EnvKind::Outdoor,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::VoltePc => "volte-pc",
            Self::SonFm => "son-fm",
        }
    }

    /// Algorithms compared in this scenario, proposed first.
    pub fn algorithms(self) -> [Algorithm; 3] {
        match self {
            Self::VoltePc => [Algorithm::Proposed, Algorithm::Fpa, Algorithm::MaxSinr],
            Self::SonFm => [Algorithm::Proposed, Algorithm::Fifo, Algorithm::Random],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::VoltePc, Self::SonFm]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'; expected volte-pc or son-fm")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Proposed,
    Fpa,
    MaxSinr,
    Random,
    Fifo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Proposed, Self::Fpa, Self::MaxSinr, Self::Random, Self::Fifo];

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Fpa => "fpa",
            Self::MaxSinr => "maxsinr",
            Self::Random => "random",
            Self::Fifo => "fifo",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Self::Proposed => None,
            Self::Fpa => Some(BaselineKind::Fpa),
            Self::MaxSinr => Some(BaselineKind::MaxSinr),
            Self::Random => Some(BaselineKind::RandomClear),
            Self::Fifo => Some(BaselineKind::FifoClear),
        }
    }

    pub fn supports(self, scenario: Scenario) -> bool {
        self.baseline().is_none_or(|b| b.env_kind() == scenario.env_kind())
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm '{s}'; expected one of proposed, fpa, maxsinr, random, fifo"
                ))
            })
    }
}

/// Learning backend of the proposed algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Tabular,
    Dqn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub backend: Backend,
    /// Master seed; must fit in a signed 64-bit integer.
    pub seed: u64,
    pub train_episodes: u64,
    pub eval_episodes: u64,
    /// Exploration rate while evaluating the proposed agent; 0 is greedy.
    pub eval_epsilon: f64,
    pub run_id: String,
    pub out_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    /// Tabular step size α.
    pub learning_rate: f64,
    pub discount: f64,
    pub exploration: EpsilonSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub gamma_min_db: f64,
    pub modulation_order: u32,
    pub error_model: PacketErrorModel,
    pub mos: MosModel,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            gamma_min_db: 0.0,
            modulation_order: 64,
            error_model: PacketErrorModel::default(),
            mos: MosModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub radio: RadioConfig,
    pub events: EventConfig,
    pub volte: VolteParams,
    pub son: SonParams,
    pub agent: AgentSection,
    pub dqn: DqnConfig,
    pub metrics: MetricsSection,
}

impl RunConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        let (backend, decay) = match scenario {
            Scenario::VoltePc => (Backend::Tabular, 0.99),
            Scenario::SonFm => (Backend::Dqn, 0.91),
        };
        Self {
            run: RunSection {
                scenario,
                algorithm: Algorithm::Proposed,
                backend,
                seed: 0,
                train_episodes: 1000,
                eval_episodes: 500,
                eval_epsilon: 0.0,
                run_id: "run".into(),
                out_dir: "out".into(),
            },
            radio: match scenario {
                Scenario::VoltePc => RadioConfig::indoor(),
                Scenario::SonFm => RadioConfig::outdoor(),
            },
            events: EventConfig::for_kind(scenario.env_kind()),
            volte: VolteParams::default(),
            son: SonParams::default(),
            agent: AgentSection {
                learning_rate: 0.2,
                discount: 0.995,
                exploration: EpsilonSchedule {
                    epsilon: 1.0,
                    decay,
                    floor: 0.01,
                },
            },
            dqn: DqnConfig::default(),
            metrics: MetricsSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.run.scenario;
        if !self.run.algorithm.supports(s) {
            return Err(Error::Config(format!(
                "algorithm '{}' does not apply to {s}",
                self.run.algorithm
            )));
        }
        if i64::try_from(self.run.seed).is_err() {
            return Err(Error::Config("seed must be at most 2^63 - 1".into()));
        }
        if self.run.run_id.is_empty() || self.run.run_id.contains([',', '"', '\n', '\r']) {
            return Err(Error::Config("run_id must be non-empty and free of commas, quotes and newlines".into()));
        }
        if self.run.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.run.eval_epsilon) {
            return Err(Error::Config("eval_epsilon must lie in [0, 1]".into()));
        }
        if !(self.agent.learning_rate > 0.0 && self.agent.learning_rate < 1.0)
            || !(0.0..1.0).contains(&self.agent.discount)
        {
            return Err(Error::Config("need 0 < learning_rate < 1 and 0 <= discount < 1".into()));
        }
        self.agent.exploration.validate()?;
        self.radio.validate()?;
        self.events.validate(s.env_kind())?;
        match s {
            Scenario::VoltePc => self.volte.validate(&self.radio)?,
            Scenario::SonFm => self.son.validate()?,
        }
        if self.run.backend == Backend::Dqn && self.run.algorithm == Algorithm::Proposed {
            self.dqn.validate()?;
        }
        if self.metrics.modulation_order < 2 || !self.metrics.gamma_min_db.is_finite() {
            return Err(Error::Config("need modulation_order >= 2 and finite gamma_min_db".into()));
        }
        self.metrics.error_model.validate()?;
        self.metrics.mos.validate()
    }

    /// Parses `text` over the defaults of its scenario. `scenario`, when
    /// given, must agree with any `run.scenario` in the file.
    pub fn parse(text: &str, scenario: Option<Scenario>) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let in_file = match user.get("run").and_then(|r| r.get("scenario")) {
            Some(v) => Some(
                v.clone()
                    .try_into::<Scenario>()
                    .map_err(|e| Error::Config(format!("run.scenario: {e}")))?,
            ),
            None => None,
        };
        let scenario = match (scenario, in_file) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config is for {b}, not {a}")));
            }
            (a, b) => a.or(b).unwrap_or(Scenario::VoltePc),
        };
        let mut merged = toml::Table::try_from(Self::defaults(scenario))
            .map_err(|e| Error::Config(e.to_string()))?;
        overlay(&mut merged, user, "")?;
        let mut cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.metrics.mos.load_table()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, scenario: Option<Scenario>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text, scenario).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Recursively writes `user` over `base`. Keys absent from `base` are
/// errors so typos never pass silently.
fn overlay(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (None, _) => return Err(Error::Config(format!("unknown key '{path}'"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => overlay(b, u, &path)?,
            (Some(toml::Value::Table(_)), _) => {
                return Err(Error::Config(format!("'{path}' must be a table")));
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}
