//! Scenario configuration file (TOML).

use std::path::{Path, PathBuf};

use evcs_core::attack::{schedule_default, AttackKind, AttackSpec, Timing};
use evcs_core::control::{ControllerGains, References};
use evcs_core::detect::DetectorConfig;
use evcs_core::mitigate::{BruteForceTable, Method, Scenario, Strategy};
use evcs_core::plant::{calibrate_params, CalibrationTargets, PlantParams};
use evcs_core::td3::{AgentConfig, EnvConfig};
use evcs_core::Channel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Environment variable that overrides the root relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "EVCS_OUTPUT_ROOT";

/// Either explicit plant parameters or targets to calibrate against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PlantSpec {
    Calibrate { targets: CalibrationTargets },
    Explicit { params: PlantParams },
}

impl PlantSpec {
    pub fn resolve(&self) -> Result<PlantParams, HarnessError> {
        match self {
            PlantSpec::Calibrate { targets } => Ok(calibrate_params(targets, &PlantParams::base())?),
            PlantSpec::Explicit { params } => {
                params.validate()?;
                Ok(params.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSection {
    pub pv: AgentConfig,
    pub bes: AgentConfig,
    pub ev: AgentConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            pv: AgentConfig::for_agent(Channel::Pv),
            bes: AgentConfig::for_agent(Channel::Bes),
            ev: AgentConfig::for_agent(Channel::Ev),
        }
    }
}

impl AgentSection {
    pub fn get(&self, c: Channel) -> AgentConfig {
        match c {
            Channel::Pv => self.pv,
            Channel::Bes => self.bes,
            Channel::Ev => self.ev,
        }
    }
}

/// Missing fields take their defaults, except `attack`, whose absence means no attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated seconds per run.
    pub duration: f64,
    pub output_dir: PathBuf,
    /// Where `train` writes and `run` reads agent bundles; relative paths
    /// resolve against the output directory.
    pub bundle_dir: PathBuf,
    pub plant: PlantSpec,
    pub references: References,
    pub gains: ControllerGains,
    pub detector: DetectorConfig,
    pub brute_force: BruteForceTable,
    pub strategy: Strategy,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    pub agent: AgentSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 17.0,
            output_dir: PathBuf::from("out"),
            bundle_dir: PathBuf::from("bundles"),
            plant: PlantSpec::Calibrate { targets: CalibrationTargets::default() },
            references: References::default(),
            gains: ControllerGains::default(),
            detector: DetectorConfig::default(),
            brute_force: BruteForceTable::default(),
            strategy: Strategy::uniform(Method::Td3),
            attack: Some(schedule_default(AttackKind::TypeI, Timing::Diff)),
            agent: AgentSection::default(),
        }
    }
}

/// Named attack presets accepted on the command line.
pub fn attack_preset(name: &str) -> Result<Option<AttackSpec>, HarnessError> {
    let (kind, timing) = match name {
        "none" => return Ok(None),
        "type1-diff" => (AttackKind::TypeI, Timing::Diff),
        "type1-sim" => (AttackKind::TypeI, Timing::Sim),
        "type2-diff" => (AttackKind::TypeII, Timing::Diff),
        "type2-sim" => (AttackKind::TypeII, Timing::Sim),
        other => return Err(HarnessError::Config(format!("unknown attack preset '{other}'"))),
    };
    Ok(Some(schedule_default(kind, timing)))
}

impl ScenarioConfig {
    pub fn with_attack(attack: Option<AttackSpec>) -> Self {
        Self { attack, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Lowercase hex SHA-256 of the canonical serialization, excluding
    /// where artifacts are written.
    pub fn hash(&self) -> Result<String, HarnessError> {
        let located = Self { output_dir: PathBuf::new(), bundle_dir: PathBuf::new(), ..self.clone() };
        let digest = Sha256::digest(located.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if let Some(a) = &self.attack {
            a.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            for c in &a.targets {
                let w = a.windows[c];
                if w.t_start < 0.0 || w.t_end > self.duration + 1e-9 {
                    return bad(format!("window for {c} [{}, {}) lies outside the {} s run", w.t_start, w.t_end, self.duration));
                }
            }
        }
        self.detector.validate().map_err(HarnessError::Config)?;
        for c in Channel::ALL {
            self.agent.get(c).validate().map_err(|e| HarnessError::Config(format!("agent.{c}: {e}")))?;
        }
        Ok(())
    }

    /// Output directory after applying [`OUTPUT_ROOT_VAR`].
    pub fn output_path(&self) -> PathBuf {
        resolve_output(&self.output_dir, std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).as_deref())
    }

    pub fn bundle_path(&self) -> PathBuf {
        if self.bundle_dir.is_absolute() {
            self.bundle_dir.clone()
        } else {
            self.output_path().join(&self.bundle_dir)
        }
    }

    pub fn scenario(&self, params: &PlantParams) -> Scenario {
        Scenario {
            params: params.clone(),
            refs: self.references,
            gains: self.gains,
            attack: self.attack.clone(),
            detector: self.detector,
            brute_force: self.brute_force,
            duration: self.duration,
        }
    }

    pub fn env(&self, params: &PlantParams) -> Result<EnvConfig, HarnessError> {
        Ok(EnvConfig::new(params.clone(), self.references, self.gains)?)
    }
}

/// Relative `dir` joined onto `root` when a root is given; absolute paths pass through.
pub fn resolve_output(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}
