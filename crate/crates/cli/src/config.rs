//! JSON run configuration. Every field has a default, so `{}` is a valid
//! config describing the standard chain benchmark.

use std::path::{Path, PathBuf};

use nmpc_core::chain::ChainParams;
use nmpc_core::Algorithm;
use nmpc_core::SolverOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub horizon: HorizonConfig,
    pub solver: SolverConfig,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Chain,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub chain: ChainParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    /// Sampling time in seconds.
    pub ts: f64,
    /// Number of stages.
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig { ts: 0.1, n: 40 }
    }
}

/// `algorithm` next to the [`SolverOptions`] fields in one flat object.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Map<String, serde_json::Value>")]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    #[serde(flatten)]
    pub options: SolverOptions,
}

impl TryFrom<serde_json::Map<String, serde_json::Value>> for SolverConfig {
    type Error = serde_json::Error;

    // serde's flatten would silently accept misspelled option names
    fn try_from(mut map: serde_json::Map<String, serde_json::Value>) -> Result<Self, Self::Error> {
        let algorithm = match map.remove("algorithm") {
            Some(v) => serde_json::from_value(v)?,
            None => Algorithm::default(),
        };
        let options = serde_json::from_value(serde_json::Value::Object(map))?;
        Ok(SolverConfig { algorithm, options })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Simulated time in seconds.
    pub total_time: f64,
    pub warm_start: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            total_time: 15.0,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the per-iteration trace of single solves.
    pub trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            trace: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "config not found: {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<(), CliError> {
        let mut bad = self.problem.chain.check();
        bad.extend(self.solver.options.check());
        if !(self.horizon.ts > 0.0) {
            bad.push(format!("ts must be positive, got {}", self.horizon.ts));
        }
        if self.horizon.n < 1 {
            bad.push("N must be at least 1".into());
        }
        if !(self.simulation.total_time >= 0.0) {
            bad.push("total_time must be nonnegative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad.join("; ")))
        }
    }

    /// `round(total_time / ts)`.
    pub fn simulation_steps(&self) -> usize {
        (self.simulation.total_time / self.horizon.ts).round() as usize
    }
}
