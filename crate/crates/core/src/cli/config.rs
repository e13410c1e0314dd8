//! Run configuration: a JSON file merged with command-line flags, flags
//! taking precedence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::procedures::ProcedureTag;
use crate::simulate::{MarginMode, SimScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// FDR and power of each procedure.
    #[default]
    Fdr,
    /// Empirical bias of the estimators against closed-form values.
    Bias,
    /// `E[1 / pi0_hat_k] <= 1 / pi0` check for small m.
    ConditionTwo,
}

/// Optional overrides for the simulation scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n1: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n2: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_mode: Option<MarginMode>,
}

/// Every field is optional so that file and flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storey_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub procedure: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "ScenarioConfig::is_empty")]
    pub scenario: ScenarioConfig,
}

impl ScenarioConfig {
    pub fn is_empty(&self) -> bool {
        *self == ScenarioConfig::default()
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))
    }

    /// `self` holds flag values; anything unset falls back to `file`.
    pub fn over(self, file: RunConfig) -> RunConfig {
        let s = self.scenario;
        let f = file.scenario;
        RunConfig {
            input: pick(self.input, file.input),
            out: pick(self.out, file.out),
            format: pick(self.format, file.format),
            digits: pick(self.digits, file.digits),
            alpha: pick(self.alpha, file.alpha),
            taus: pick(self.taus, file.taus),
            storey_tau: pick(self.storey_tau, file.storey_tau),
            procedure: pick(self.procedure, file.procedure),
            experiment: pick(self.experiment, file.experiment),
            scenario: ScenarioConfig {
                m: pick(s.m, f.m),
                pi0: pick(s.pi0, f.pi0),
                n1: pick(s.n1, f.n1),
                n2: pick(s.n2, f.n2),
                effect: pick(s.effect, f.effect),
                base_rate: pick(s.base_rate, f.base_rate),
                reps: pick(s.reps, f.reps),
                seed: pick(s.seed, f.seed),
                margin_mode: pick(s.margin_mode, f.margin_mode),
            },
        }
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn digits(&self) -> Result<usize> {
        match self.digits.unwrap_or(DEFAULT_DIGITS) {
            d @ 1..=17 => Ok(d),
            d => Err(Error::config(format!("digits must be in 1..=17, got {d}"))),
        }
    }

    pub fn alpha(&self) -> Result<f64> {
        let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
        if alpha > 0.0 && alpha < 1.0 {
            Ok(alpha)
        } else {
            Err(Error::config(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )))
        }
    }

    pub fn storey_tau(&self) -> Result<f64> {
        let tau = self.storey_tau.unwrap_or(DEFAULT_STOREY_TAU);
        if tau > 0.0 && tau < 1.0 {
            Ok(tau)
        } else {
            Err(Error::config(format!(
                "storey_tau must lie in (0, 1), got {tau}"
            )))
        }
    }

    /// Parsed procedure tags; `default` when none are configured.
    pub fn procedures(&self, default: &[ProcedureTag]) -> Result<Vec<ProcedureTag>> {
        match &self.procedure {
            None => Ok(default.to_vec()),
            Some(tags) if tags.is_empty() => Err(Error::config("procedure list is empty")),
            Some(tags) => tags.iter().map(|t| t.parse()).collect(),
        }
    }

    pub fn scenario(&self) -> Result<SimScenario> {
        let d = SimScenario::default();
        let s = &self.scenario;
        let scenario = SimScenario {
            m: s.m.unwrap_or(d.m),
            pi0: s.pi0.unwrap_or(d.pi0),
            n1: s.n1.unwrap_or(d.n1),
            n2: s.n2.unwrap_or(d.n2),
            effect: s.effect.unwrap_or(d.effect),
            base_rate: s.base_rate.unwrap_or(d.base_rate),
            alpha: self.alpha()?,
            taus: self.taus.clone(),
            storey_tau: self.storey_tau()?,
            reps: s.reps.unwrap_or(d.reps),
            seed: s.seed.unwrap_or(d.seed),
            margin_mode: s.margin_mode.unwrap_or(d.margin_mode),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub const DEFAULT_DIGITS: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_STOREY_TAU: f64 = 0.5;
