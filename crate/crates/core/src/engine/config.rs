//! Simulation configuration and dotted-key overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use taxsim_gateway::GatewayConfig;

use crate::agents::{PlannerPromptOptions, DEFAULT_HISTORY_WINDOW, DEFAULT_PARSE_ATTEMPTS, LABOR_BOUNDS};
use crate::fiscal::{TaxSchedule, UtilityParams};
use crate::population::{default_income_prior, Gb2Params, DEFAULT_REFERENCE_HOURS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    #[default]
    Isoelastic,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Governance {
    #[default]
    Fixed,
    Democratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkerKind {
    #[default]
    Rational,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlannerKind {
    /// Never changes the schedule.
    Static,
    #[default]
    Scripted,
    Llm,
}

/// Where worker skills come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PopulationSource {
    /// Incomes drawn from a GB2 prior.
    Gb2 { params: Gb2Params },
    /// Fit a GB2 to an income CSV, then draw from the fit.
    IncomeCsv { path: PathBuf },
    /// Explicit skills, one per worker.
    Skills { values: Vec<f64> },
}

impl Default for PopulationSource {
    fn default() -> Self {
        PopulationSource::Gb2 { params: default_income_prior() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_workers: usize,
    pub total_steps: u64,
    pub steps_per_year: u64,
    pub planner_update_period: u64,
    pub buffer_capacity: usize,
    pub labor_bounds: (f64, f64),
    pub thresholds: Vec<f64>,
    pub initial_rates: Vec<f64>,
    pub scenario: Scenario,
    pub governance: Governance,
    pub seed: u64,
    pub worker_kind: WorkerKind,
    pub planner_kind: PlannerKind,
    pub utility: UtilityParams,
    pub history_window: usize,
    /// Share of tax years spent exploring before the planner exploits.
    pub phase_switch: f64,
    pub prompt_options: PlannerPromptOptions,
    pub population: PopulationSource,
    pub reference_hours: f64,
    pub parse_attempts: u32,
    /// Absolute bound on the mean step-to-step utility change for a year to
    /// count as settled.
    pub convergence_tolerance: f64,
    /// Directory of prompt template overrides.
    pub prompts_dir: Option<PathBuf>,
    pub gateway: GatewayConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let us = TaxSchedule::us_federal_2024();
        Self {
            n_workers: 100,
            total_steps: 3000,
            steps_per_year: 128,
            planner_update_period: 128,
            buffer_capacity: 10,
            labor_bounds: LABOR_BOUNDS,
            thresholds: us.thresholds().to_vec(),
            initial_rates: us.rates().to_vec(),
            scenario: Scenario::default(),
            governance: Governance::default(),
            seed: 0,
            worker_kind: WorkerKind::default(),
            planner_kind: PlannerKind::default(),
            utility: UtilityParams::default(),
            history_window: DEFAULT_HISTORY_WINDOW,
            phase_switch: 0.5,
            prompt_options: PlannerPromptOptions::default(),
            population: PopulationSource::default(),
            reference_hours: DEFAULT_REFERENCE_HOURS,
            parse_attempts: DEFAULT_PARSE_ATTEMPTS,
            convergence_tolerance: 1e-6,
            prompts_dir: None,
            gateway: GatewayConfig::default(),
        }
    }
}

/// A config field that failed validation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.to_string(), message: message.into() }
}

impl SimConfig {
    /// The longer preset used by the tax-year-length ablation.
    pub fn long_preset() -> Self {
        Self { total_steps: 6000, ..Self::default() }
    }

    pub fn initial_schedule(&self) -> Result<TaxSchedule, ConfigError> {
        TaxSchedule::new(self.thresholds.clone(), self.initial_rates.clone())
            .map_err(|e| bad("initial_rates", e.to_string()))
    }

    pub fn num_years(&self) -> u64 {
        self.total_steps.div_ceil(self.steps_per_year.max(1))
    }

    /// Every problem found, in field order.
    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errs = Vec::new();
        if self.n_workers == 0 {
            errs.push(bad("n_workers", "must be at least 1"));
        }
        if self.steps_per_year == 0 {
            errs.push(bad("steps_per_year", "must be at least 1"));
        }
        if self.planner_update_period == 0 || self.planner_update_period > self.steps_per_year {
            errs.push(bad("planner_update_period", "must lie in [1, steps_per_year]"));
        } else if !self.steps_per_year.is_multiple_of(self.planner_update_period) {
            errs.push(bad("planner_update_period", "must divide steps_per_year"));
        }
        if self.total_steps < self.steps_per_year {
            errs.push(bad("total_steps", "must be at least steps_per_year"));
        }
        let (lo, hi) = self.labor_bounds;
        if !(lo >= LABOR_BOUNDS.0 && hi <= LABOR_BOUNDS.1 && lo < hi) {
            errs.push(bad("labor_bounds", format!("must satisfy 0 <= lo < hi <= 100, got ({lo}, {hi})")));
        }
        if let Err(e) = self.initial_schedule() {
            errs.push(e);
        }
        if let Err(e) = self.utility.validate() {
            errs.push(bad("utility", e.to_string()));
        }
        if self.history_window == 0 {
            errs.push(bad("history_window", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.phase_switch) {
            errs.push(bad("phase_switch", "must lie in [0, 1]"));
        }
        if let PopulationSource::Skills { values } = &self.population {
            if values.len() != self.n_workers {
                errs.push(bad("population.values", format!("{} skills for {} workers", values.len(), self.n_workers)));
            }
            if values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                errs.push(bad("population.values", "skills must be finite and >= 0"));
            }
        }
        if let PopulationSource::Gb2 { params } = &self.population {
            if let Err(e) = params.validate() {
                errs.push(bad("population.params", e.to_string()));
            }
        }
        if !(self.reference_hours > 0.0) {
            errs.push(bad("reference_hours", "must be > 0"));
        }
        if self.parse_attempts == 0 {
            errs.push(bad("parse_attempts", "must be at least 1"));
        }
        if !(self.convergence_tolerance > 0.0) {
            errs.push(bad("convergence_tolerance", "must be > 0"));
        }
        if let Err(e) = self.gateway.validate() {
            errs.push(bad("gateway", e));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Apply `key=value` overrides with dotted keys, e.g. `gateway.max_retries=5`.
    /// Values parse as JSON when they can and as strings otherwise.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(self).map_err(|e| bad("config", e.to_string()))?;
        for ov in overrides {
            let (key, raw) = ov.split_once('=').ok_or_else(|| bad(ov, "expected key=value"))?;
            set_dotted(&mut doc, key.trim(), raw.trim())?;
        }
        serde_json::from_value(doc).map_err(|e| bad("override", e.to_string()))
    }
}

fn set_dotted(doc: &mut serde_json::Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| bad(key, format!("'{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).ok_or_else(|| bad(key, format!("unknown field '{part}'")))?;
    }
    Err(bad(key, "empty key"))
}
