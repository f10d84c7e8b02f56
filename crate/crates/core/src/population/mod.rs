//! Income prior, skills and personas.

mod fit;
mod gb2;
mod ingest;
mod persona;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_gb2, gb2_loglik, Gb2Fit, MIN_FIT_SAMPLES};
pub use gb2::{
    empirical_quantile, gb2_cdf, gb2_pdf, gb2_quantile, gb2_sample, qq_correlation, qq_points, Gb2Params,
};
pub use ingest::{load_income_csv, read_incomes};
pub use persona::{assign_personas, builtin_personas, load_personas, Persona, SatisfactionRule};

/// Weekly hours at which a worker's skill reproduces its anchor income.
pub const DEFAULT_REFERENCE_HOURS: f64 = 40.0;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("invalid GB2 parameters: {0}")]
    InvalidParams(String),
    #[error("value {0} is outside the support (0, inf)")]
    OutOfSupport(f64),
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("all samples are equal")]
    Degenerate,
    #[error("no start of the likelihood search produced a finite fit")]
    FitFailed,
    #[error("persona library is empty")]
    EmptyLibrary,
    #[error("persona {id}: {reason}")]
    InvalidPersona { id: u32, reason: String },
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("skill inputs: {0}")]
    InvalidSkillInput(String),
}

/// A worker's hourly earning power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillProfile {
    pub skill: f64,
    pub reference_hours: f64,
}

/// `skill = income / reference_hours`, so that working the reference hours
/// reproduces the income.
pub fn skills_from_incomes(incomes: &[f64], reference_hours: f64) -> Result<Vec<SkillProfile>, PopulationError> {
    if !(reference_hours > 0.0 && reference_hours.is_finite()) {
        return Err(PopulationError::InvalidSkillInput(format!(
            "reference_hours must be positive, got {reference_hours}"
        )));
    }
    incomes
        .iter()
        .map(|&z| {
            if z > 0.0 && z.is_finite() {
                Ok(SkillProfile { skill: z / reference_hours, reference_hours })
            } else {
                Err(PopulationError::InvalidSkillInput(format!("income must be positive, got {z}")))
            }
        })
        .collect()
}

/// Income prior used when no calibration data is supplied.
pub fn default_income_prior() -> Gb2Params {
    Gb2Params { a: 3.0, b: 60_000.0, p: 0.8, q: 1.2 }
}
