use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PopulationError;

const BUILTIN_LIBRARY: &str = include_str!("../../data/personas.json");

/// Thresholds a persona applies when judging its own tax situation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionRule {
    /// Largest acceptable average tax rate.
    pub max_effective_rate: f64,
    /// Smallest acceptable share of the next dollar kept.
    pub min_marginal_retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub id: u32,
    pub text: String,
    pub age: u32,
    pub occupation: String,
    pub income_anchor: f64,
    pub satisfaction_rule: SatisfactionRule,
}

impl Persona {
    pub fn validate(&self) -> Result<(), PopulationError> {
        let r = &self.satisfaction_rule;
        for (name, v) in [
            ("max_effective_rate", r.max_effective_rate),
            ("min_marginal_retention", r.min_marginal_retention),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PopulationError::InvalidPersona {
                    id: self.id,
                    reason: format!("{name} = {v} outside [0, 1]"),
                });
            }
        }
        if self.text.trim().is_empty() {
            return Err(PopulationError::InvalidPersona { id: self.id, reason: "empty text".into() });
        }
        Ok(())
    }
}

/// The eleven personas shipped with the crate.
pub fn builtin_personas() -> Vec<Persona> {
    serde_json::from_str(BUILTIN_LIBRARY).expect("bundled persona library parses")
}

pub fn load_personas(path: &Path) -> Result<Vec<Persona>, PopulationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PopulationError::Io { path: path.display().to_string(), source: e })?;
    let library: Vec<Persona> = serde_json::from_str(&text)
        .map_err(|e| PopulationError::Parse { line: e.line(), message: e.to_string() })?;
    for p in &library {
        p.validate()?;
    }
    Ok(library)
}

/// Draw `n` personas with replacement. Drawn copies get ids `0..n`.
pub fn assign_personas(n: usize, library: &[Persona], seed: u64) -> Result<Vec<Persona>, PopulationError> {
    if library.is_empty() {
        return Err(PopulationError::EmptyLibrary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let mut p = library[rng.gen_range(0..library.len())].clone();
            p.id = i as u32;
            p
        })
        .collect())
}
