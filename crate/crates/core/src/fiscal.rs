//! Tax schedules, lump-sum rebates, worker utilities and social welfare.
//!
//! Everything here is a pure function of its inputs. Money is `f64` dollars
//! per year; rates are fractions in `[0, 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to post-tax income before it is raised to `1 - eta`.
pub const CONSUMPTION_FLOOR: f64 = 1e-6;
/// Floor applied to pre-tax income when it is used as a welfare weight `1/z`.
pub const INCOME_FLOOR: f64 = 1e-6;
/// Largest single-bracket move the planner may make, in percentage points.
pub const MAX_DELTA_PP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FiscalError {
    #[error("income must be nonnegative, got {0}")]
    NegativeIncome(f64),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid utility parameters: {0}")]
    InvalidParams(String),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Deserialize)]
struct RawSchedule {
    thresholds: Vec<f64>,
    rates: Vec<f64>,
    #[serde(default)]
    rate_min: Option<f64>,
    #[serde(default)]
    rate_max: Option<f64>,
}

/// Piecewise-linear marginal tax schedule.
///
/// Bracket `j` covers `[thresholds[j], thresholds[j + 1])`; the last bracket is
/// unbounded above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct TaxSchedule {
    thresholds: Vec<f64>,
    rates: Vec<f64>,
    #[serde(skip_serializing_if = "is_default_min")]
    rate_min: f64,
    #[serde(skip_serializing_if = "is_default_max")]
    rate_max: f64,
}

fn is_default_min(x: &f64) -> bool {
    *x == TaxSchedule::DEFAULT_RATE_MIN
}

fn is_default_max(x: &f64) -> bool {
    *x == TaxSchedule::DEFAULT_RATE_MAX
}

impl TryFrom<RawSchedule> for TaxSchedule {
    type Error = FiscalError;

    fn try_from(raw: RawSchedule) -> Result<Self, Self::Error> {
        TaxSchedule::with_bounds(
            raw.thresholds,
            raw.rates,
            raw.rate_min.unwrap_or(Self::DEFAULT_RATE_MIN),
            raw.rate_max.unwrap_or(Self::DEFAULT_RATE_MAX),
        )
    }
}

impl TaxSchedule {
    pub const DEFAULT_RATE_MIN: f64 = 0.0;
    pub const DEFAULT_RATE_MAX: f64 = 0.99;

    pub fn new(thresholds: Vec<f64>, rates: Vec<f64>) -> Result<Self, FiscalError> {
        Self::with_bounds(thresholds, rates, Self::DEFAULT_RATE_MIN, Self::DEFAULT_RATE_MAX)
    }

    pub fn with_bounds(
        thresholds: Vec<f64>,
        rates: Vec<f64>,
        rate_min: f64,
        rate_max: f64,
    ) -> Result<Self, FiscalError> {
        let bad = |msg: String| Err(FiscalError::InvalidSchedule(msg));
        if thresholds.is_empty() {
            return bad("at least one bracket is required".into());
        }
        if thresholds.len() != rates.len() {
            return bad(format!(
                "{} thresholds but {} rates",
                thresholds.len(),
                rates.len()
            ));
        }
        if thresholds[0] != 0.0 {
            return bad(format!("first threshold must be 0, got {}", thresholds[0]));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return bad("thresholds must be finite".into());
        }
        if thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return bad("thresholds must be strictly increasing".into());
        }
        if !(rate_min.is_finite() && rate_max.is_finite() && rate_min <= rate_max) {
            return bad(format!("rate bounds [{rate_min}, {rate_max}] are invalid"));
        }
        if rate_max >= 1.0 {
            return bad(format!("rate_max must be < 1, got {rate_max}"));
        }
        if let Some(r) = rates.iter().find(|r| !(rate_min..=rate_max).contains(*r)) {
            return bad(format!("rate {r} outside [{rate_min}, {rate_max}]"));
        }
        Ok(Self { thresholds, rates, rate_min, rate_max })
    }

    /// Single bracket at `rate`.
    pub fn flat(rate: f64) -> Result<Self, FiscalError> {
        Self::new(vec![0.0], vec![rate])
    }

    /// Same thresholds, every bracket at `rate`.
    pub fn uniform(thresholds: Vec<f64>, rate: f64) -> Result<Self, FiscalError> {
        let n = thresholds.len();
        Self::new(thresholds, vec![rate; n])
    }

    /// 2024 U.S. federal brackets for a single filer.
    pub fn us_federal_2024() -> Self {
        Self::new(
            vec![0.0, 11_600.0, 47_150.0, 100_525.0, 191_950.0, 243_725.0, 609_350.0],
            vec![0.10, 0.12, 0.22, 0.24, 0.32, 0.35, 0.37],
        )
        .expect("statutory schedule is valid")
    }

    /// Thresholds of the simplified three-bracket system.
    pub fn three_bracket_thresholds() -> Vec<f64> {
        vec![0.0, 90_000.0, 160_000.0]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate_min(&self) -> f64 {
        self.rate_min
    }

    pub fn rate_max(&self) -> f64 {
        self.rate_max
    }

    pub fn num_brackets(&self) -> usize {
        self.rates.len()
    }

    /// Upper edge of bracket `j`, `None` for the top bracket.
    pub fn upper(&self, j: usize) -> Option<f64> {
        self.thresholds.get(j + 1).copied()
    }

    /// Index of the bracket containing `z`. A threshold income belongs to the
    /// bracket that starts there.
    pub fn bracket_of(&self, z: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= z).saturating_sub(1)
    }

    pub fn clamp_rate(&self, r: f64) -> f64 {
        r.clamp(self.rate_min, self.rate_max)
    }

    /// Copy with bracket `j` set to `rate` (clamped to the schedule bounds).
    pub fn with_rate(&self, j: usize, rate: f64) -> Self {
        let mut out = self.clone();
        out.rates[j] = self.clamp_rate(rate);
        out
    }

    /// Copy with all rates replaced (each clamped to the schedule bounds).
    pub fn with_rates(&self, rates: &[f64]) -> Result<Self, FiscalError> {
        if rates.len() != self.rates.len() {
            return Err(FiscalError::LengthMismatch { expected: self.rates.len(), got: rates.len() });
        }
        let mut out = self.clone();
        for (dst, r) in out.rates.iter_mut().zip(rates) {
            *dst = self.clamp_rate(*r);
        }
        Ok(out)
    }

    /// Integral of the marginal rates from 0 to `z`, without the sign check.
    pub(crate) fn tax_unchecked(&self, z: f64) -> f64 {
        let mut total = 0.0;
        for (j, &rate) in self.rates.iter().enumerate() {
            let lo = self.thresholds[j];
            if z <= lo {
                break;
            }
            let hi = self.upper(j).map_or(z, |u| u.min(z));
            total += rate * (hi - lo);
        }
        total
    }

    pub fn tax_due(&self, z: f64) -> Result<f64, FiscalError> {
        check_income(z)?;
        Ok(self.tax_unchecked(z))
    }

    pub fn marginal_rate(&self, z: f64) -> Result<f64, FiscalError> {
        check_income(z)?;
        Ok(self.rates[self.bracket_of(z)])
    }

    /// `tax_due(z) / z`, zero at `z = 0`.
    pub fn effective_rate(&self, z: f64) -> Result<f64, FiscalError> {
        check_income(z)?;
        Ok(if z > 0.0 { self.tax_unchecked(z) / z } else { 0.0 })
    }

    /// Tax owed at the lower edge of each bracket.
    pub fn cumulative_tax_at_thresholds(&self) -> Vec<f64> {
        self.thresholds.iter().map(|&t| self.tax_unchecked(t)).collect()
    }
}

fn check_income(z: f64) -> Result<(), FiscalError> {
    if z >= 0.0 {
        Ok(())
    } else {
        Err(FiscalError::NegativeIncome(z))
    }
}

pub fn tax_due(schedule: &TaxSchedule, z: f64) -> Result<f64, FiscalError> {
    schedule.tax_due(z)
}

pub fn marginal_rate(schedule: &TaxSchedule, z: f64) -> Result<f64, FiscalError> {
    schedule.marginal_rate(z)
}

/// Result of taxing a population and rebating the proceeds equally.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxOutcome {
    pub taxes: Vec<f64>,
    pub post_tax: Vec<f64>,
    pub total_tax: f64,
    pub rebate: f64,
}

pub fn apply_taxes(schedule: &TaxSchedule, incomes: &[f64]) -> Result<TaxOutcome, FiscalError> {
    if incomes.is_empty() {
        return Err(FiscalError::EmptyPopulation);
    }
    let taxes = incomes
        .iter()
        .map(|&z| schedule.tax_due(z))
        .collect::<Result<Vec<_>, _>>()?;
    let total_tax: f64 = taxes.iter().sum();
    let rebate = total_tax / incomes.len() as f64;
    let post_tax = incomes.iter().zip(&taxes).map(|(z, t)| z - t + rebate).collect();
    Ok(TaxOutcome { taxes, post_tax, total_tax, rebate })
}

/// Apply a planner move given in percentage points.
///
/// Each element is clipped to ±20 pp, added to its bracket's rate, and the
/// result clamped to the schedule's rate bounds. Thresholds are untouched.
pub fn apply_delta(schedule: &TaxSchedule, delta_pp: &[f64]) -> Result<TaxSchedule, FiscalError> {
    if delta_pp.len() != schedule.num_brackets() {
        return Err(FiscalError::LengthMismatch {
            expected: schedule.num_brackets(),
            got: delta_pp.len(),
        });
    }
    let rates: Vec<f64> = schedule
        .rates()
        .iter()
        .zip(delta_pp)
        .map(|(r, d)| {
            let d = if d.is_finite() { d.clamp(-MAX_DELTA_PP, MAX_DELTA_PP) } else { 0.0 };
            r + d / 100.0
        })
        .collect();
    schedule.with_rates(&rates)
}

/// Clip each element of a planner move to ±20 pp.
pub fn clip_delta(delta_pp: &[f64]) -> Vec<f64> {
    delta_pp.iter().map(|d| d.clamp(-MAX_DELTA_PP, MAX_DELTA_PP)).collect()
}

/// Isoelastic consumption utility minus power-law labor disutility, with an
/// optional dissatisfaction penalty for bounded workers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    /// Risk aversion; `eta = 1` (log utility) is not supported.
    pub eta: f64,
    /// Labor disutility scale.
    pub psi: f64,
    /// Labor disutility exponent, `> 1`.
    pub delta: f64,
    /// Dissatisfaction penalty.
    #[serde(default)]
    pub phi: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self { eta: 0.5, psi: 0.07, delta: 2.0, phi: 0.0 }
    }
}

impl UtilityParams {
    pub fn validate(&self) -> Result<(), FiscalError> {
        let bad = |m: String| Err(FiscalError::InvalidParams(m));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if (self.eta - 1.0).abs() < 1e-12 {
            return bad("eta = 1 (log utility) is not supported".into());
        }
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return bad(format!("psi must be >= 0, got {}", self.psi));
        }
        if !(self.delta > 1.0 && self.delta.is_finite()) {
            return bad(format!("delta must be > 1, got {}", self.delta));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be >= 0, got {}", self.phi));
        }
        Ok(())
    }

    /// `(c^(1-eta) - 1) / (1 - eta)` with `c` floored at [`CONSUMPTION_FLOOR`].
    #[inline]
    pub fn consumption_utility(&self, post_tax: f64) -> f64 {
        let c = post_tax.max(CONSUMPTION_FLOOR);
        let k = 1.0 - self.eta;
        (c.powf(k) - 1.0) / k
    }

    #[inline]
    pub fn labor_disutility(&self, labor: f64) -> f64 {
        self.psi * labor.max(0.0).powf(self.delta)
    }

    /// Isoelastic utility without validation; callers validate once up front.
    #[inline]
    pub fn isoelastic(&self, post_tax: f64, labor: f64) -> f64 {
        self.consumption_utility(post_tax) - self.labor_disutility(labor)
    }

    #[inline]
    pub fn bounded(&self, post_tax: f64, labor: f64, satisfied: bool) -> f64 {
        let penalty = if satisfied { 0.0 } else { self.phi };
        self.isoelastic(post_tax, labor) - penalty
    }
}

pub fn isoelastic_utility(post_tax: f64, labor: f64, params: &UtilityParams) -> Result<f64, FiscalError> {
    params.validate()?;
    if labor < 0.0 {
        return Err(FiscalError::InvalidParams(format!("labor must be >= 0, got {labor}")));
    }
    Ok(params.isoelastic(post_tax, labor))
}

pub fn bounded_utility(
    post_tax: f64,
    labor: f64,
    satisfied: bool,
    params: &UtilityParams,
) -> Result<f64, FiscalError> {
    Ok(isoelastic_utility(post_tax, labor, params)? - if satisfied { 0.0 } else { params.phi })
}

/// `sum_i u_i / max(z_i, floor)`.
pub fn social_welfare(incomes: &[f64], utilities: &[f64], income_floor: f64) -> Result<f64, FiscalError> {
    if incomes.len() != utilities.len() {
        return Err(FiscalError::LengthMismatch { expected: incomes.len(), got: utilities.len() });
    }
    if incomes.is_empty() {
        return Err(FiscalError::EmptyPopulation);
    }
    Ok(incomes
        .iter()
        .zip(utilities)
        .map(|(z, u)| u / z.max(income_floor))
        .sum())
}

/// Snapshot of one step's fiscal aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomySnapshot {
    pub step: u64,
    pub tax_year: u64,
    pub pre_tax_incomes: Vec<f64>,
    pub post_tax_incomes: Vec<f64>,
    pub total_tax: f64,
    pub rebate: f64,
    pub swf: f64,
}
