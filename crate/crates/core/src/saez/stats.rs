//! Sample statistics feeding the optimal-rate formulas.

use serde::{Deserialize, Serialize};

use super::SaezError;
use crate::fiscal::TaxSchedule;

/// Sorted sample with a step CDF and a log-scale kernel density.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalIncomeDist {
    sorted: Vec<f64>,
    log_positive: Vec<f64>,
    bandwidth: f64,
}

impl EmpiricalIncomeDist {
    pub fn new(incomes: &[f64]) -> Result<Self, SaezError> {
        if incomes.iter().any(|z| !z.is_finite()) {
            return Err(SaezError::NonFinite("income"));
        }
        let mut sorted: Vec<f64> = incomes.iter().map(|z| z.max(0.0)).collect();
        sorted.sort_by(f64::total_cmp);
        let log_positive: Vec<f64> = sorted.iter().filter(|&&z| z > 0.0).map(|z| z.ln()).collect();
        if log_positive.is_empty() {
            return Err(SaezError::EmptyDistribution);
        }
        let bandwidth = silverman(&log_positive);
        Ok(Self { sorted, log_positive, bandwidth })
    }

    pub fn sorted_incomes(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Kernel bandwidth on log income.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Share of incomes at or below `z`.
    pub fn cdf(&self, z: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= z) as f64 / self.sorted.len() as f64
    }

    /// Number of incomes at or above `z`.
    pub fn count_above(&self, z: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&x| x < z)
    }

    /// Mean of incomes at or above `z`, `None` if there are none.
    pub fn mean_above(&self, z: f64) -> Option<f64> {
        let start = self.sorted.partition_point(|&x| x < z);
        let tail = &self.sorted[start..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// Density in income units. The kernel runs on log income, so the result
    /// is divided by `z`; zero incomes carry no density.
    pub fn density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let y = z.ln();
        let b = self.bandwidth;
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * b * self.sorted.len() as f64);
        let sum: f64 = self
            .log_positive
            .iter()
            .map(|&yi| {
                let u = (y - yi) / b;
                (-0.5 * u * u).exp()
            })
            .sum();
        norm * sum / z
    }
}

fn silverman(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q = |u: f64| crate::population::empirical_quantile(xs, u);
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    let b = 0.9 * spread * n.powf(-0.2);
    if b > 0.0 {
        b
    } else {
        // all incomes equal: any small positive width keeps the density finite
        0.1
    }
}

/// Local tail thickness `z h(z) / (1 - H(z))`.
pub fn pareto_parameter(z: f64, dist: &EmpiricalIncomeDist) -> Result<f64, SaezError> {
    if !z.is_finite() || z <= 0.0 {
        return Err(SaezError::OutOfSupport(z));
    }
    let survival = 1.0 - dist.cdf(z);
    if survival <= 0.0 {
        return Err(SaezError::OutOfSupport(z));
    }
    Ok(z * dist.density(z) / survival)
}

/// Incomes of the same workers under a baseline schedule and one where a
/// single bracket's rate moved by `dtau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRun {
    pub baseline_schedule: TaxSchedule,
    pub baseline_incomes: Vec<f64>,
    pub perturbed_schedule: TaxSchedule,
    pub perturbed_incomes: Vec<f64>,
    pub dtau: f64,
}

/// Elasticity of mean income in bracket `j` with respect to the net-of-tax
/// rate. Workers stay in the bracket they occupied at baseline.
pub fn estimate_elasticity(run: &PerturbationRun, j: usize) -> Result<f64, SaezError> {
    let sched = &run.baseline_schedule;
    if j >= sched.num_brackets() {
        return Err(SaezError::NoSuchBracket(j));
    }
    if run.baseline_incomes.len() != run.perturbed_incomes.len() {
        return Err(SaezError::LengthMismatch {
            incomes: run.baseline_incomes.len(),
            weights: run.perturbed_incomes.len(),
        });
    }
    if run.dtau == 0.0 {
        return Err(SaezError::ZeroPerturbation);
    }
    if !run.dtau.is_finite() {
        return Err(SaezError::NonFinite("dtau"));
    }
    let tau = sched.rates()[j];
    let (keep0, keep1) = (1.0 - tau, 1.0 - tau - run.dtau);
    if keep0 <= 0.0 || keep1 <= 0.0 {
        return Err(SaezError::NonPositiveRetention);
    }
    let (mut base, mut pert, mut n) = (0.0, 0.0, 0usize);
    for (z0, z1) in run.baseline_incomes.iter().zip(&run.perturbed_incomes) {
        if sched.bracket_of(*z0) == j {
            base += z0;
            pert += z1;
            n += 1;
        }
    }
    if n == 0 || base <= 0.0 || pert <= 0.0 {
        return Err(SaezError::EmptyBracket(j));
    }
    Ok((pert.ln() - base.ln()) / (keep1.ln() - keep0.ln()))
}

/// Per-bracket terms of the piecewise-linear optimal-rate condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketStats {
    pub welfare_effect: f64,
    pub mechanical_effect: f64,
    pub behavioral_base: f64,
    pub welfare_ratio: f64,
    pub tail_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elasticity: Option<f64>,
}

pub fn bracket_statistics(
    incomes: &[f64],
    weights: &[f64],
    schedule: &TaxSchedule,
    j: usize,
) -> Result<BracketStats, SaezError> {
    if incomes.len() != weights.len() {
        return Err(SaezError::LengthMismatch { incomes: incomes.len(), weights: weights.len() });
    }
    if j >= schedule.num_brackets() {
        return Err(SaezError::NoSuchBracket(j));
    }
    if incomes.is_empty() {
        return Err(SaezError::NoMass(j));
    }
    let lo = schedule.thresholds()[j];
    let hi = schedule.upper(j);
    let total_weight: f64 = weights.iter().sum();
    if !(total_weight > 0.0) {
        return Err(SaezError::NonFinite("weights"));
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (&z, &g) in incomes.iter().zip(weights) {
        if z < lo {
            continue;
        }
        match hi {
            Some(h) if z >= h => {
                a += g * (h - lo);
                b += h - lo;
            }
            _ => {
                a += g * (z - lo);
                b += z - lo;
                c += z;
            }
        }
    }
    if b <= 0.0 {
        return Err(SaezError::NoMass(j));
    }
    let n = incomes.len() as f64;
    let (a, b, c) = (a / total_weight, b / n, c / n);
    Ok(BracketStats {
        welfare_effect: a,
        mechanical_effect: b,
        behavioral_base: c,
        welfare_ratio: a / b,
        tail_ratio: c / b,
        elasticity: None,
    })
}

/// Welfare and tail ratios of the smooth nonlinear schedule at income `z`.
pub fn nonlinear_statistics(
    z: f64,
    incomes: &[f64],
    weights: &[f64],
    dist: &EmpiricalIncomeDist,
) -> Result<(f64, f64), SaezError> {
    if incomes.len() != weights.len() {
        return Err(SaezError::LengthMismatch { incomes: incomes.len(), weights: weights.len() });
    }
    let total_weight: f64 = weights.iter().sum();
    let above: f64 = incomes.iter().zip(weights).filter(|(zi, _)| **zi >= z).map(|(_, g)| g).sum();
    let survival = dist.count_above(z) as f64 / dist.len() as f64;
    if survival <= 0.0 {
        return Err(SaezError::OutOfSupport(z));
    }
    let welfare = above / total_weight;
    let base = z * dist.density(z);
    Ok((welfare / survival, base / survival))
}

/// `(1 - G) / (1 - G + alpha e)`, clamped to `bounds`.
pub fn saez_rate(welfare_ratio: f64, tail_ratio: f64, elasticity: f64, bounds: (f64, f64)) -> Result<f64, SaezError> {
    if !welfare_ratio.is_finite() {
        return Err(SaezError::NonFinite("welfare ratio"));
    }
    if !tail_ratio.is_finite() {
        return Err(SaezError::NonFinite("tail ratio"));
    }
    if !elasticity.is_finite() {
        return Err(SaezError::NonFinite("elasticity"));
    }
    let num = 1.0 - welfare_ratio;
    let den = num + tail_ratio * elasticity;
    if den == 0.0 {
        return Err(SaezError::ZeroDenominator);
    }
    Ok((num / den).clamp(bounds.0, bounds.1))
}
