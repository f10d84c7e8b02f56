//! Damped Saez fixed point and the brute-force searches used to check it.

use serde::{Deserialize, Serialize};

use super::economy::{Economy, Outcome};
use super::stats::{bracket_statistics, estimate_elasticity, saez_rate, PerturbationRun};
use super::SaezError;
use crate::fiscal::TaxSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaezOptions {
    pub dtau: f64,
    pub damping: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for SaezOptions {
    fn default() -> Self {
        Self { dtau: 0.01, damping: 0.5, max_iters: 100, tolerance: 1e-3 }
    }
}

/// One iterate of the fixed point. Bracket entries are `None` when the
/// bracket held nobody and its rate was left alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaezIteration {
    pub iteration: usize,
    pub rates: Vec<f64>,
    pub swf: f64,
    pub elasticities: Vec<Option<f64>>,
    pub welfare_ratios: Vec<Option<f64>>,
    pub tail_ratios: Vec<Option<f64>>,
    pub targets: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaezReport {
    pub converged: bool,
    pub initial_swf: f64,
    pub best_schedule: TaxSchedule,
    pub best_swf: f64,
    pub final_schedule: TaxSchedule,
    pub iterations: Vec<SaezIteration>,
}

impl SaezReport {
    pub fn swf_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.swf).collect()
    }
}

/// Nudge bracket `j` by `dtau`, or by `-dtau` when that would leave the
/// allowed range.
fn perturbed(schedule: &TaxSchedule, j: usize, dtau: f64) -> (TaxSchedule, f64) {
    let r = schedule.rates()[j];
    let step = if r + dtau <= schedule.rate_max() { dtau } else { -dtau };
    let mut out = schedule.clone();
    // with_rate clamps, so recompute the step that actually happened
    out = out.with_rate(j, r + step);
    let actual = out.rates()[j] - r;
    (out, actual)
}

pub fn solve_piecewise_saez(
    economy: &Economy,
    init: &TaxSchedule,
    options: &SaezOptions,
) -> Result<SaezReport, SaezError> {
    if !(options.dtau.is_finite() && options.dtau != 0.0) {
        return Err(SaezError::ZeroPerturbation);
    }
    let bounds = (init.rate_min(), init.rate_max());
    let nb = init.num_brackets();
    let mut schedule = init.clone();
    let mut iterations = Vec::new();
    let mut best: Option<(TaxSchedule, f64)> = None;
    let mut converged = false;

    for it in 0..options.max_iters.max(1) {
        let mut batch = vec![schedule.clone()];
        let mut steps = Vec::with_capacity(nb);
        for j in 0..nb {
            let (s, d) = perturbed(&schedule, j, options.dtau);
            batch.push(s);
            steps.push(d);
        }
        let outcomes = economy.evaluate_many(&batch);
        let base: &Outcome = &outcomes[0];
        if best.as_ref().is_none_or(|(_, w)| base.swf > *w) {
            best = Some((schedule.clone(), base.swf));
        }
        let weights = economy.welfare_weights(base);

        let mut entry = SaezIteration {
            iteration: it,
            rates: schedule.rates().to_vec(),
            swf: base.swf,
            elasticities: vec![None; nb],
            welfare_ratios: vec![None; nb],
            tail_ratios: vec![None; nb],
            targets: vec![None; nb],
        };
        let mut next = schedule.rates().to_vec();
        for j in 0..nb {
            let run = PerturbationRun {
                baseline_schedule: schedule.clone(),
                baseline_incomes: base.incomes.clone(),
                perturbed_schedule: batch[j + 1].clone(),
                perturbed_incomes: outcomes[j + 1].incomes.clone(),
                dtau: steps[j],
            };
            let e = estimate_elasticity(&run, j).ok();
            let stats = bracket_statistics(&base.incomes, &weights, &schedule, j).ok();
            entry.elasticities[j] = e;
            entry.welfare_ratios[j] = stats.map(|s| s.welfare_ratio);
            entry.tail_ratios[j] = stats.map(|s| s.tail_ratio);
            if let (Some(e), Some(s)) = (e, stats) {
                if let Ok(target) = saez_rate(s.welfare_ratio, s.tail_ratio, e, bounds) {
                    entry.targets[j] = Some(target);
                    next[j] = (1.0 - options.damping) * next[j] + options.damping * target;
                }
            }
        }
        let change = next.iter().zip(schedule.rates()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        tracing::debug!(iteration = it, swf = base.swf, change, "saez iterate");
        iterations.push(entry);
        if change < options.tolerance {
            converged = true;
            break;
        }
        schedule = schedule.with_rates(&next).expect("same bracket count");
    }

    let (best_schedule, best_swf) = best.expect("at least one iterate");
    Ok(SaezReport {
        converged,
        initial_swf: iterations[0].swf,
        best_schedule,
        best_swf,
        final_schedule: schedule,
        iterations,
    })
}

/// Every flat rate on `{0, step, 2 step, ...} ∩ [0, 0.99]`; ties go to the
/// lower rate.
pub fn brute_force_flat_tax(economy: &Economy, grid_step: f64) -> Result<(f64, f64), SaezError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(SaezError::InvalidGrid);
    }
    let max = TaxSchedule::DEFAULT_RATE_MAX;
    let count = ((max / grid_step) + 1e-9).floor() as usize;
    let rates: Vec<f64> = (0..=count).map(|k| k as f64 * grid_step).collect();
    let schedules: Vec<TaxSchedule> =
        rates.iter().map(|&r| TaxSchedule::flat(r).expect("grid stays in range")).collect();
    let swfs = economy.swf_many(&schedules);
    let mut best = (rates[0], swfs[0]);
    for (&r, &w) in rates.iter().zip(&swfs).skip(1) {
        if w > best.1 {
            best = (r, w);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub schedule: TaxSchedule,
    pub swf: f64,
    pub initial_swf: f64,
    pub evaluations: usize,
}

/// One coordinate sweep: bracket by bracket, try each offset (percentage
/// points) around the current rate and keep the best. A candidate must beat
/// the current rate strictly.
pub fn grid_perturb_search(
    init: &TaxSchedule,
    economy: &Economy,
    grid_pp: &[f64],
) -> Result<GridSearchResult, SaezError> {
    if grid_pp.is_empty() || grid_pp.iter().any(|g| !g.is_finite()) {
        return Err(SaezError::InvalidGrid);
    }
    let mut schedule = init.clone();
    let mut swf = economy.swf(&schedule);
    let initial_swf = swf;
    let mut evaluations = 1;
    for j in 0..schedule.num_brackets() {
        let current = schedule.rates()[j];
        let candidates: Vec<TaxSchedule> =
            grid_pp.iter().map(|off| schedule.with_rate(j, current + off / 100.0)).collect();
        let scores = economy.swf_many(&candidates);
        evaluations += candidates.len();
        let mut pick = None;
        for (k, &w) in scores.iter().enumerate() {
            if w > swf {
                swf = w;
                pick = Some(k);
            }
        }
        if let Some(k) = pick {
            schedule = candidates[k].clone();
        }
    }
    Ok(GridSearchResult { schedule, swf, initial_swf, evaluations })
}

/// Repeat sweeps until one leaves the schedule unchanged.
pub fn grid_perturb_converge(
    init: &TaxSchedule,
    economy: &Economy,
    grid_pp: &[f64],
    max_sweeps: usize,
) -> Result<GridSearchResult, SaezError> {
    let mut res = grid_perturb_search(init, economy, grid_pp)?;
    let initial_swf = res.initial_swf;
    let mut evaluations = res.evaluations;
    for _ in 1..max_sweeps {
        let next = grid_perturb_search(&res.schedule, economy, grid_pp)?;
        evaluations += next.evaluations;
        let moved = next.schedule != res.schedule;
        res = next;
        if !moved {
            break;
        }
    }
    Ok(GridSearchResult { initial_swf, evaluations, ..res })
}
