//! Summaries derived from a log, identical whether computed live or on replay.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::events::{EventLog, StepRecord};
use crate::fiscal::TaxSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSummary {
    pub tax_year: u64,
    pub first_step: u64,
    pub steps: u64,
    pub rates: Vec<f64>,
    pub mean_swf: f64,
    pub final_swf: f64,
    pub mean_labor: f64,
    /// Steps after the year's first step until utilities settled, `None` if
    /// they were still moving at year end.
    pub convergence_step: Option<u64>,
    /// Share of workers per bracket at the year's last step.
    pub bracket_shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_workers: usize,
    pub steps: u64,
    pub mean_swf: Option<f64>,
    pub final_year_mean_swf: Option<f64>,
    pub best_year_mean_swf: Option<f64>,
    pub policy_updates: usize,
    pub elections: usize,
    pub challenger_wins: usize,
    pub parse_failures: usize,
    pub years: Vec<YearSummary>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("year {0} is not in the log")]
    NoSuchYear(u64),
    #[error("moving-average window must be at least 1")]
    ZeroWindow,
    #[error("log has no header")]
    MissingHeader,
}

pub fn swf_series(log: &EventLog) -> Vec<f64> {
    log.steps().map(|s| s.swf).collect()
}

/// Trailing mean over up to `window` values.
pub fn swf_moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Offset from the first step of the year after which the mean step-to-step
/// utility change stays below `tolerance`.
fn settle_offset(steps: &[&StepRecord], tolerance: f64) -> Option<u64> {
    let mut last_bad = None;
    for (i, w) in steps.windows(2).enumerate() {
        let n = w[1].utilities.len().min(w[0].utilities.len()).max(1) as f64;
        let drift: f64 = w[1].utilities.iter().zip(&w[0].utilities).map(|(a, b)| a - b).sum::<f64>() / n;
        if !(drift.abs() < tolerance) {
            last_bad = Some(i + 1);
        }
    }
    match last_bad {
        Some(i) if i + 1 == steps.len() => None,
        Some(i) => Some(i as u64),
        None => Some(0),
    }
}

pub fn convergence_step(log: &EventLog, tax_year: u64, tolerance: f64) -> Result<Option<u64>, MetricsError> {
    let steps: Vec<&StepRecord> = log.steps().filter(|s| s.tax_year == tax_year).collect();
    if steps.is_empty() {
        return Err(MetricsError::NoSuchYear(tax_year));
    }
    Ok(settle_offset(&steps, tolerance))
}

fn bracket_shares(thresholds: &[f64], rec: &StepRecord) -> Vec<f64> {
    let mut counts = vec![0usize; thresholds.len()];
    for &z in &rec.pre_tax {
        let j = thresholds.partition_point(|&t| t <= z.max(0.0)).saturating_sub(1);
        counts[j] += 1;
    }
    let n = rec.pre_tax.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

pub fn summarize(log: &EventLog) -> Result<MetricsSummary, MetricsError> {
    if log.is_empty() {
        return Ok(MetricsSummary::default());
    }
    let header = log.header().ok_or(MetricsError::MissingHeader)?;
    let steps: Vec<&StepRecord> = log.steps().collect();
    let mut years = Vec::new();
    let mut start = 0;
    while start < steps.len() {
        let year = steps[start].tax_year;
        let end = start + steps[start..].iter().take_while(|s| s.tax_year == year).count();
        let chunk = &steps[start..end];
        let swf: Vec<f64> = chunk.iter().map(|s| s.swf).collect();
        let last = chunk[chunk.len() - 1];
        years.push(YearSummary {
            tax_year: year,
            first_step: chunk[0].step,
            steps: chunk.len() as u64,
            rates: chunk[0].rates.clone(),
            mean_swf: mean(&swf),
            final_swf: last.swf,
            mean_labor: mean(&last.labor),
            convergence_step: settle_offset(chunk, header.convergence_tolerance),
            bracket_shares: bracket_shares(&header.thresholds, last),
        });
        start = end;
    }
    let all: Vec<f64> = steps.iter().map(|s| s.swf).collect();
    Ok(MetricsSummary {
        n_workers: header.n_workers,
        steps: steps.len() as u64,
        mean_swf: (!all.is_empty()).then(|| mean(&all)),
        final_year_mean_swf: years.last().map(|y| y.mean_swf),
        best_year_mean_swf: years.iter().map(|y| y.mean_swf).reduce(f64::max),
        policy_updates: log.policies().count(),
        elections: log.elections().count(),
        challenger_wins: log.elections().filter(|e| e.winner_id != e.incumbent_id).count(),
        parse_failures: log.parse_failures().count(),
        years,
    })
}

/// Recompute the summary of a stored log.
pub fn replay(log: &EventLog) -> Result<MetricsSummary, MetricsError> {
    summarize(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportKind {
    /// `step,swf`
    Swf,
    /// `tax_year,bracket,threshold,share`
    Brackets,
    /// `tax_year,bracket,threshold,rate`
    Rates,
}

impl std::str::FromStr for ExportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "swf" => Ok(ExportKind::Swf),
            "brackets" => Ok(ExportKind::Brackets),
            "rates" => Ok(ExportKind::Rates),
            other => Err(format!("unknown export kind '{other}' (expected swf, brackets or rates)")),
        }
    }
}

pub fn export_csv<W: Write>(log: &EventLog, kind: ExportKind, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let thresholds = log.header().map(|h| h.thresholds.clone()).unwrap_or_default();
    match kind {
        ExportKind::Swf => {
            w.write_record(["step", "swf"])?;
            for s in log.steps() {
                w.write_record([s.step.to_string(), s.swf.to_string()])?;
            }
        }
        ExportKind::Brackets | ExportKind::Rates => {
            let last = if kind == ExportKind::Rates { "rate" } else { "share" };
            w.write_record(["tax_year", "bracket", "threshold", last])?;
            let summary = summarize(log).unwrap_or_default();
            for y in &summary.years {
                let values = if kind == ExportKind::Rates { &y.rates } else { &y.bracket_shares };
                for (j, v) in values.iter().enumerate() {
                    let t = thresholds.get(j).copied().unwrap_or(f64::NAN);
                    w.write_record([y.tax_year.to_string(), j.to_string(), t.to_string(), v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Schedule in force during each logged year.
pub fn year_schedules(log: &EventLog) -> Vec<(u64, TaxSchedule)> {
    let Some(h) = log.header() else { return Vec::new() };
    summarize(log)
        .map(|s| {
            s.years
                .iter()
                .filter_map(|y| TaxSchedule::new(h.thresholds.clone(), y.rates.clone()).ok().map(|t| (y.tax_year, t)))
                .collect()
        })
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::events::{Event, LogHeader, SCHEMA_VERSION};
    use crate::engine::{Governance, Scenario};

    fn log_with(utils: &[[f64; 2]], k: u64) -> EventLog {
        let mut log = EventLog::new(LogHeader {
            schema_version: SCHEMA_VERSION,
            n_workers: 2,
            total_steps: utils.len() as u64,
            steps_per_year: k,
            thresholds: vec![0.0, 100.0],
            seed: 0,
            scenario: Scenario::Isoelastic,
            governance: Governance::Fixed,
            convergence_tolerance: 1e-3,
        });
        for (t, u) in utils.iter().enumerate() {
            log.push(Event::Step(StepRecord {
                step: t as u64,
                tax_year: t as u64 / k,
                rates: vec![0.1, 0.2],
                labor: vec![1.0, 2.0],
                pre_tax: vec![50.0, 150.0],
                post_tax: vec![50.0, 150.0],
                utilities: u.to_vec(),
                satisfied: None,
                total_tax: 0.0,
                rebate: 0.0,
                swf: u[0] + u[1],
            }));
        }
        log
    }

    #[test]
    fn moving_average_of_constant_is_constant() {
        assert_eq!(swf_moving_average(&[2.5; 6], 3).unwrap(), vec![2.5; 6]);
        assert_eq!(swf_moving_average(&[1.0, 3.0, 5.0], 2).unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(swf_moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn constant_utilities_settle_at_year_start() {
        let log = log_with(&[[1.0, 2.0]; 8], 4);
        assert_eq!(convergence_step(&log, 0, 1e-3).unwrap(), Some(0));
        assert_eq!(convergence_step(&log, 1, 1e-3).unwrap(), Some(0));
        assert!(convergence_step(&log, 5, 1e-3).is_err());
    }

    #[test]
    fn settling_is_measured_from_last_large_move() {
        let u = [[0.0, 0.0], [1.0, 1.0], [1.5, 1.5], [1.5, 1.5], [1.5, 1.5]];
        let log = log_with(&u, 5);
        assert_eq!(convergence_step(&log, 0, 1e-3).unwrap(), Some(2));
        let moving = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert_eq!(convergence_step(&log_with(&moving, 3), 0, 1e-3).unwrap(), None);
    }

    #[test]
    fn summary_and_exports() {
        let log = log_with(&[[1.0, 2.0]; 8], 4);
        let s = summarize(&log).unwrap();
        assert_eq!(s.years.len(), 2);
        assert_eq!(s.years[0].bracket_shares, vec![0.5, 0.5]);
        assert_eq!(s.mean_swf, Some(3.0));
        assert_eq!(replay(&log).unwrap(), s);
        let mut buf = Vec::new();
        export_csv(&log, ExportKind::Swf, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,swf\n0,3\n"));
        assert_eq!(summarize(&EventLog::default()).unwrap(), MetricsSummary::default());
    }
}
