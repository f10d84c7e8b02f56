use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::buffer::{BufferEntry, ReplayBuffer};
use crate::fiscal::TaxSchedule;

pub const DEFAULT_HISTORY_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub labor: f64,
    pub utility: f64,
    /// Satisfaction verdict for the step, when the scenario has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satisfied: Option<bool>,
}

/// Bounded FIFO of a worker's recent steps, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn to_vec(&self) -> Vec<HistoryEntry> {
        self.entries.iter().copied().collect()
    }
}

/// What a worker sees before choosing its hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerObservation {
    pub pre_tax: f64,
    pub post_tax: f64,
    pub marginal_rate_at_income: f64,
    pub rebate: f64,
    pub history: Vec<HistoryEntry>,
}

impl WorkerObservation {
    /// Tax actually paid, recovered from incomes and rebate.
    pub fn tax_paid(&self) -> f64 {
        self.pre_tax - self.post_tax + self.rebate
    }

    /// Average tax rate, zero at zero income.
    pub fn effective_rate(&self) -> f64 {
        if self.pre_tax > 0.0 {
            self.tax_paid() / self.pre_tax
        } else {
            0.0
        }
    }
}

/// What the planner sees when proposing a move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerObservation {
    pub schedule: TaxSchedule,
    /// Workers per bracket.
    pub income_histogram: Vec<u64>,
    /// Mean utility per bracket, zero for empty brackets.
    pub utility_histogram: Vec<f64>,
    pub swf_moving_average: f64,
    /// Year-mean welfare of recent years, oldest first.
    pub recent_swf: Vec<f64>,
    pub best_trajectories: Vec<BufferEntry>,
}

impl PlannerObservation {
    pub fn build(
        schedule: &TaxSchedule,
        incomes: &[f64],
        utilities: &[f64],
        swf_moving_average: f64,
        recent_swf: Vec<f64>,
        buffer: &ReplayBuffer,
    ) -> Self {
        let (income_histogram, utility_histogram) = bracket_histograms(schedule, incomes, utilities);
        Self {
            schedule: schedule.clone(),
            income_histogram,
            utility_histogram,
            swf_moving_average,
            recent_swf,
            best_trajectories: buffer.entries().to_vec(),
        }
    }
}

/// Per-bracket worker counts and mean utilities.
pub fn bracket_histograms(schedule: &TaxSchedule, incomes: &[f64], utilities: &[f64]) -> (Vec<u64>, Vec<f64>) {
    let b = schedule.num_brackets();
    let mut counts = vec![0u64; b];
    let mut sums = vec![0.0; b];
    for (z, u) in incomes.iter().zip(utilities) {
        let j = schedule.bracket_of(z.max(0.0));
        counts[j] += 1;
        sums[j] += u;
    }
    let means = counts
        .iter()
        .zip(&sums)
        .map(|(&c, &s)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    (counts, means)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_drops_oldest() {
        let mut w = HistoryWindow::new(2);
        for k in 0..5 {
            w.push(HistoryEntry { labor: k as f64, utility: 0.0, satisfied: None });
            assert!(w.len() <= 2);
        }
        let labors: Vec<f64> = w.iter().map(|e| e.labor).collect();
        assert_eq!(labors, vec![3.0, 4.0]);
    }

    #[test]
    fn histograms_have_one_bucket_per_bracket() {
        let s = TaxSchedule::new(vec![0.0, 10.0, 20.0], vec![0.1, 0.2, 0.3]).unwrap();
        let (c, m) = bracket_histograms(&s, &[5.0, 10.0, 15.0, 50.0], &[1.0, 2.0, 4.0, 8.0]);
        assert_eq!(c, vec![1, 2, 1]);
        assert_eq!(m, vec![1.0, 3.0, 8.0]);
    }

    #[test]
    fn effective_rate_from_observation() {
        let obs = WorkerObservation {
            pre_tax: 100.0,
            post_tax: 90.0,
            marginal_rate_at_income: 0.3,
            rebate: 10.0,
            history: vec![],
        };
        assert!((obs.effective_rate() - 0.2).abs() < 1e-12);
        let zero = WorkerObservation { pre_tax: 0.0, post_tax: 5.0, rebate: 5.0, ..obs };
        assert_eq!(zero.effective_rate(), 0.0);
    }
}
