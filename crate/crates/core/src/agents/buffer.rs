use serde::{Deserialize, Serialize};

use crate::fiscal::TaxSchedule;

/// One scored tax year: the schedule in force, the move that produced it, and
/// the year's mean welfare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub tax_year: u64,
    pub schedule: TaxSchedule,
    #[serde(default)]
    pub delta: Vec<f64>,
    pub swf: f64,
}

/// Planner memory of the best `capacity` tax years seen, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<BufferEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::with_capacity(capacity + 1) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&BufferEntry> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert, keep descending order, truncate. Earlier entries stay ahead of
    /// later ones with equal welfare. Non-finite welfare is ignored.
    pub fn insert(&mut self, entry: BufferEntry) {
        if !entry.swf.is_finite() || self.capacity == 0 {
            return;
        }
        let pos = self.entries.partition_point(|e| e.swf >= entry.swf);
        if pos >= self.capacity {
            return;
        }
        self.entries.insert(pos, entry);
        self.entries.truncate(self.capacity);
    }
}

/// Functional form of [`ReplayBuffer::insert`].
pub fn buffer_update(mut buffer: ReplayBuffer, schedule: TaxSchedule, swf: f64) -> ReplayBuffer {
    let tax_year = buffer.entries.iter().map(|e| e.tax_year + 1).max().unwrap_or(0);
    buffer.insert(BufferEntry { tax_year, schedule, delta: Vec::new(), swf });
    buffer
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(r: f64) -> TaxSchedule {
        TaxSchedule::flat(r).unwrap()
    }

    fn swfs(b: &ReplayBuffer) -> Vec<f64> {
        b.entries().iter().map(|e| e.swf).collect()
    }

    #[test]
    fn examples() {
        let b = buffer_update(ReplayBuffer::new(2), sched(0.1), 1.0);
        assert_eq!(swfs(&b), vec![1.0]);
        assert_eq!(b.best().unwrap().schedule, sched(0.1));

        let b = buffer_update(ReplayBuffer::new(2), sched(0.1), 3.0);
        let b = buffer_update(b, sched(0.2), 2.0);
        let same = buffer_update(b.clone(), sched(0.3), 1.0);
        assert_eq!(same, b);

        let b = buffer_update(b, sched(0.4), 4.0);
        assert_eq!(swfs(&b), vec![4.0, 3.0]);
        assert_eq!(b.entries()[0].schedule, sched(0.4));
        assert_eq!(b.entries()[1].schedule, sched(0.1));
    }

    #[test]
    fn equal_welfare_keeps_incumbent_first() {
        let b = buffer_update(ReplayBuffer::new(3), sched(0.1), 1.0);
        let b = buffer_update(b, sched(0.2), 1.0);
        assert_eq!(b.best().unwrap().schedule, sched(0.1));
    }

    proptest! {
        #[test]
        fn best_is_running_max(values in prop::collection::vec(-1e3f64..1e3, 1..40), h in 1usize..6) {
            let mut b = ReplayBuffer::new(h);
            let mut running = f64::NEG_INFINITY;
            let mut last_best = f64::NEG_INFINITY;
            for (i, v) in values.iter().enumerate() {
                b.insert(BufferEntry { tax_year: i as u64, schedule: sched(0.1), delta: vec![], swf: *v });
                running = running.max(*v);
                let best = b.best().unwrap().swf;
                prop_assert_eq!(best, running);
                prop_assert!(best >= last_best);
                last_best = best;
                prop_assert!(b.len() <= h);
                prop_assert!(swfs(&b).windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
