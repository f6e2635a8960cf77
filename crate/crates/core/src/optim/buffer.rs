use std::collections::VecDeque;

use crate::ledger::MemoryLedger;
use crate::rng::RngState;
use crate::spsa::ProjectionRecord;

/// The last `h` projection records, newest last.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonBuffer {
    capacity: usize,
    records: VecDeque<ProjectionRecord>,
}

impl HorizonBuffer {
    pub fn new(horizon: usize) -> Self {
        assert!(horizon >= 1);
        Self {
            capacity: horizon,
            records: VecDeque::with_capacity(horizon),
        }
    }

    pub fn horizon(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record, evicting the oldest once the horizon is full.
    ///
    /// Panics if `record.step` does not exceed the newest step already held.
    pub fn push(&mut self, record: ProjectionRecord) {
        if let Some(last) = self.records.back() {
            assert!(
                record.step > last.step,
                "record steps must increase ({} after {})",
                record.step,
                last.step
            );
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    /// `tau`-th newest record, 1-based (`tau = 1` is the latest).
    pub fn newest(&self, tau: usize) -> Option<&ProjectionRecord> {
        self.records
            .len()
            .checked_sub(tau)
            .and_then(|i| self.records.get(i))
    }

    /// Oldest first.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &ProjectionRecord> + ExactSizeIterator {
        self.records.iter()
    }
}

/// `h x b` grid of generator states saved while reconstructing moments.
///
/// Entry `(tau_h, tau_b)` is the state of record `tau_h`'s stream right after
/// blocks `1..=tau_b` were generated. Indices are 0-based here.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateCache {
    rows: usize,
    cols: usize,
    states: Vec<Option<RngState>>,
}

impl StateCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears every entry and resizes to `rows x cols`, keeping the ledger in sync.
    pub fn reset(&mut self, rows: usize, cols: usize, ledger: &mut MemoryLedger) {
        let (old, new) = (self.states.len(), rows * cols);
        if new > old {
            ledger.acquire_states(new - old);
        } else {
            ledger.release_states(old - new);
        }
        self.rows = rows;
        self.cols = cols;
        self.states.clear();
        self.states.resize(new, None);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<RngState> {
        self.states.get(row * self.cols + col).copied().flatten()
    }

    pub fn set(&mut self, row: usize, col: usize, state: RngState) {
        assert!(row < self.rows && col < self.cols);
        self.states[row * self.cols + col] = Some(state);
    }

    /// Rows of the grid, for serialisation.
    pub fn to_rows(&self) -> Vec<Vec<Option<RngState>>> {
        if self.cols == 0 {
            return vec![Vec::new(); self.rows];
        }
        self.states.chunks(self.cols).map(|r| r.to_vec()).collect()
    }

    pub(crate) fn from_rows(grid: Vec<Vec<Option<RngState>>>) -> Option<Self> {
        let rows = grid.len();
        let cols = grid.first().map_or(0, Vec::len);
        if grid.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows,
            cols,
            states: grid.into_iter().flatten().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> ProjectionRecord {
        ProjectionRecord {
            step,
            seed: step * 10,
            projection: step as f64,
        }
    }

    #[test]
    fn buffer_truncates_to_horizon() {
        let mut b = HorizonBuffer::new(3);
        for s in 1..=5 {
            b.push(rec(s));
            assert!(b.len() <= 3);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.newest(1).unwrap().step, 5);
        assert_eq!(b.newest(3).unwrap().step, 3);
        assert!(b.newest(4).is_none());
        assert!(b.newest(0).is_none());
    }

    #[test]
    #[should_panic(expected = "must increase")]
    fn buffer_rejects_out_of_order() {
        let mut b = HorizonBuffer::new(3);
        b.push(rec(2));
        b.push(rec(2));
    }

    #[test]
    fn cache_grid_and_ledger() {
        let mut ledger = MemoryLedger::new();
        let mut c = StateCache::new();
        c.reset(2, 3, &mut ledger);
        assert_eq!(ledger.peak_states(), 6);
        assert_eq!(c.get(1, 2), None);
        c.set(1, 2, RngState::new(4).jump(9));
        assert_eq!(c.get(1, 2).unwrap().offset, 9);
        let rows = c.to_rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(StateCache::from_rows(rows).unwrap(), c);
        c.reset(1, 1, &mut ledger);
        assert_eq!(c.get(1, 2), None);
        assert_eq!(ledger.peak_states(), 6);
    }
}
