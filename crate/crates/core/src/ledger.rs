/// Instrumented count of optimizer-owned temporaries.
///
/// Counts live auxiliary reals (excluding the parameters and the scalar
/// projections) and live cached generator states. Only the peaks are reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MemoryLedger {
    live_floats: usize,
    peak_floats: usize,
    live_states: usize,
    peak_states: usize,
}

impl MemoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn acquire_floats(&mut self, n: usize) {
        self.live_floats += n;
        self.peak_floats = self.peak_floats.max(self.live_floats);
    }

    pub fn release_floats(&mut self, n: usize) {
        debug_assert!(n <= self.live_floats);
        self.live_floats -= n;
    }

    pub fn acquire_states(&mut self, n: usize) {
        self.live_states += n;
        self.peak_states = self.peak_states.max(self.live_states);
    }

    pub fn release_states(&mut self, n: usize) {
        debug_assert!(n <= self.live_states);
        self.live_states -= n;
    }

    pub fn peak_floats(&self) -> usize {
        self.peak_floats
    }

    pub fn peak_states(&self) -> usize {
        self.peak_states
    }

    pub fn live_floats(&self) -> usize {
        self.live_floats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peaks_are_monotone() {
        let mut l = MemoryLedger::new();
        l.acquire_floats(10);
        l.release_floats(10);
        l.acquire_floats(4);
        assert_eq!(l.peak_floats(), 10);
        assert_eq!(l.live_floats(), 4);
        l.acquire_floats(8);
        assert_eq!(l.peak_floats(), 12);
        l.acquire_states(3);
        l.release_states(3);
        assert_eq!(l.peak_states(), 3);
    }
}
