use std::collections::HashMap;

use super::{EvictionPolicy, VictimContext};
use crate::error::{Error, Result};
use crate::trace::{reuse_profile, LineId, MemoryAccess, Trace};

/// Offline optimal replacement: evict the line whose next use is farthest away.
///
/// Lines that are never used again count as infinitely far; ties among them
/// go to the lowest line id.
#[derive(Debug, Clone)]
pub struct Belady {
    /// `next_use[i]`: index of the next access to the line touched at `i`.
    next_use: Vec<Option<usize>>,
    /// Next use of each line, as of the most recently observed access to it.
    pending: HashMap<LineId, Option<usize>>,
}

pub fn policy_belady(trace: &Trace) -> Belady {
    let profile = reuse_profile(trace);
    Belady {
        next_use: (0..trace.len()).map(|i| profile.next_use(i)).collect(),
        pending: HashMap::new(),
    }
}

impl Belady {
    pub fn next_use_of(&self, line: LineId) -> Option<usize> {
        self.pending.get(&line).copied().flatten()
    }
}

impl EvictionPolicy for Belady {
    fn name(&self) -> String {
        "belady".into()
    }

    fn prepare(&mut self, trace: &Trace) -> Result<()> {
        if trace.len() != self.next_use.len() {
            return Err(Error::InvalidInput(format!(
                "Bélády was built for a trace of {} accesses, got {}",
                self.next_use.len(),
                trace.len()
            )));
        }
        self.pending.clear();
        Ok(())
    }

    fn observe(&mut self, index: usize, _access: &MemoryAccess, line: LineId) {
        self.pending.insert(line, self.next_use[index]);
    }

    fn choose_victim(&mut self, ctx: &VictimContext<'_>) -> LineId {
        // None (never reused) sorts after every finite index.
        let key = |line: LineId| match self.next_use_of(line) {
            Some(i) => (0u8, i, std::cmp::Reverse(line)),
            None => (1u8, 0, std::cmp::Reverse(line)),
        };
        ctx.candidates()
            .max_by_key(|&l| key(l))
            .expect("victim set is never empty")
    }
}
