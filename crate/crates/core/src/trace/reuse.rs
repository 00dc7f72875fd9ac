use std::collections::HashMap;

use super::{LineId, Trace};

/// Forward reuse distances at cache-line granularity.
///
/// `distances[i] = Some(d)` means the line touched at `i` is next touched at
/// `i + d` and not in between; `None` means it is never touched again.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReuseProfile {
    distances: Vec<Option<usize>>,
}

impl ReuseProfile {
    pub fn distances(&self) -> &[Option<usize>] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<usize> {
        self.distances[index]
    }

    /// Index of the next access to the same line, if any.
    pub fn next_use(&self, index: usize) -> Option<usize> {
        self.distances[index].map(|d| index + d)
    }
}

pub fn reuse_profile(trace: &Trace) -> ReuseProfile {
    let lines: Vec<LineId> = trace.lines().collect();
    let mut next_seen: HashMap<LineId, usize> = HashMap::new();
    let mut distances = vec![None; lines.len()];
    for (i, &line) in lines.iter().enumerate().rev() {
        if let Some(next) = next_seen.insert(line, i) {
            distances[i] = Some(next - i);
        }
    }
    ReuseProfile { distances }
}
