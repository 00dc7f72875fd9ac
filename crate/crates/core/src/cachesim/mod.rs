//! Set-associative cache simulation with pluggable replacement policies.
//!
//! Lines map to set `line mod num_sets`. A miss in a set with a free way fills
//! it without consulting the policy; a miss in a full set asks the policy for
//! a victim, which must be resident in that set.

mod belady;
mod lru;
mod phase_freq;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{check_line_size, LineId, MemoryAccess, Trace, DEFAULT_LINE_SIZE};

pub use belady::{policy_belady, Belady};
pub use lru::{policy_lru, Lru};
pub use phase_freq::{policy_phase_freq, PhaseFrequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub total_lines: usize,
    pub associativity: usize,
    pub line_size: u64,
}

impl Default for CacheConfig {
    /// 64 sets of 16 ways with 64-byte lines.
    fn default() -> Self {
        Self {
            total_lines: 64 * 16,
            associativity: 16,
            line_size: DEFAULT_LINE_SIZE,
        }
    }
}

impl CacheConfig {
    pub fn new(total_lines: usize, associativity: usize, line_size: u64) -> Result<Self> {
        let config = Self {
            total_lines,
            associativity,
            line_size,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn fully_associative(total_lines: usize, line_size: u64) -> Result<Self> {
        Self::new(total_lines, total_lines, line_size)
    }

    pub fn validate(&self) -> Result<()> {
        check_line_size(self.line_size)?;
        if self.total_lines == 0 || self.associativity == 0 {
            return Err(Error::InvalidConfig(
                "cache must have at least one line and one way".into(),
            ));
        }
        if !self.total_lines.is_multiple_of(self.associativity) {
            return Err(Error::InvalidConfig(format!(
                "total_lines {} is not divisible by associativity {}",
                self.total_lines, self.associativity
            )));
        }
        if !self.num_sets().is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "number of sets {} is not a power of two",
                self.num_sets()
            )));
        }
        Ok(())
    }

    pub fn num_sets(&self) -> usize {
        self.total_lines / self.associativity
    }

    pub fn set_of(&self, line: LineId) -> usize {
        (line % self.num_sets() as u64) as usize
    }
}

/// A line occupying a way, with the bookkeeping policies may consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidentLine {
    pub line: LineId,
    /// Trace index of the most recent access (hit or fill).
    pub last_access: usize,
    /// Trace index at which the line was filled.
    pub inserted: usize,
}

/// What a policy sees when it must pick a victim.
#[derive(Debug, Clone, Copy)]
pub struct VictimContext<'a> {
    pub index: usize,
    pub access: MemoryAccess,
    /// Line being filled.
    pub line: LineId,
    pub set: usize,
    /// Current contents of the set, in way order. Always full.
    pub residents: &'a [ResidentLine],
}

impl VictimContext<'_> {
    pub fn candidates(&self) -> impl Iterator<Item = LineId> + '_ {
        self.residents.iter().map(|r| r.line)
    }
}

/// A replacement policy.
pub trait EvictionPolicy {
    fn name(&self) -> String;

    /// Called once before a run; rejects traces the policy cannot serve.
    fn prepare(&mut self, _trace: &Trace) -> Result<()> {
        Ok(())
    }

    /// Called for every access, before the cache is looked up.
    fn observe(&mut self, _index: usize, _access: &MemoryAccess, _line: LineId) {}

    /// Names the line to evict. Must be one of `ctx.residents`.
    fn choose_victim(&mut self, ctx: &VictimContext<'_>) -> LineId;
}

impl<P: EvictionPolicy + ?Sized> EvictionPolicy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn prepare(&mut self, trace: &Trace) -> Result<()> {
        (**self).prepare(trace)
    }
    fn observe(&mut self, index: usize, access: &MemoryAccess, line: LineId) {
        (**self).observe(index, access, line)
    }
    fn choose_victim(&mut self, ctx: &VictimContext<'_>) -> LineId {
        (**self).choose_victim(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eviction {
    pub index: usize,
    pub victim: LineId,
    /// Set contents at the time of the decision, in way order.
    pub candidates: Vec<LineId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub policy: String,
    pub config: CacheConfig,
    pub outcomes: Vec<bool>,
    pub evictions: Vec<Eviction>,
}

/// Key-value summary of a run, serialized next to the per-access CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub policy: String,
    pub total_lines: usize,
    pub associativity: usize,
    pub num_sets: usize,
    pub line_size: u64,
    pub accesses: usize,
    pub hits: usize,
    pub misses: usize,
    pub evictions: usize,
    pub hit_rate: f64,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.outcomes.iter().filter(|&&h| h).count()
    }

    pub fn misses(&self) -> usize {
        self.len() - self.hits()
    }

    pub fn hit_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.hits() as f64 / self.len() as f64
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            policy: self.policy.clone(),
            total_lines: self.config.total_lines,
            associativity: self.config.associativity,
            num_sets: self.config.num_sets(),
            line_size: self.config.line_size,
            accesses: self.len(),
            hits: self.hits(),
            misses: self.misses(),
            evictions: self.evictions.len(),
            hit_rate: self.hit_rate(),
        }
    }

    /// Writes `index,pc,address,hit` rows for the trace this result came from.
    pub fn write_csv<W: Write>(&self, trace: &Trace, mut out: W) -> Result<()> {
        if trace.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "trace has {} accesses but the result covers {}",
                trace.len(),
                self.len()
            )));
        }
        let mut buf = String::with_capacity(self.len() * 28 + 24);
        buf.push_str("index,pc,address,hit\n");
        for (i, (a, &hit)) in trace.accesses().iter().zip(&self.outcomes).enumerate() {
            use std::fmt::Write as _;
            let _ = writeln!(buf, "{i},{:#x},{:#x},{}", a.pc, a.address, hit as u8);
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Runs `policy` over `trace`.
pub fn simulate<P>(trace: &Trace, config: &CacheConfig, policy: &mut P) -> Result<SimResult>
where
    P: EvictionPolicy + ?Sized,
{
    config.validate()?;
    if trace.line_size() != config.line_size {
        return Err(Error::InvalidConfig(format!(
            "trace line size {} differs from cache line size {}",
            trace.line_size(),
            config.line_size
        )));
    }
    policy.prepare(trace)?;

    let ways = config.associativity;
    let mut sets: Vec<Vec<ResidentLine>> = vec![Vec::with_capacity(ways); config.num_sets()];
    let mut where_is: HashMap<LineId, usize> = HashMap::new();
    let mut outcomes = Vec::with_capacity(trace.len());
    let mut evictions = Vec::new();

    for (index, access) in trace.accesses().iter().enumerate() {
        let line = trace.line(index);
        policy.observe(index, access, line);
        let set_idx = config.set_of(line);
        let set = &mut sets[set_idx];

        if let Some(&way) = where_is.get(&line) {
            set[way].last_access = index;
            outcomes.push(true);
            continue;
        }
        outcomes.push(false);
        let fresh = ResidentLine {
            line,
            last_access: index,
            inserted: index,
        };
        if set.len() < ways {
            where_is.insert(line, set.len());
            set.push(fresh);
            continue;
        }

        let victim = policy.choose_victim(&VictimContext {
            index,
            access: *access,
            line,
            set: set_idx,
            residents: set,
        });
        let way = set.iter().position(|r| r.line == victim).ok_or_else(|| {
            Error::Contract(format!(
                "policy `{}` chose line {victim:#x} at index {index}, which is not resident in set {set_idx}",
                policy.name()
            ))
        })?;
        evictions.push(Eviction {
            index,
            victim,
            candidates: set.iter().map(|r| r.line).collect(),
        });
        where_is.remove(&victim);
        where_is.insert(line, way);
        set[way] = fresh;
    }

    Ok(SimResult {
        policy: policy.name(),
        config: *config,
        outcomes,
        evictions,
    })
}

/// Rolling mean of hit flags: entry `i` averages `max(0, i-window+1)..=i`.
pub fn rolling_hit_rate(result: &SimResult, window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidInput("rolling window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(result.len());
    let mut sum = 0usize;
    for (i, &hit) in result.outcomes.iter().enumerate() {
        sum += hit as usize;
        if i >= window {
            sum -= result.outcomes[i - window] as usize;
        }
        out.push(sum as f64 / window.min(i + 1) as f64);
    }
    Ok(out)
}
