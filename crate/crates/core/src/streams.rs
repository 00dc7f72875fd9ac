//! Strided streams and counterfactual trace edits.
//!
//! A stream is a run of accesses whose addresses form an exact arithmetic
//! progression, possibly interleaved with unrelated accesses. Edits delete
//! stream members from a trace and return an old-to-new index map so that
//! per-timestep records of the original and edited traces can be aligned.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{MemoryAccess, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    member_indices: Vec<usize>,
    base: u64,
    stride: i64,
}

impl Stream {
    /// `member_indices` must be strictly increasing.
    pub fn new(member_indices: Vec<usize>, base: u64, stride: i64) -> Self {
        debug_assert!(member_indices.windows(2).all(|w| w[0] < w[1]));
        Self {
            member_indices,
            base,
            stride,
        }
    }

    pub fn member_indices(&self) -> &[usize] {
        &self.member_indices
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn stride(&self) -> i64 {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    /// First and last member index.
    pub fn span(&self) -> (usize, usize) {
        (
            *self.member_indices.first().unwrap_or(&0),
            *self.member_indices.last().unwrap_or(&0),
        )
    }

    /// Expected address of the `k`-th member.
    pub fn address_at(&self, k: usize) -> u64 {
        self.base
            .wrapping_add_signed(self.stride.wrapping_mul(k as i64))
    }

    fn check_indices(&self, trace: &Trace) -> Result<()> {
        if let Some(&bad) = self.member_indices.iter().find(|&&i| i >= trace.len()) {
            return Err(Error::StaleStream {
                index: bad,
                len: trace.len(),
            });
        }
        Ok(())
    }

    /// Checks that the members exist and still form the progression.
    pub fn validate(&self, trace: &Trace) -> Result<()> {
        self.check_indices(trace)?;
        for (k, &i) in self.member_indices.iter().enumerate() {
            if trace.accesses()[i].address != self.address_at(k) {
                return Err(Error::InvalidInput(format!(
                    "access {i} does not continue the stream at {:#x} stride {}",
                    self.base, self.stride
                )));
            }
        }
        Ok(())
    }

    /// Distinct PCs issuing the stream's accesses, with counts, sorted by PC.
    pub fn member_pcs(&self, trace: &Trace) -> Vec<(u64, usize)> {
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for &i in &self.member_indices {
            if let Some(a) = trace.get(i) {
                *counts.entry(a.pc).or_default() += 1;
            }
        }
        let mut v: Vec<_> = counts.into_iter().collect();
        v.sort_unstable();
        v
    }

    /// `.streams` sidecar record: `start_index,end_index,base,stride`.
    pub fn to_sidecar_line(&self) -> String {
        let (s, e) = self.span();
        format!("{s},{e},{:#x},{}", self.base, self.stride)
    }
}

/// Writes one sidecar record per stream.
pub fn streams_to_sidecar(streams: &[Stream]) -> String {
    streams
        .iter()
        .map(|s| s.to_sidecar_line() + "\n")
        .collect()
}

/// Reads a `.streams` sidecar, recovering each stream's members by walking
/// the trace from `start_index` to `end_index` and taking every access whose
/// address continues the progression.
pub fn parse_streams_sidecar(text: &str, trace: &Trace) -> Result<Vec<Stream>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            record: n + 1,
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let start: usize = f[0].parse().map_err(|e| err(format!("start: {e}")))?;
        let end: usize = f[1].parse().map_err(|e| err(format!("end: {e}")))?;
        let base = f[2]
            .strip_prefix("0x")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| err(format!("bad base `{}`", f[2])))?;
        let stride: i64 = f[3].parse().map_err(|e| err(format!("stride: {e}")))?;
        if end >= trace.len() || start > end {
            return Err(Error::StaleStream {
                index: end,
                len: trace.len(),
            });
        }
        let mut members = Vec::new();
        let mut expect = base;
        for (i, a) in trace.accesses()[start..=end].iter().enumerate() {
            if a.address == expect {
                members.push(start + i);
                expect = expect.wrapping_add_signed(stride);
            }
        }
        if members.first() != Some(&start) || members.last() != Some(&end) {
            return Err(err(format!(
                "trace does not contain the stream {base:#x}/{stride} between {start} and {end}"
            )));
        }
        out.push(Stream::new(members, base, stride));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    pub min_length: usize,
    pub max_gap: usize,
}

impl Default for StreamParams {
    fn default() -> Self {
        Self {
            min_length: 8,
            max_gap: 16,
        }
    }
}

struct Candidate {
    members: Vec<usize>,
    stride: i64,
    next: u64,
}

impl Candidate {
    fn last(&self) -> usize {
        *self.members.last().unwrap()
    }
}

/// Greedy single-pass stream detection.
///
/// Open candidates are keyed by the next address they expect. An access
/// extends the longest open candidate expecting its address, provided at most
/// `max_gap` other accesses occurred since the candidate's last member.
/// Accesses that extend nothing start new two-element candidates with every
/// recent access within the gap. At the end, candidates of at least
/// `min_length` members are accepted longest-first, skipping any that share
/// an access with an already accepted stream.
pub fn detect_streams(trace: &Trace, min_length: usize, max_gap: usize) -> Result<Vec<Stream>> {
    if min_length < 3 {
        return Err(Error::InvalidConfig(
            "minimum stream length must be at least 3".into(),
        ));
    }
    let acc: &[MemoryAccess] = trace.accesses();
    let reach = max_gap + 1;
    let mut pool: HashMap<usize, Candidate> = HashMap::new();
    let mut next_id = 0usize;
    let mut open: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut done: Vec<Candidate> = Vec::new();

    let alive = |c: &Candidate, i: usize| i - c.last() <= reach;

    for (i, a) in acc.iter().enumerate() {
        let mut extended = false;
        if let Some(ids) = open.get_mut(&a.address) {
            let best = ids
                .iter()
                .enumerate()
                .filter_map(|(pos, &id)| pool.get(&id).map(|c| (pos, id, c)))
                .filter(|(_, _, c)| alive(c, i))
                .max_by_key(|(_, id, c)| (c.members.len(), std::cmp::Reverse(*id)))
                .map(|(pos, id, _)| (pos, id));
            if let Some((pos, id)) = best {
                ids.swap_remove(pos);
                if ids.is_empty() {
                    open.remove(&a.address);
                }
                let c = pool.get_mut(&id).unwrap();
                c.members.push(i);
                c.next = a.address.wrapping_add_signed(c.stride);
                open.entry(c.next).or_default().push(id);
                extended = true;
            }
        }

        if !extended {
            for j in i.saturating_sub(reach)..i {
                let stride = a.address.wrapping_sub(acc[j].address) as i64;
                if stride == 0 {
                    continue;
                }
                let next = a.address.wrapping_add_signed(stride);
                pool.insert(
                    next_id,
                    Candidate {
                        members: vec![j, i],
                        stride,
                        next,
                    },
                );
                open.entry(next).or_default().push(next_id);
                next_id += 1;
            }
        }

        // Retire candidates that can no longer be extended.
        if i % 256 == 255 {
            retire(&mut pool, &mut open, &mut done, min_length, |c| !alive(c, i + 1));
        }
    }
    retire(&mut pool, &mut open, &mut done, min_length, |_| true);

    done.sort_by(|x, y| {
        y.members
            .len()
            .cmp(&x.members.len())
            .then(x.members[0].cmp(&y.members[0]))
            .then(x.stride.cmp(&y.stride))
    });
    let mut claimed: HashSet<usize> = HashSet::new();
    let mut streams = Vec::new();
    for c in done {
        if c.members.iter().any(|i| claimed.contains(i)) {
            continue;
        }
        claimed.extend(c.members.iter().copied());
        let base = acc[c.members[0]].address;
        streams.push(Stream::new(c.members, base, c.stride));
    }
    streams.sort_by_key(|s| s.member_indices[0]);
    Ok(streams)
}

fn retire(
    pool: &mut HashMap<usize, Candidate>,
    open: &mut HashMap<u64, Vec<usize>>,
    done: &mut Vec<Candidate>,
    min_length: usize,
    dead: impl Fn(&Candidate) -> bool,
) {
    open.retain(|_, ids| {
        ids.retain(|&id| {
            let is_dead = pool.get(&id).is_none_or(&dead);
            if is_dead {
                if let Some(c) = pool.remove(&id) {
                    if c.members.len() >= min_length {
                        done.push(c);
                    }
                }
            }
            !is_dead
        });
        !ids.is_empty()
    });
}

/// Old-to-new index correspondence produced by an edit. Deleted accesses map
/// to `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexMap {
    map: Vec<Option<usize>>,
}

impl IndexMap {
    pub fn identity(len: usize) -> Self {
        Self {
            map: (0..len).map(Some).collect(),
        }
    }

    pub fn from_vec(map: Vec<Option<usize>>) -> Self {
        Self { map }
    }

    pub fn get(&self, old: usize) -> Option<usize> {
        self.map.get(old).copied().flatten()
    }

    pub fn old_len(&self) -> usize {
        self.map.len()
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.map
    }

    /// Surviving `(old, new)` pairs in order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.map
            .iter()
            .enumerate()
            .filter_map(|(o, n)| n.map(|n| (o, n)))
    }

    pub fn surviving(&self) -> usize {
        self.map.iter().filter(|n| n.is_some()).count()
    }

    /// The new-to-old map, defined on `new_len` indices.
    pub fn inverse(&self, new_len: usize) -> IndexMap {
        let mut inv = vec![None; new_len];
        for (o, n) in self.pairs() {
            if n < new_len {
                inv[n] = Some(o);
            }
        }
        IndexMap { map: inv }
    }

    /// `old,new` rows for the surviving accesses.
    pub fn to_sidecar(&self) -> String {
        let mut s = String::from("old,new\n");
        for (o, n) in self.pairs() {
            s.push_str(&format!("{o},{n}\n"));
        }
        s
    }

    /// Parses `old,new` rows. `old_len` is the length of the original trace.
    pub fn parse_sidecar(text: &str, old_len: usize) -> Result<Self> {
        let mut map = vec![None; old_len];
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once(',')
                .and_then(|(o, nw)| Some((o.parse::<usize>().ok()?, nw.parse::<usize>().ok()?)));
            match parsed {
                Some((o, nw)) if o < old_len => map[o] = Some(nw),
                _ => {
                    return Err(Error::Parse {
                        record: n,
                        line: n + 1,
                        message: format!("bad index map row `{line}`"),
                    })
                }
            }
        }
        Ok(Self { map })
    }
}

#[derive(Debug, Clone)]
pub struct EditedTrace {
    pub trace: Trace,
    pub index_map: IndexMap,
}

/// Deletes the given accesses, keeping the rest in order.
pub fn delete_accesses(trace: &Trace, delete: &HashSet<usize>) -> Result<EditedTrace> {
    if let Some(&bad) = delete.iter().find(|&&i| i >= trace.len()) {
        return Err(Error::StaleStream {
            index: bad,
            len: trace.len(),
        });
    }
    let mut kept = Vec::with_capacity(trace.len() - delete.len());
    let mut map = Vec::with_capacity(trace.len());
    for (i, a) in trace.accesses().iter().enumerate() {
        if delete.contains(&i) {
            map.push(None);
        } else {
            map.push(Some(kept.len()));
            kept.push(*a);
        }
    }
    Ok(EditedTrace {
        trace: Trace::new(kept, trace.line_size())?,
        index_map: IndexMap { map },
    })
}

pub fn remove_stream(trace: &Trace, stream: &Stream) -> Result<EditedTrace> {
    stream.check_indices(trace)?;
    delete_accesses(trace, &stream.member_indices.iter().copied().collect())
}

/// Keeps only the final `ceil(fraction * len)` members of the stream.
pub fn keep_stream_suffix(trace: &Trace, stream: &Stream, fraction: f64) -> Result<EditedTrace> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "suffix fraction {fraction} is outside (0, 1]"
        )));
    }
    stream.check_indices(trace)?;
    let n = stream.len();
    let keep = kept_members(n, fraction);
    delete_accesses(
        trace,
        &stream.member_indices[..n - keep].iter().copied().collect(),
    )
}

fn kept_members(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    // Products like 0.3 * 10 land a hair off the integer.
    let k = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    (k as usize).min(n)
}
