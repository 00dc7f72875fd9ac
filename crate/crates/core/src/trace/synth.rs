//! Synthetic traces with planted phases and streams.
//!
//! A [`SyntheticSpec`] is a list of segments. Each segment draws its accesses
//! from a working set and a set of strided streams, and its PCs from a simple
//! loop model. The segment's `phase` id becomes the ground-truth label for
//! every access it emits, so repeating a phase id (A-B-A) plants a recurring
//! regime.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_line_size, MemoryAccess, Trace, DEFAULT_LINE_SIZE};
use crate::error::{Error, Result};
use crate::phases::PhaseLabeling;
use crate::streams::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessPattern {
    /// Lines drawn uniformly at random.
    Uniform,
    /// Lines visited round-robin: `base, base+1, ..., base+lines-1, base, ...`.
    /// A recurring working set continues from where it stopped.
    Cyclic,
}

/// A contiguous range of `lines` cache lines starting at byte address `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingSet {
    pub base: u64,
    pub lines: u64,
    pub pattern: AccessPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedStream {
    pub base: u64,
    /// Signed stride in bytes, never zero.
    pub stride: i64,
    pub length: usize,
    /// First position (within the segment) at which the stream may emit.
    #[serde(default)]
    pub start: usize,
    /// PC attributed to the stream's accesses; the segment's loop PC if unset.
    #[serde(default)]
    pub pc: Option<u64>,
}

/// Loop model for PCs: access `k` of a segment gets `base + (k mod body) * step`.
///
/// The dominant delta-PC is therefore `step`, with one backwards jump of
/// `-(body - 1) * step` per loop iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcBehavior {
    pub base: u64,
    pub step: i64,
    pub body: u32,
}

impl Default for PcBehavior {
    fn default() -> Self {
        Self {
            base: 0x400000,
            step: 1,
            body: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: usize,
    /// Ground-truth phase id. Segments sharing an id plant the same regime.
    pub phase: usize,
    #[serde(default)]
    pub working_set: Option<WorkingSet>,
    #[serde(default)]
    pub streams: Vec<PlantedStream>,
    /// Every `stream_every`-th access is a stream access while any stream is
    /// active. 1 means streams take every slot.
    #[serde(default = "default_stream_every")]
    pub stream_every: usize,
    #[serde(default)]
    pub pc: PcBehavior,
}

fn default_stream_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    #[serde(default = "default_line_size")]
    pub line_size: u64,
    /// Reject specs whose streams overlap each other or their segment's
    /// working set.
    #[serde(default)]
    pub disjoint: bool,
    pub segments: Vec<Segment>,
}

fn default_line_size() -> u64 {
    DEFAULT_LINE_SIZE
}

/// A generated trace with its planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    pub trace: Trace,
    pub phases: PhaseLabeling,
    pub streams: Vec<Stream>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        check_line_size(self.line_size)?;
        if self.segments.is_empty() {
            return Err(Error::InvalidConfig("synthetic spec has no segments".into()));
        }
        for (si, seg) in self.segments.iter().enumerate() {
            let bad = |m: &str| Error::InvalidConfig(format!("segment {si}: {m}"));
            if seg.duration == 0 {
                return Err(bad("duration must be positive"));
            }
            if seg.stream_every == 0 {
                return Err(bad("stream_every must be positive"));
            }
            if seg.pc.body == 0 {
                return Err(bad("pc body must be positive"));
            }
            if let Some(ws) = &seg.working_set {
                if ws.lines == 0 {
                    return Err(bad("working set must contain at least one line"));
                }
            }
            for s in &seg.streams {
                if s.stride == 0 {
                    return Err(bad("stream stride must be non-zero"));
                }
                if s.length == 0 {
                    return Err(bad("stream length must be positive"));
                }
            }
            if self.disjoint {
                self.check_disjoint(si, seg)?;
            }
        }
        Ok(())
    }

    fn check_disjoint(&self, si: usize, seg: &Segment) -> Result<()> {
        let mut ranges: Vec<(u64, u64, String)> = Vec::new();
        if let Some(ws) = &seg.working_set {
            let end = ws.base + ws.lines * self.line_size;
            ranges.push((ws.base, end, "working set".into()));
        }
        for (k, s) in seg.streams.iter().enumerate() {
            let last = s
                .base
                .wrapping_add_signed(s.stride.wrapping_mul(s.length as i64 - 1));
            let (lo, hi) = (s.base.min(last), s.base.max(last));
            ranges.push((lo, hi + 1, format!("stream {k}")));
        }
        for i in 0..ranges.len() {
            for j in i + 1..ranges.len() {
                let (a, b) = (&ranges[i], &ranges[j]);
                if a.0 < b.1 && b.0 < a.1 {
                    return Err(Error::InvalidConfig(format!(
                        "segment {si}: {} overlaps {}",
                        a.2, b.2
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

struct StreamState {
    spec: PlantedStream,
    emitted: usize,
    members: Vec<usize>,
}

/// Generates the trace described by `spec`. Pure in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticTrace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let line_size = spec.line_size;
    let words_per_line = (line_size / 8).max(1);

    let mut accesses = Vec::with_capacity(spec.total_len());
    let mut labels = Vec::with_capacity(spec.total_len());
    let mut streams = Vec::new();
    // Cyclic working sets resume where they left off when they recur.
    let mut cyclic_pos: HashMap<(u64, u64), u64> = HashMap::new();

    for (si, seg) in spec.segments.iter().enumerate() {
        let mut states: Vec<StreamState> = seg
            .streams
            .iter()
            .map(|&s| StreamState {
                spec: s,
                emitted: 0,
                members: Vec::with_capacity(s.length),
            })
            .collect();
        let mut cursor = 0usize;

        for pos in 0..seg.duration {
            let loop_pc = seg
                .pc
                .base
                .wrapping_add_signed(seg.pc.step.wrapping_mul((pos as u64 % seg.pc.body as u64) as i64));
            let index = accesses.len();

            let stream_slot = !states.is_empty() && pos % seg.stream_every == seg.stream_every - 1;
            let chosen = if stream_slot {
                let n = states.len();
                (0..n).map(|k| (cursor + k) % n).find(|&k| {
                    let st = &states[k];
                    st.spec.start <= pos && st.emitted < st.spec.length
                })
            } else {
                None
            };

            let access = if let Some(k) = chosen {
                cursor = (k + 1) % states.len();
                let st = &mut states[k];
                let address = st
                    .spec
                    .base
                    .wrapping_add_signed(st.spec.stride.wrapping_mul(st.emitted as i64));
                st.emitted += 1;
                st.members.push(index);
                MemoryAccess {
                    pc: st.spec.pc.unwrap_or(loop_pc),
                    address,
                }
            } else if let Some(ws) = &seg.working_set {
                let line = match ws.pattern {
                    AccessPattern::Uniform => rng.gen_range(0..ws.lines),
                    AccessPattern::Cyclic => {
                        let p = cyclic_pos.entry((ws.base, ws.lines)).or_insert(0);
                        let l = *p;
                        *p = (l + 1) % ws.lines;
                        l
                    }
                };
                let offset = rng.gen_range(0..words_per_line) * 8 % line_size;
                MemoryAccess {
                    pc: loop_pc,
                    address: ws.base + line * line_size + offset,
                }
            } else {
                return Err(Error::InvalidConfig(format!(
                    "segment {si}: position {pos} has no active stream and no working set"
                )));
            };
            accesses.push(access);
            labels.push(seg.phase);
        }

        for (k, st) in states.into_iter().enumerate() {
            if st.emitted < st.spec.length {
                return Err(Error::InvalidConfig(format!(
                    "segment {si}: stream {k} emitted {} of {} accesses before the segment ended",
                    st.emitted, st.spec.length
                )));
            }
            streams.push(Stream::new(st.members, st.spec.base, st.spec.stride));
        }
    }

    Ok(SyntheticTrace {
        trace: Trace::new(accesses, line_size)?,
        phases: PhaseLabeling::from_raw(labels),
        streams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::reuse_profile;

    fn seg(duration: usize, phase: usize) -> Segment {
        Segment {
            duration,
            phase,
            working_set: None,
            streams: vec![],
            stream_every: 1,
            pc: PcBehavior::default(),
        }
    }

    #[test]
    fn pure_stream() {
        let mut s = seg(5, 0);
        s.streams.push(PlantedStream {
            base: 0,
            stride: 64,
            length: 5,
            start: 0,
            pc: None,
        });
        let spec = SyntheticSpec {
            seed: 1,
            line_size: 64,
            disjoint: true,
            segments: vec![s],
        };
        let out = generate_synthetic(&spec).unwrap();
        let addrs: Vec<_> = out.trace.accesses().iter().map(|a| a.address).collect();
        assert_eq!(addrs, [0x0, 0x40, 0x80, 0xC0, 0x100]);
        assert_eq!(out.streams.len(), 1);
        assert_eq!(out.streams[0].member_indices(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn deterministic_in_seed() {
        let mut a = seg(300, 0);
        a.working_set = Some(WorkingSet {
            base: 0x10000,
            lines: 40,
            pattern: AccessPattern::Uniform,
        });
        a.pc = PcBehavior {
            base: 0x1000,
            step: 4,
            body: 8,
        };
        let mut b = a.clone();
        b.phase = 1;
        b.pc = PcBehavior {
            base: 0x8000,
            step: 1,
            body: 32,
        };
        let spec = SyntheticSpec {
            seed: 99,
            line_size: 64,
            disjoint: false,
            segments: vec![a, b],
        };
        let x = generate_synthetic(&spec).unwrap();
        let y = generate_synthetic(&spec).unwrap();
        assert_eq!(x.trace.to_text(), y.trace.to_text());
        assert_eq!(x.phases, y.phases);

        let mut other = spec.clone();
        other.seed = 100;
        assert_ne!(generate_synthetic(&other).unwrap().trace, x.trace);
    }

    #[test]
    fn cyclic_working_set_reuse_distance() {
        let mut s = seg(1000, 0);
        s.working_set = Some(WorkingSet {
            base: 0x4000,
            lines: 8,
            pattern: AccessPattern::Cyclic,
        });
        let spec = SyntheticSpec {
            seed: 3,
            line_size: 64,
            disjoint: false,
            segments: vec![s],
        };
        let out = generate_synthetic(&spec).unwrap();
        let profile = reuse_profile(&out.trace);
        for (i, d) in profile.distances().iter().enumerate() {
            if i + 8 < 1000 {
                assert_eq!(*d, Some(8), "index {i}");
            } else {
                assert_eq!(*d, None);
            }
        }
    }

    #[test]
    fn interleaved_streams_and_labels() {
        let mut s = seg(100, 4);
        s.working_set = Some(WorkingSet {
            base: 0x100000,
            lines: 16,
            pattern: AccessPattern::Uniform,
        });
        s.stream_every = 2;
        s.streams = vec![
            PlantedStream {
                base: 0x0,
                stride: 64,
                length: 20,
                start: 0,
                pc: Some(0x77),
            },
            PlantedStream {
                base: 0x8000,
                stride: -8,
                length: 10,
                start: 10,
                pc: None,
            },
        ];
        let spec = SyntheticSpec {
            seed: 5,
            line_size: 64,
            disjoint: true,
            segments: vec![s, seg_ws(50, 2)],
        };
        let out = generate_synthetic(&spec).unwrap();
        assert_eq!(out.trace.len(), 150);
        // Phase ids are canonicalized by first occurrence.
        assert_eq!(out.phases.num_phases(), 2);
        assert!(out.phases.labels()[..100].iter().all(|&l| l == 0));
        assert!(out.phases.labels()[100..].iter().all(|&l| l == 1));
        for st in &out.streams {
            for (k, &i) in st.member_indices().iter().enumerate() {
                let expect = st.base().wrapping_add_signed(st.stride() * k as i64);
                assert_eq!(out.trace.accesses()[i].address, expect);
                assert_eq!(i % 2, 1);
            }
        }
        assert!(out.streams[0]
            .member_indices()
            .iter()
            .all(|&i| out.trace.accesses()[i].pc == 0x77));
    }

    fn seg_ws(duration: usize, phase: usize) -> Segment {
        let mut s = seg(duration, phase);
        s.working_set = Some(WorkingSet {
            base: 0x200000,
            lines: 4,
            pattern: AccessPattern::Cyclic,
        });
        s
    }

    #[test]
    fn rejects_invalid_specs() {
        let base = SyntheticSpec {
            seed: 0,
            line_size: 64,
            disjoint: true,
            segments: vec![seg_ws(10, 0)],
        };
        let mut zero = base.clone();
        zero.segments[0].duration = 0;
        assert!(generate_synthetic(&zero).is_err());

        let mut stride0 = base.clone();
        stride0.segments[0].streams.push(PlantedStream {
            base: 0,
            stride: 0,
            length: 3,
            start: 0,
            pc: None,
        });
        assert!(generate_synthetic(&stride0).is_err());

        let mut overlap = base.clone();
        overlap.segments[0].streams.push(PlantedStream {
            base: 0x200040,
            stride: 64,
            length: 3,
            start: 0,
            pc: None,
        });
        assert!(matches!(
            generate_synthetic(&overlap),
            Err(Error::InvalidConfig(m)) if m.contains("overlaps")
        ));
        overlap.disjoint = false;
        assert!(generate_synthetic(&overlap).is_ok());

        let mut too_long = base.clone();
        too_long.segments[0].streams.push(PlantedStream {
            base: 0,
            stride: 64,
            length: 30,
            start: 0,
            pc: None,
        });
        assert!(generate_synthetic(&too_long).is_err());

        let empty = SyntheticSpec {
            segments: vec![seg(3, 0)],
            ..base
        };
        assert!(generate_synthetic(&empty).is_err());
    }
}
