//! Memory-access traces.
//!
//! A trace is an ordered sequence of `(pc, address)` pairs. Addresses are kept
//! exactly as recorded; consumers that care about cache lines align them with
//! [`line_of`].

mod reuse;
mod synth;

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};

pub use reuse::{reuse_profile, ReuseProfile};
pub use synth::{
    generate_synthetic, AccessPattern, PcBehavior, PlantedStream, Segment, SyntheticSpec,
    SyntheticTrace, WorkingSet,
};

/// Default cache-line size in bytes.
pub const DEFAULT_LINE_SIZE: u64 = 64;

/// Header line of the canonical trace file format.
pub const TRACE_HEADER: &str = "pc,address";

/// Cache-line identifier: an address divided by the line size.
pub type LineId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryAccess {
    pub pc: u64,
    pub address: u64,
}

impl MemoryAccess {
    pub fn new(pc: u64, address: u64) -> Self {
        Self { pc, address }
    }
}

/// Cache line holding `address`.
///
/// `line_size` must be a power of two.
#[inline]
pub fn line_of(address: u64, line_size: u64) -> LineId {
    debug_assert!(line_size.is_power_of_two());
    address >> line_size.trailing_zeros()
}

pub(crate) fn check_line_size(line_size: u64) -> Result<()> {
    if line_size == 0 || !line_size.is_power_of_two() {
        return Err(Error::InvalidLineSize(line_size));
    }
    Ok(())
}

/// An immutable, non-empty access trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    accesses: Vec<MemoryAccess>,
    line_size: u64,
}

impl Trace {
    pub fn new(accesses: Vec<MemoryAccess>, line_size: u64) -> Result<Self> {
        check_line_size(line_size)?;
        if accesses.is_empty() {
            return Err(Error::EmptyTrace);
        }
        Ok(Self {
            accesses,
            line_size,
        })
    }

    /// Builds a trace from `(pc, address)` pairs.
    pub fn from_pairs<I>(pairs: I, line_size: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(pc, address)| MemoryAccess { pc, address })
                .collect(),
            line_size,
        )
    }

    /// Builds a trace whose addresses are the first byte of each given line.
    /// PCs are all zero. Mostly useful for tests and small experiments.
    pub fn from_lines(lines: &[LineId], line_size: u64) -> Result<Self> {
        check_line_size(line_size)?;
        Self::from_pairs(lines.iter().map(|&l| (0, l * line_size)), line_size)
    }

    pub fn accesses(&self) -> &[MemoryAccess] {
        &self.accesses
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    /// Always false: empty traces cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn line_size(&self) -> u64 {
        self.line_size
    }

    pub fn get(&self, index: usize) -> Option<&MemoryAccess> {
        self.accesses.get(index)
    }

    /// Cache line of the access at `index`.
    pub fn line(&self, index: usize) -> LineId {
        line_of(self.accesses[index].address, self.line_size)
    }

    pub fn lines(&self) -> impl Iterator<Item = LineId> + '_ {
        let shift = self.line_size.trailing_zeros();
        self.accesses.iter().map(move |a| a.address >> shift)
    }

    /// Same accesses, different line size.
    pub fn with_line_size(&self, line_size: u64) -> Result<Self> {
        check_line_size(line_size)?;
        Ok(Self {
            accesses: self.accesses.clone(),
            line_size,
        })
    }

    /// Writes the canonical text format.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.accesses.len() * 24 + 12);
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for a in &self.accesses {
            let _ = writeln!(s, "{:#x},{:#x}", a.pc, a.address);
        }
        s
    }
}

/// Parses the canonical trace format: a `pc,address` header followed by one
/// `0x<hex>,0x<hex>` record per line.
///
/// Record numbers in errors are 1-based and count data records only; line
/// numbers count the header as line 1.
pub fn parse_trace(bytes: &[u8], line_size: u64) -> Result<Trace> {
    check_line_size(line_size)?;
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        record: 0,
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;

    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header.is_empty() && text.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if header != TRACE_HEADER {
        return Err(Error::Parse {
            record: 0,
            line: 1,
            message: format!("expected header `{TRACE_HEADER}`, found `{header}`"),
        });
    }

    let mut accesses = Vec::new();
    let mut pending_blank: Option<usize> = None;
    for (i, raw) in lines.enumerate() {
        let line_no = i + 2;
        let record = accesses.len() + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            // Only a trailing newline may produce an empty line.
            pending_blank.get_or_insert(line_no);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(Error::Parse {
                record,
                line: blank,
                message: "blank line inside trace".into(),
            });
        }
        let err = |message: String| Error::Parse {
            record,
            line: line_no,
            message,
        };
        let (pc, address) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected two comma-separated fields in `{line}`")))?;
        let pc = parse_hex(pc).map_err(|m| err(format!("bad pc: {m}")))?;
        let address = parse_hex(address).map_err(|m| err(format!("bad address: {m}")))?;
        accesses.push(MemoryAccess { pc, address });
    }
    if accesses.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Trace::new(accesses, line_size)
}

fn parse_hex(field: &str) -> std::result::Result<u64, String> {
    let digits = field
        .strip_prefix("0x")
        .ok_or_else(|| format!("`{field}` lacks the 0x prefix"))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("`{field}` is not a hexadecimal integer"));
    }
    u64::from_str_radix(digits, 16).map_err(|e| format!("`{field}`: {e}"))
}
