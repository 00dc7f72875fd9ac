//! Checkpoint file layout (all integers u64 and all reals f64, little-endian):
//!
//! ```text
//! magic        8 bytes  "CPROBE01"
//! config       embed_dim hidden_dim window epochs batch_size seed   (u64 x 6)
//!              learning_rate momentum grad_clip                     (f64 x 3)
//! line_size    u64
//! pc vocab     count, then count ids                                (u64)
//! line vocab   count, then count ids                                (u64)
//! groups       count, then per group:
//!                name length, name (UTF-8), value count, values      (f64)
//! ```
//!
//! Parameter groups appear in the order of [`GROUP_NAMES`].

use std::io::{Read, Write};

use super::params::{Params, GROUP_NAMES};
use super::{Model, ModelConfig, Vocab};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CPROBE01";

impl Model {
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        let c = &self.config;
        for v in [
            c.embed_dim as u64,
            c.hidden_dim as u64,
            c.window as u64,
            c.epochs as u64,
            c.batch_size as u64,
            c.seed,
        ] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [c.learning_rate, c.momentum, c.grad_clip] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.line_size.to_le_bytes());
        for ids in [&self.vocab.pcs, &self.vocab.lines] {
            b.extend_from_slice(&(ids.len() as u64).to_le_bytes());
            for id in ids.iter() {
                b.extend_from_slice(&id.to_le_bytes());
            }
        }
        let groups = self.params.groups();
        b.extend_from_slice(&(groups.len() as u64).to_le_bytes());
        for (name, values) in groups {
            b.extend_from_slice(&(name.len() as u64).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values.iter() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let embed_dim = r.usize()?;
        let hidden_dim = r.usize()?;
        let window = r.usize()?;
        let epochs = r.usize()?;
        let batch_size = r.usize()?;
        let seed = r.u64()?;
        let learning_rate = r.f64()?;
        let momentum = r.f64()?;
        let grad_clip = r.f64()?;
        let config = ModelConfig {
            embed_dim,
            hidden_dim,
            window,
            learning_rate,
            momentum,
            epochs,
            batch_size,
            grad_clip,
            seed,
        };
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let line_size = r.u64()?;

        let mut ids = || -> Result<Vec<u64>> {
            let n = r.usize()?;
            (0..n).map(|_| r.u64()).collect()
        };
        let pcs = ids()?;
        let lines = ids()?;
        if pcs.windows(2).any(|w| w[0] >= w[1]) || lines.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Checkpoint("vocabulary is not strictly sorted".into()));
        }

        let n_groups = r.usize()?;
        if n_groups != GROUP_NAMES.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter groups, found {n_groups}",
                GROUP_NAMES.len()
            )));
        }
        let mut params = Params {
            pc_emb: vec![],
            addr_emb: vec![],
            lstm_w: vec![],
            lstm_u: vec![],
            lstm_b: vec![],
            query: vec![],
            key: vec![],
            value: vec![],
            position: vec![],
            score_out: vec![],
            score_key: vec![],
        };
        for (expected, slot) in params.groups_mut() {
            let len = r.usize()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("group name is not UTF-8".into()))?;
            if name != expected {
                return Err(Error::Checkpoint(format!(
                    "expected group `{expected}`, found `{name}`"
                )));
            }
            let count = r.usize()?;
            *slot = (0..count).map(|_| r.f64()).collect::<Result<_>>()?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Model::from_parts(config, line_size, Vocab { pcs, lines }, params)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len().max(1 << 20))
            .ok_or_else(|| Error::Checkpoint(format!("implausible size {v}")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
