//! Versioned little-endian buffer snapshots.
//!
//! ```text
//! magic        4 bytes  "PRPL"
//! version      u32      1
//! capacity     u64
//! count        u64
//! scheme       u8       0 uniform, 1 PER, 2 LAP
//! alpha        f64
//! beta         f64
//! epsilon      f64
//! kappa        f64
//! anneal       u8       0 none, 1 present
//! anneal_start f64      (0 when absent)
//! anneal_end   u64      (0 when absent)
//! cursor       u64
//! max_seen     f64
//! sample_steps u64
//! stratified   u8
//! payload      u8       1 tabular transition, 2 opaque bytes
//! records      count × payload record, slot order
//! priorities   count × f64, slot order
//! ```
//!
//! A tabular record is `state u64, action u64, reward f64, next_state u64,
//! terminal u8`; a byte record is `len u32` followed by `len` bytes.

use std::io::{Read, Write};

use super::{BetaAnneal, ReplayBuffer, SchemeConfig, SchemeKind, Transition};
use crate::error::{Error, Result};
use crate::sumtree::SumTree;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"PRPL";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Slot contents that can be written into a snapshot.
pub trait SlotPayload: Clone {
    const TAG: u8;
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(input: &mut Cursor<'_>) -> Result<Self>;
}

impl SlotPayload for Transition {
    const TAG: u8 = 1;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.state as u64).to_le_bytes());
        out.extend_from_slice(&(self.action as u64).to_le_bytes());
        out.extend_from_slice(&self.reward.to_le_bytes());
        out.extend_from_slice(&(self.next_state as u64).to_le_bytes());
        out.push(self.terminal as u8);
    }

    fn decode(input: &mut Cursor<'_>) -> Result<Self> {
        Ok(Transition {
            state: input.usize()?,
            action: input.usize()?,
            reward: input.f64()?,
            next_state: input.usize()?,
            terminal: input.flag()?,
        })
    }
}

impl SlotPayload for Vec<u8> {
    const TAG: u8 = 2;

    fn encode(&self, out: &mut Vec<u8>) {
        let len = u32::try_from(self.len()).expect("payload longer than u32::MAX");
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(self);
    }

    fn decode(input: &mut Cursor<'_>) -> Result<Self> {
        let len = input.u32()? as usize;
        Ok(input.take(len)?.to_vec())
    }
}

/// Bounds-checked reader over a snapshot byte slice.
pub struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Snapshot("unexpected end of data".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Snapshot("value exceeds usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Snapshot(format!("invalid flag byte {b}"))),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

impl<T: SlotPayload> ReplayBuffer<T> {
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.capacity as u64).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        let s = &self.scheme;
        out.push(s.kind.tag());
        for v in [s.alpha, s.beta, s.epsilon, s.kappa] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (flag, start, end) = match s.beta_anneal {
            Some(a) => (1u8, a.start, a.end_step),
            None => (0, 0.0, 0),
        };
        out.push(flag);
        out.extend_from_slice(&start.to_le_bytes());
        out.extend_from_slice(&end.to_le_bytes());
        out.extend_from_slice(&(self.cursor as u64).to_le_bytes());
        out.extend_from_slice(&self.max_priority_seen.to_le_bytes());
        out.extend_from_slice(&self.sample_steps.to_le_bytes());
        out.push(self.stratified as u8);
        out.push(T::TAG);
        for item in &self.storage {
            item.encode(&mut out);
        }
        for p in self.priorities() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes };
        if c.array::<4>()? != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = c.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let capacity = c.usize()?;
        let count = c.usize()?;
        if capacity == 0 || count > capacity {
            return Err(bad(format!("count {count} inconsistent with capacity {capacity}")));
        }
        let kind = SchemeKind::from_tag(c.u8()?).ok_or_else(|| bad("unknown scheme tag"))?;
        let (alpha, beta, epsilon, kappa) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?);
        let has_anneal = c.flag()?;
        let (start, end_step) = (c.f64()?, c.u64()?);
        let scheme = SchemeConfig {
            kind,
            alpha,
            beta,
            epsilon,
            kappa,
            beta_anneal: has_anneal.then_some(BetaAnneal { start, end_step }),
        };
        scheme.validate().map_err(|e| bad(e.to_string()))?;
        let cursor = c.usize()?;
        let max_priority_seen = c.f64()?;
        let sample_steps = c.u64()?;
        let stratified = c.flag()?;
        if cursor >= capacity || (count < capacity && cursor != count) {
            return Err(bad(format!("cursor {cursor} inconsistent with count {count}")));
        }
        if !(max_priority_seen > 0.0 && max_priority_seen.is_finite()) {
            return Err(bad("max priority must be positive and finite"));
        }
        if c.u8()? != T::TAG {
            return Err(bad("payload kind does not match"));
        }
        let storage = (0..count).map(|_| T::decode(&mut c)).collect::<Result<Vec<_>>>()?;
        let mut tree = SumTree::new(capacity)?;
        for slot in 0..count {
            let p = c.f64()?;
            tree.set(slot, p).map_err(|e| bad(e.to_string()))?;
        }
        tree.rebuild();
        if !c.bytes.is_empty() {
            return Err(bad(format!("{} trailing bytes", c.bytes.len())));
        }
        Ok(ReplayBuffer {
            capacity,
            cursor,
            storage,
            tree,
            max_priority_seen,
            scheme,
            sample_steps,
            stratified,
        })
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_snapshot_bytes())?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_snapshot_bytes(&bytes)
    }
}
