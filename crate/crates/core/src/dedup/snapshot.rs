//! Binary snapshot of the dedup state for golden files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CLS1" | version u16 = 1 | reserved u16 | capacity u64 | allocator cursor u64
//! amt count u64   | { lla u32, pla u32 } sorted by lla
//! lfi count u64   | { lfp u32, disambiguator u16, pla u32, ref_count u16 } sorted
//! payload count u64 | { pla u32, 256 bytes } sorted by pla
//! ```

use std::collections::HashMap;

use super::engine::{DedupEngine, LfiEntry};
use super::{metadata_budget, DedupError};
use crate::trace::LinePayload;
use crate::LINE_BYTES;

pub const MAGIC: &[u8; 4] = b"CLS1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

/// Encodes the engine state. `allocator_cursor` is opaque allocator state
/// (the next line for a counting allocator).
pub fn encode_snapshot(engine: &DedupEngine, allocator_cursor: u64) -> Vec<u8> {
    let amt = engine.amt_sorted();
    let lfi = engine.lfi_sorted();
    let mut payloads: Vec<_> = lfi
        .iter()
        .filter_map(|(_, e)| engine.payload(e.pla).map(|p| (e.pla, p)))
        .collect();
    payloads.sort_unstable_by_key(|(p, _)| *p);

    let mut out = Vec::with_capacity(HEADER_LEN + 24 + amt.len() * 8 + lfi.len() * 12);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&engine.budget().memory_capacity_bytes.to_le_bytes());
    out.extend_from_slice(&allocator_cursor.to_le_bytes());
    out.extend_from_slice(&(amt.len() as u64).to_le_bytes());
    for (lla, pla) in amt {
        out.extend_from_slice(&lla.to_le_bytes());
        out.extend_from_slice(&pla.to_le_bytes());
    }
    out.extend_from_slice(&(lfi.len() as u64).to_le_bytes());
    for (lfp, e) in &lfi {
        out.extend_from_slice(&lfp.to_le_bytes());
        out.extend_from_slice(&e.disambiguator.to_le_bytes());
        out.extend_from_slice(&e.pla.to_le_bytes());
        out.extend_from_slice(&e.ref_count.to_le_bytes());
    }
    out.extend_from_slice(&(payloads.len() as u64).to_le_bytes());
    for (pla, body) in payloads {
        out.extend_from_slice(&pla.to_le_bytes());
        out.extend_from_slice(&body[..]);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DedupError> {
        if self.buf.len() < n {
            return Err(DedupError::Snapshot("truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, DedupError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DedupError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DedupError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self, record_len: usize) -> Result<usize, DedupError> {
        let n = self.u64()?;
        if n > (self.buf.len() / record_len) as u64 {
            return Err(DedupError::Snapshot(format!("count {n} exceeds remaining bytes")));
        }
        Ok(n as usize)
    }
}

/// Decodes and validates a snapshot, returning the engine and the allocator
/// cursor. Every structural invariant is rechecked; a snapshot that decodes
/// is a state the engine could have reached.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(DedupEngine, u64), DedupError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(DedupError::Snapshot("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(DedupError::Snapshot(format!("unsupported version {version}")));
    }
    r.u16()?;
    let budget = metadata_budget(r.u64()?)?;
    let cursor = r.u64()?;

    let n = r.count(8)?;
    let mut amt = HashMap::with_capacity(n);
    let mut prev = None;
    for _ in 0..n {
        let (lla, pla) = (r.u32()?, r.u32()?);
        if prev.is_some_and(|p| p >= lla) {
            return Err(DedupError::Snapshot("AMT not strictly sorted".into()));
        }
        prev = Some(lla);
        amt.insert(lla, pla);
    }

    let n = r.count(12)?;
    let mut lfi: HashMap<u32, Vec<LfiEntry>> = HashMap::new();
    let mut prev = None;
    for _ in 0..n {
        let lfp = r.u32()?;
        let disambiguator = r.u16()?;
        let pla = r.u32()?;
        let ref_count = r.u16()?;
        if prev.is_some_and(|p| p >= (lfp, disambiguator)) {
            return Err(DedupError::Snapshot("LFI not strictly sorted".into()));
        }
        prev = Some((lfp, disambiguator));
        lfi.entry(lfp).or_default().push(LfiEntry {
            disambiguator,
            pla,
            ref_count,
        });
    }

    let n = r.count(4 + LINE_BYTES as usize)?;
    let mut contents: HashMap<u32, LinePayload> = HashMap::with_capacity(n);
    for _ in 0..n {
        let pla = r.u32()?;
        let body: LinePayload = Box::new(r.take(LINE_BYTES as usize)?.try_into().unwrap());
        if contents.insert(pla, body).is_some() {
            return Err(DedupError::Snapshot(format!("two payloads for pla {pla}")));
        }
    }
    if !r.buf.is_empty() {
        return Err(DedupError::Snapshot(format!("{} trailing bytes", r.buf.len())));
    }
    let engine = DedupEngine::from_parts(budget, amt, lfi, contents)?;
    Ok((engine, cursor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::{CountingAllocator, LineAllocator};

    fn populated() -> (DedupEngine, CountingAllocator) {
        let mut e = DedupEngine::new(metadata_budget(1 << 20).unwrap());
        let mut a = CountingAllocator::default();
        let body: LinePayload = Box::new([9u8; 256]);
        e.process_write(1, 10, None, &mut a).unwrap();
        e.process_write(2, 10, None, &mut a).unwrap();
        e.process_write(3, 30, Some(&body), &mut a).unwrap();
        e.process_write(4, 30, Some(&Box::new([8u8; 256])), &mut a).unwrap();
        (e, a)
    }

    #[test]
    fn round_trip() {
        let (e, a) = populated();
        let bytes = encode_snapshot(&e, u64::from(a.next));
        let (back, cursor) = decode_snapshot(&bytes).unwrap();
        assert_eq!(cursor, 3);
        assert_eq!(back.amt_sorted(), e.amt_sorted());
        assert_eq!(back.lfi_sorted(), e.lfi_sorted());
        assert_eq!(encode_snapshot(&back, cursor), bytes);
    }

    #[test]
    fn restored_engine_keeps_working() {
        let (e, a) = populated();
        let (mut back, cursor) = decode_snapshot(&encode_snapshot(&e, u64::from(a.next))).unwrap();
        let mut alloc = CountingAllocator {
            next: cursor as u32,
            live: back.lfi_sorted().iter().map(|(_, e)| e.pla).collect(),
            ..Default::default()
        };
        let out = back.process_write(1, 30, Some(&Box::new([9u8; 256])), &mut alloc).unwrap();
        assert_eq!(out.pla, e.lookup(3).unwrap());
        alloc.allocate(0).unwrap();
        back.check_invariants().unwrap();
    }

    #[test]
    fn rejects_inconsistent_state() {
        let (e, a) = populated();
        let good = encode_snapshot(&e, u64::from(a.next));
        // Bump the first LFI ref_count: conservation breaks.
        let lfi_start = HEADER_LEN + 8 + e.amt_len() * 8 + 8;
        let mut bad = good.clone();
        bad[lfi_start + 10] += 1;
        assert!(decode_snapshot(&bad).is_err());

        assert!(decode_snapshot(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(decode_snapshot(&trailing).is_err());
        let mut magic = good;
        magic[0] = b'X';
        assert!(decode_snapshot(&magic).is_err());
        assert!(decode_snapshot(&[]).is_err());
    }
}
