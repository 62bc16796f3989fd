//! Native binary trace format (`.clt`).
//!
//! All integers are little-endian.
//!
//! ```text
//! header (16 bytes)
//!   magic        [u8; 4]  "CLT1"
//!   version      u16      1
//!   kind         u8       0 = block records, 1 = line requests
//!   reserved     u8       0
//!   count        u64      number of records that follow
//! record
//!   length       u16      body length in bytes
//!   body         [u8; length]
//! block body (29 bytes)
//!   timestamp_ns u64, device_id u32, block_lba u64, block_count u32,
//!   op u8 (0 = read, 1 = write), block_hash u32
//! line body (18 or 274 bytes)
//!   arrival_cycle u64, lla u32, op u8, lfp u32,
//!   has_payload u8 (0 or 1), payload [u8; 256] if has_payload
//! ```
//!
//! A body longer than its kind requires is accepted and the excess ignored,
//! so later versions can append fields.

use super::{LineRequest, Op, TraceError, TraceRecord};
use crate::LINE_BYTES;

pub const MAGIC: &[u8; 4] = b"CLT1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

const KIND_BLOCKS: u8 = 0;
const KIND_LINES: u8 = 1;
const BLOCK_BODY_LEN: usize = 29;
const LINE_BODY_LEN: usize = 18;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NativeTrace {
    Blocks(Vec<TraceRecord>),
    Lines(Vec<LineRequest>),
}

impl NativeTrace {
    pub fn len(&self) -> usize {
        match self {
            NativeTrace::Blocks(v) => v.len(),
            NativeTrace::Lines(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn op_byte(op: Op) -> u8 {
    match op {
        Op::Read => 0,
        Op::Write => 1,
    }
}

fn header(kind: u8, count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(0);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out
}

pub fn encode_blocks(records: &[TraceRecord]) -> Vec<u8> {
    let mut out = header(KIND_BLOCKS, records.len());
    out.reserve(records.len() * (2 + BLOCK_BODY_LEN));
    for r in records {
        out.extend_from_slice(&(BLOCK_BODY_LEN as u16).to_le_bytes());
        out.extend_from_slice(&r.timestamp_ns.to_le_bytes());
        out.extend_from_slice(&r.device_id.to_le_bytes());
        out.extend_from_slice(&r.block_lba.to_le_bytes());
        out.extend_from_slice(&r.block_count.to_le_bytes());
        out.push(op_byte(r.op));
        out.extend_from_slice(&r.block_hash.to_le_bytes());
    }
    out
}

pub fn encode_lines(requests: &[LineRequest]) -> Vec<u8> {
    let mut out = header(KIND_LINES, requests.len());
    for r in requests {
        let len = LINE_BODY_LEN + r.payload.as_ref().map_or(0, |p| p.len());
        out.extend_from_slice(&(len as u16).to_le_bytes());
        out.extend_from_slice(&r.arrival_cycle.to_le_bytes());
        out.extend_from_slice(&r.lla.to_le_bytes());
        out.push(op_byte(r.op));
        out.extend_from_slice(&r.lfp.to_le_bytes());
        match &r.payload {
            Some(p) => {
                out.push(1);
                out.extend_from_slice(&p[..]);
            }
            None => out.push(0),
        }
    }
    out
}

pub fn encode_native(trace: &NativeTrace) -> Vec<u8> {
    match trace {
        NativeTrace::Blocks(r) => encode_blocks(r),
        NativeTrace::Lines(r) => encode_lines(r),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TraceError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| TraceError::Native(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TraceError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TraceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TraceError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_op(b: u8) -> Result<Op, TraceError> {
    match b {
        0 => Ok(Op::Read),
        1 => Ok(Op::Write),
        other => Err(TraceError::Native(format!("bad op byte {other}"))),
    }
}

fn decode_block(body: &[u8]) -> Result<TraceRecord, TraceError> {
    if body.len() < BLOCK_BODY_LEN {
        return Err(TraceError::Native(format!("block record too short ({} bytes)", body.len())));
    }
    let mut c = Cursor { buf: body, pos: 0 };
    let record = TraceRecord {
        timestamp_ns: c.u64()?,
        device_id: c.u32()?,
        block_lba: c.u64()?,
        block_count: c.u32()?,
        op: parse_op(c.u8()?)?,
        block_hash: c.u32()?,
    };
    if record.block_count == 0 {
        return Err(TraceError::Native("block_count of zero".into()));
    }
    Ok(record)
}

fn decode_line(body: &[u8]) -> Result<LineRequest, TraceError> {
    if body.len() < LINE_BODY_LEN {
        return Err(TraceError::Native(format!("line record too short ({} bytes)", body.len())));
    }
    let mut c = Cursor { buf: body, pos: 0 };
    let arrival_cycle = c.u64()?;
    let lla = c.u32()?;
    let op = parse_op(c.u8()?)?;
    let lfp = c.u32()?;
    let payload = match c.u8()? {
        0 => None,
        1 => {
            let bytes = c.take(LINE_BYTES as usize)?;
            Some(Box::new(<[u8; LINE_BYTES as usize]>::try_from(bytes).unwrap()))
        }
        other => return Err(TraceError::Native(format!("bad payload flag {other}"))),
    };
    Ok(LineRequest {
        arrival_cycle,
        lla,
        op,
        lfp,
        payload,
    })
}

/// Decodes a complete `.clt` image. Trailing bytes after the last record are
/// an error.
pub fn decode_native(bytes: &[u8]) -> Result<NativeTrace, TraceError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(TraceError::Native("missing CLT1 magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(TraceError::Native(format!("unsupported version {version}")));
    }
    let kind = c.u8()?;
    let _reserved = c.u8()?;
    let count = c.u64()?;
    // Each record needs at least its length prefix; reject impossible counts
    // before allocating.
    let remaining = (bytes.len() - c.pos) as u64;
    if count > remaining / 2 {
        return Err(TraceError::Native(format!("record count {count} exceeds file size")));
    }

    let trace = match kind {
        KIND_BLOCKS => {
            let mut out = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let len = c.u16()? as usize;
                out.push(decode_block(c.take(len)?)?);
            }
            NativeTrace::Blocks(out)
        }
        KIND_LINES => {
            let mut out = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let len = c.u16()? as usize;
                out.push(decode_line(c.take(len)?)?);
            }
            NativeTrace::Lines(out)
        }
        other => return Err(TraceError::Native(format!("unknown record kind {other}"))),
    };
    if c.pos != bytes.len() {
        return Err(TraceError::Native(format!(
            "{} trailing bytes after last record",
            bytes.len() - c.pos
        )));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![Just(Op::Read), Just(Op::Write)]
    }

    fn arb_record() -> impl Strategy<Value = TraceRecord> {
        (any::<u64>(), any::<u32>(), any::<u64>(), 1..=u32::MAX, arb_op(), any::<u32>()).prop_map(
            |(timestamp_ns, device_id, block_lba, block_count, op, block_hash)| TraceRecord {
                timestamp_ns,
                device_id,
                block_lba,
                block_count,
                op,
                block_hash,
            },
        )
    }

    fn arb_line() -> impl Strategy<Value = LineRequest> {
        (
            any::<u64>(),
            any::<u32>(),
            arb_op(),
            any::<u32>(),
            proptest::option::of(proptest::collection::vec(any::<u8>(), 256)),
        )
            .prop_map(|(arrival_cycle, lla, op, lfp, payload)| LineRequest {
                arrival_cycle,
                lla,
                op,
                lfp,
                payload: payload.map(|p| Box::new(<[u8; 256]>::try_from(p).unwrap())),
            })
    }

    proptest! {
        #[test]
        fn block_round_trip(records in proptest::collection::vec(arb_record(), 0..64)) {
            let bytes = encode_blocks(&records);
            prop_assert_eq!(decode_native(&bytes).unwrap(), NativeTrace::Blocks(records));
        }

        #[test]
        fn line_round_trip(lines in proptest::collection::vec(arb_line(), 0..16)) {
            let bytes = encode_lines(&lines);
            prop_assert_eq!(decode_native(&bytes).unwrap(), NativeTrace::Lines(lines));
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_blocks(&[]);
        assert_eq!(bytes, b"CLT1\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00");
    }

    #[test]
    fn rejects_corruption() {
        let r = TraceRecord {
            timestamp_ns: 1,
            device_id: 2,
            block_lba: 3,
            block_count: 1,
            op: Op::Write,
            block_hash: 4,
        };
        let good = encode_blocks(&[r]);
        assert!(decode_native(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_native(&extra).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_native(&bad_magic).is_err());
        let mut bad_op = good.clone();
        bad_op[HEADER_LEN + 2 + 24] = 7;
        assert!(decode_native(&bad_op).is_err());
        let mut huge_count = good;
        huge_count[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_native(&huge_count).is_err());
    }

    #[test]
    fn longer_bodies_are_forward_compatible() {
        let r = TraceRecord {
            timestamp_ns: 10,
            device_id: 0,
            block_lba: 5,
            block_count: 1,
            op: Op::Read,
            block_hash: 0xdead,
        };
        let mut bytes = encode_blocks(&[r]).to_vec();
        bytes[HEADER_LEN..HEADER_LEN + 2].copy_from_slice(&31u16.to_le_bytes());
        bytes.extend_from_slice(&[0xaa, 0xbb]);
        assert_eq!(decode_native(&bytes).unwrap(), NativeTrace::Blocks(vec![r]));
    }
}
