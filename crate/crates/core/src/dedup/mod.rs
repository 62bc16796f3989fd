//! Inline line deduplication: the address mapping table (AMT) and the line
//! fingerprint index (LFI).
//!
//! The AMT maps logical line addresses to physical line addresses and may map
//! many logical lines onto one physical line. The LFI maps a fingerprint to
//! the physical line holding that content together with its reference count.
//! Fingerprints are 32-bit, so distinct contents can collide; a fingerprint
//! therefore owns a short chain of entries, each tagged with a disambiguator,
//! and every entry is still one-to-one with its physical line.

mod engine;
pub mod snapshot;

pub use snapshot::{decode_snapshot, encode_snapshot};

pub use engine::{
    CountingAllocator, DedupEngine, DedupOutcome, DedupStats, LfiEntry, LineAllocator, MemOp,
    MetaKey, OutcomeKind, ReadOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::LINE_BYTES;

pub type Lla = u32;
pub type Pla = u32;
pub type Lfp = u32;

/// Bytes per AMT entry: a 4-byte LLA and a 4-byte PLA.
pub const AMT_ENTRY_BYTES: u64 = 8;
/// Bytes per LFI entry: 4-byte fingerprint, 4-byte PLA, 2-byte reference count.
pub const LFI_ENTRY_BYTES: u64 = 10;
/// Largest reference count a 2-byte field can hold.
pub const MAX_REF_COUNT: u16 = u16::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DedupError {
    #[error("no free physical line")]
    Capacity,
    #[error("logical line {0:#x} is not mapped")]
    NotMapped(Lla),
    #[error("capacity {0} is not a multiple of the {LINE_BYTES}-byte line size")]
    Unaligned(u64),
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
}

/// Space needed by the AMT and LFI to cover a memory of a given size, with
/// one entry of each per line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataBudget {
    pub memory_capacity_bytes: u64,
    pub line_size_bytes: u64,
    pub amt_bytes: u64,
    pub lfi_bytes: u64,
}

impl MetadataBudget {
    pub fn lines(&self) -> u64 {
        self.memory_capacity_bytes / self.line_size_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.amt_bytes + self.lfi_bytes
    }
}

pub fn metadata_budget(capacity_bytes: u64) -> Result<MetadataBudget, DedupError> {
    if capacity_bytes % LINE_BYTES != 0 {
        return Err(DedupError::Unaligned(capacity_bytes));
    }
    let lines = capacity_bytes / LINE_BYTES;
    Ok(MetadataBudget {
        memory_capacity_bytes: capacity_bytes,
        line_size_bytes: LINE_BYTES,
        amt_bytes: lines * AMT_ENTRY_BYTES,
        lfi_bytes: lines * LFI_ENTRY_BYTES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{GIB, MIB};

    #[test]
    fn sixteen_gib() {
        let b = metadata_budget(16 * GIB).unwrap();
        assert_eq!(b.amt_bytes, 512 * MIB);
        assert_eq!(b.lfi_bytes, 640 * MIB);
    }

    #[test]
    fn single_line() {
        let b = metadata_budget(256).unwrap();
        assert_eq!((b.amt_bytes, b.lfi_bytes), (8, 10));
    }

    #[test]
    fn two_plus_eight() {
        let b = metadata_budget(10 * GIB).unwrap();
        assert_eq!((b.amt_bytes, b.lfi_bytes), (320 * MIB, 400 * MIB));
        assert_eq!(b.total_bytes(), 720 * MIB);
    }

    #[test]
    fn unaligned_capacity() {
        assert_eq!(metadata_budget(1000), Err(DedupError::Unaligned(1000)));
    }
}
