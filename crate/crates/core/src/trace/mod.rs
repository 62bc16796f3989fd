//! Block I/O traces and the line requests derived from them.
//!
//! Two on-disk formats are understood: the FIU/SNIA IOTTA text traces (see
//! [`fiu`]) and the native little-endian `.clt` format (see [`native`]).
//! Block records are expanded to 256-byte [`LineRequest`]s by [`expand`], and
//! [`synthetic`] builds line traces with exact duplication ratios.

pub mod expand;
pub mod fiu;
pub mod native;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, BufReader, Read};

use flate2::bufread::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expand::{expand_to_lines, ExpandOptions, HashCharging};
pub use native::{decode_native, encode_native, NativeTrace};
pub use synthetic::{generate_synthetic, SyntheticTraceSpec};

use crate::{LINES_PER_BLOCK, LINE_BYTES};

/// A line payload, present only for synthetic traces generated with content.
pub type LinePayload = Box<[u8; LINE_BYTES as usize]>;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error reading trace: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace: {malformed} of {total} lines unparseable (first failure at line {first_line}: {reason})")]
    Format {
        first_line: usize,
        reason: String,
        malformed: usize,
        total: usize,
    },
    #[error("bad native trace: {0}")]
    Native(String),
    #[error("invalid synthetic trace spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn is_write(self) -> bool {
        matches!(self, Op::Write)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Read => "read",
            Op::Write => "write",
        })
    }
}

/// One block-level I/O event. `block_lba` counts 4096-byte blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp_ns: u64,
    pub device_id: u32,
    pub block_lba: u64,
    pub block_count: u32,
    pub op: Op,
    pub block_hash: u32,
}

/// One 256-byte line read or write presented to the memory controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineRequest {
    pub arrival_cycle: u64,
    pub lla: u32,
    pub op: Op,
    pub lfp: u32,
    pub payload: Option<LinePayload>,
}

impl LineRequest {
    pub fn read(arrival_cycle: u64, lla: u32) -> Self {
        Self {
            arrival_cycle,
            lla,
            op: Op::Read,
            lfp: 0,
            payload: None,
        }
    }

    pub fn write(arrival_cycle: u64, lla: u32, lfp: u32) -> Self {
        Self {
            arrival_cycle,
            lla,
            op: Op::Write,
            lfp,
            payload: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Fiu,
    Native,
}

/// Records parsed from a trace plus the number of skipped malformed lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedTrace {
    pub records: Vec<TraceRecord>,
    pub skipped: usize,
}

/// Wraps `source` so gzip-compressed input is decoded transparently.
pub fn open_transparent<'a, R: Read + 'a>(source: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut reader = BufReader::new(source);
    let head = reader.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Parses a block trace in `format`.
///
/// Multi-block records are expanded to one record per block. Output is
/// stably sorted by timestamp. Text formats tolerate up to 1% malformed lines.
pub fn parse_trace<R: Read>(source: R, format: TraceFormat) -> Result<ParsedTrace, TraceError> {
    let mut reader = open_transparent(source)?;
    let mut parsed = match format {
        TraceFormat::Fiu => fiu::parse_fiu(reader)?,
        TraceFormat::Native => {
            let mut bytes = Vec::new();
            reader.read_to_end(&mut bytes)?;
            match decode_native(&bytes)? {
                NativeTrace::Blocks(records) => ParsedTrace {
                    records: expand_block_counts(records),
                    skipped: 0,
                },
                NativeTrace::Lines(_) => {
                    return Err(TraceError::Native(
                        "file holds line requests, not block records".into(),
                    ))
                }
            }
        }
    };
    parsed.records.sort_by_key(|r| r.timestamp_ns);
    Ok(parsed)
}

/// Splits every record with `block_count > 1` into single-block records.
///
/// A record carries one hash, so every block it covers inherits it.
pub fn expand_block_counts(records: Vec<TraceRecord>) -> Vec<TraceRecord> {
    if records.iter().all(|r| r.block_count == 1) {
        return records;
    }
    let mut out = Vec::with_capacity(records.iter().map(|r| r.block_count as usize).sum());
    for r in records {
        for i in 0..u64::from(r.block_count) {
            out.push(TraceRecord {
                block_lba: r.block_lba + i,
                block_count: 1,
                ..r
            });
        }
    }
    out
}

/// Read/write totals and unique-content counts, in the shape of a workload
/// characterization table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStats {
    pub total_reads: u64,
    pub unique_reads: u64,
    pub total_writes: u64,
    pub unique_writes: u64,
    /// Number of 256-byte lines the counts above correspond to, per direction.
    pub read_lines: u64,
    pub write_lines: u64,
}

impl TraceStats {
    /// Statistics of a block trace; counts are in blocks.
    pub fn of_blocks(records: &[TraceRecord]) -> Self {
        let mut stats = Self::default();
        let mut read_hashes = HashSet::new();
        let mut write_hashes = HashSet::new();
        for r in records {
            let blocks = u64::from(r.block_count);
            match r.op {
                Op::Read => {
                    stats.total_reads += blocks;
                    read_hashes.insert(r.block_hash);
                }
                Op::Write => {
                    stats.total_writes += blocks;
                    write_hashes.insert(r.block_hash);
                }
            }
        }
        stats.unique_reads = read_hashes.len() as u64;
        stats.unique_writes = write_hashes.len() as u64;
        stats.read_lines = stats.total_reads * LINES_PER_BLOCK;
        stats.write_lines = stats.total_writes * LINES_PER_BLOCK;
        stats
    }

    /// Statistics of a line trace; counts are in lines.
    pub fn of_lines(requests: &[LineRequest]) -> Self {
        let mut stats = Self::default();
        let mut read_llas = HashSet::new();
        let mut write_fps = HashSet::new();
        for r in requests {
            match r.op {
                Op::Read => {
                    stats.total_reads += 1;
                    read_llas.insert(r.lla);
                }
                Op::Write => {
                    stats.total_writes += 1;
                    write_fps.insert(r.lfp);
                }
            }
        }
        // Line reads carry no fingerprint; distinct addresses stand in.
        stats.unique_reads = read_llas.len() as u64;
        stats.unique_writes = write_fps.len() as u64;
        stats.read_lines = stats.total_reads;
        stats.write_lines = stats.total_writes;
        stats
    }
}
