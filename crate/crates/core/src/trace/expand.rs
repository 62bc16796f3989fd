//! Block to line expansion.

use serde::{Deserialize, Serialize};

use super::{LineRequest, TraceRecord};
use crate::{LINES_PER_BLOCK, LINE_BYTES};

/// How fingerprinting time is charged to write requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashCharging {
    /// Every line waits for its own 256 bytes to be hashed.
    #[default]
    PerLine,
    /// All lines of a block wait for the whole 4 KiB block.
    PerBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandOptions {
    pub hash_cost_cycles_per_byte: f64,
    pub hash_charging: HashCharging,
    /// Controller clock used to convert trace nanoseconds to cycles.
    pub clock_mhz: f64,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self {
            hash_cost_cycles_per_byte: 1.0,
            hash_charging: HashCharging::PerLine,
            clock_mhz: 800.0,
        }
    }
}

impl ExpandOptions {
    /// Fingerprinting delay added to each write line.
    pub fn write_delay_cycles(&self) -> u64 {
        let bytes = match self.hash_charging {
            HashCharging::PerLine => LINE_BYTES,
            HashCharging::PerBlock => crate::BLOCK_BYTES,
        };
        (bytes as f64 * self.hash_cost_cycles_per_byte).ceil().max(0.0) as u64
    }
}

/// Expands single-block records into 16 line requests each.
///
/// Line `i` of block `b` gets logical line address `b * 16 + i` (low 32 bits)
/// and inherits the block hash as its fingerprint. Arrival cycles are measured
/// from the first record's timestamp; writes are delayed by the hashing cost.
/// Arrivals are clamped to be nondecreasing so request order is preserved.
pub fn expand_to_lines(records: &[TraceRecord], options: &ExpandOptions) -> Vec<LineRequest> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let origin = first.timestamp_ns;
    let cycles_per_ns = options.clock_mhz / 1000.0;
    let write_delay = options.write_delay_cycles();

    let total_blocks: u64 = records.iter().map(|r| u64::from(r.block_count)).sum();
    let mut out = Vec::with_capacity((total_blocks * LINES_PER_BLOCK) as usize);
    let mut last_arrival = 0u64;
    for r in records {
        let base = (r.timestamp_ns.saturating_sub(origin) as f64 * cycles_per_ns) as u64;
        let delay = if r.op.is_write() { write_delay } else { 0 };
        let arrival = (base + delay).max(last_arrival);
        last_arrival = arrival;
        for b in 0..u64::from(r.block_count) {
            let block = r.block_lba.wrapping_add(b);
            for i in 0..LINES_PER_BLOCK {
                out.push(LineRequest {
                    arrival_cycle: arrival,
                    lla: block.wrapping_mul(LINES_PER_BLOCK).wrapping_add(i) as u32,
                    op: r.op,
                    lfp: r.block_hash,
                    payload: None,
                });
            }
        }
    }
    out
}
