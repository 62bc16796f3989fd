//! Seeded synthetic line traces with an exact number of distinct write
//! fingerprints.
//!
//! Generation is constructive: the write stream is a shuffled sequence of
//! content ids in which each of the `U` ids appears at least once, so the
//! distinct-fingerprint count is exact rather than a sampling outcome.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LineRequest, LinePayload, Op, TraceError};
use crate::hash::super_fast_hash;
use crate::LINE_BYTES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTraceSpec {
    pub total_lines: u64,
    /// Distinct write contents as a fraction of write requests, in (0, 1].
    pub unique_fraction: f64,
    #[serde(default)]
    pub read_fraction: f64,
    #[serde(default = "default_address_space")]
    pub address_space_lines: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub with_payload: bool,
    /// Fraction of duplicate writes that re-store identical content at an
    /// address already holding it. The rest land on random addresses.
    #[serde(default)]
    pub rewrite_fraction: f64,
    /// Spacing between consecutive arrivals; 0 issues the trace back to back.
    #[serde(default)]
    pub inter_arrival_cycles: u64,
}

fn default_address_space() -> u64 {
    1 << 32
}

impl SyntheticTraceSpec {
    pub fn new(total_lines: u64, unique_fraction: f64, rng_seed: u64) -> Self {
        Self {
            total_lines,
            unique_fraction,
            read_fraction: 0.0,
            address_space_lines: default_address_space(),
            rng_seed,
            with_payload: false,
            rewrite_fraction: 0.0,
            inter_arrival_cycles: 0,
        }
    }

    pub fn read_count(&self) -> u64 {
        (self.total_lines as f64 * self.read_fraction).round() as u64
    }

    pub fn write_count(&self) -> u64 {
        self.total_lines - self.read_count()
    }

    /// Number of distinct write fingerprints the trace will contain:
    /// `ceil(unique_fraction * writes)`, robust to the rounding of fractions
    /// written as `unique / total`.
    pub fn unique_writes(&self) -> u64 {
        let writes = self.write_count();
        if writes == 0 {
            return 0;
        }
        let exact = self.unique_fraction * writes as f64;
        ((exact - 1e-6).ceil() as u64).clamp(1, writes)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: String| Err(TraceError::Spec(msg));
        if !(self.unique_fraction > 0.0 && self.unique_fraction <= 1.0) {
            return bad(format!("unique_fraction {} not in (0, 1]", self.unique_fraction));
        }
        if self.unique_fraction * (self.total_lines as f64) < 1.0 {
            return bad("unique_fraction * total_lines must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return bad(format!("read_fraction {} not in [0, 1]", self.read_fraction));
        }
        if !(0.0..=1.0).contains(&self.rewrite_fraction) {
            return bad(format!("rewrite_fraction {} not in [0, 1]", self.rewrite_fraction));
        }
        if self.address_space_lines == 0 || self.address_space_lines > 1 << 32 {
            return bad(format!(
                "address_space_lines {} not in [1, 2^32]",
                self.address_space_lines
            ));
        }
        Ok(())
    }
}

/// murmur3's 32-bit finalizer; a bijection on `u32`.
fn fmix32(mut h: u32) -> u32 {
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    h
}

fn shuffled_flags(rng: &mut ChaCha8Rng, len: usize, set: usize) -> Vec<bool> {
    let mut flags = vec![false; len];
    flags[..set].fill(true);
    flags.shuffle(rng);
    flags
}

/// Builds the trace described by `spec`. Identical specs give identical traces.
pub fn generate_synthetic(spec: &SyntheticTraceSpec) -> Result<Vec<LineRequest>, TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let total = spec.total_lines as usize;
    let reads = spec.read_count() as usize;
    let writes = total - reads;
    let unique = spec.unique_writes() as usize;
    let duplicates = writes - unique;

    // Content id of every write, in issue order.
    let mut contents: Vec<u32> = (0..unique as u32).collect();
    contents.extend((0..duplicates).map(|_| rng.gen_range(0..unique as u32)));
    contents.shuffle(&mut rng);

    let rewrites = (duplicates as f64 * spec.rewrite_fraction).round() as usize;
    let rewrite_flags = shuffled_flags(&mut rng, duplicates, rewrites.min(duplicates));
    let read_flags = shuffled_flags(&mut rng, total, reads);

    let key = (spec.rng_seed as u32) ^ ((spec.rng_seed >> 32) as u32);
    let (fingerprints, payloads) = if spec.with_payload {
        let mut seen = HashSet::with_capacity(unique);
        let mut fps = Vec::with_capacity(unique);
        let mut bodies: Vec<LinePayload> = Vec::with_capacity(unique);
        for _ in 0..unique {
            loop {
                let mut body = Box::new([0u8; LINE_BYTES as usize]);
                rng.fill_bytes(&mut body[..]);
                let fp = super_fast_hash(&body[..]);
                if seen.insert(fp) {
                    fps.push(fp);
                    bodies.push(body);
                    break;
                }
            }
        }
        (fps, Some(bodies))
    } else {
        ((0..unique as u32).map(|c| fmix32(c ^ key)).collect(), None)
    };

    let mut holders: Vec<Vec<u32>> = vec![Vec::new(); unique];
    let mut current: HashMap<u32, u32> = HashMap::new();
    let mut written: Vec<u32> = Vec::new();
    let mut seen_content = vec![false; unique];
    let mut next_write = 0usize;
    let mut next_dup = 0usize;
    let mut out = Vec::with_capacity(total);

    for (i, is_read) in read_flags.into_iter().enumerate() {
        let arrival_cycle = i as u64 * spec.inter_arrival_cycles;
        if is_read {
            let lla = if written.is_empty() {
                rng.gen_range(0..spec.address_space_lines) as u32
            } else {
                written[rng.gen_range(0..written.len())]
            };
            out.push(LineRequest::read(arrival_cycle, lla));
            continue;
        }

        let content = contents[next_write];
        next_write += 1;
        let mut rewrite = false;
        if seen_content[content as usize] {
            rewrite = rewrite_flags[next_dup];
            next_dup += 1;
        }
        seen_content[content as usize] = true;

        let held = &holders[content as usize];
        let lla = if rewrite && !held.is_empty() {
            held[rng.gen_range(0..held.len())]
        } else {
            rng.gen_range(0..spec.address_space_lines) as u32
        };

        match current.insert(lla, content) {
            None => written.push(lla),
            Some(prev) if prev != content => {
                let list = &mut holders[prev as usize];
                if let Some(pos) = list.iter().position(|&a| a == lla) {
                    list.swap_remove(pos);
                }
            }
            Some(_) => {}
        }
        if !holders[content as usize].contains(&lla) {
            holders[content as usize].push(lla);
        }

        out.push(LineRequest {
            arrival_cycle,
            lla,
            op: Op::Write,
            lfp: fingerprints[content as usize],
            payload: payloads.as_ref().map(|p| p[content as usize].clone()),
        });
    }
    Ok(out)
}
