//! Bank and row-buffer timing for one DRAM channel and one PCM channel.
//!
//! Each bank follows an open-page policy. A request to the open row pays only
//! the data burst; a request to another row precharges the open row and
//! activates the new one first; a request to an idle bank only activates.
//! Bursts of all banks in a channel share one data bus. A burst takes the
//! earliest free bus slot once its bank is ready, so an access to an idle bank
//! never waits behind one stalled on a busy bank.

mod address;
mod timing;

pub use address::{AddressMapping, DecodedAddress, Geometry};
pub use timing::{DeviceTiming, TimingPreset};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemdevError {
    #[error("line {addr} outside {device} channel of {lines} lines")]
    OutOfRange {
        device: DeviceKind,
        addr: u64,
        lines: u64,
    },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid timing: {0}")]
    Timing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Dram,
    Pcm,
}

impl std::fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeviceKind::Dram => "dram",
            DeviceKind::Pcm => "pcm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    LineRead,
    LineWrite,
    MetadataRead,
    MetadataWrite,
    CompareRead,
}

impl OpKind {
    pub fn is_write(self) -> bool {
        matches!(self, OpKind::LineWrite | OpKind::MetadataWrite)
    }

    pub fn is_metadata(self) -> bool {
        matches!(self, OpKind::MetadataRead | OpKind::MetadataWrite)
    }
}

/// One serviced access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceOp {
    pub kind: OpKind,
    pub device: DeviceKind,
    pub addr: u64,
    pub issue_cycle: u64,
    pub complete_cycle: u64,
    pub row_hit: bool,
    pub activated: bool,
    pub precharged: bool,
}

impl DeviceOp {
    pub fn latency(&self) -> u64 {
        self.complete_cycle - self.issue_cycle
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BankState {
    pub open_row: Option<u32>,
    /// Cycle at which the bank can accept its next command.
    pub busy_until: u64,
    pub last_activate: Option<u64>,
}

/// Event counts of one channel, the input to energy accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCounts {
    pub line_reads: u64,
    pub line_writes: u64,
    pub metadata_reads: u64,
    pub metadata_writes: u64,
    pub compare_reads: u64,
    pub activations: u64,
    pub precharges: u64,
    pub row_hits: u64,
    /// Cycles the data bus carried a burst.
    pub busy_cycles: u64,
}

/// Reserved burst intervals on a channel's data bus.
#[derive(Debug, Clone, Default)]
struct DataBus {
    /// start -> end, non-overlapping.
    slots: BTreeMap<u64, u64>,
    /// Nothing may be placed before this cycle; covers forgotten slots.
    floor: u64,
}

impl DataBus {
    /// Forgets slots that ended by `now`.
    fn retire(&mut self, now: u64) {
        while let Some((&start, &end)) = self.slots.first_key_value() {
            if end > now {
                break;
            }
            self.slots.remove(&start);
            self.floor = self.floor.max(end);
        }
    }

    /// Books `len` cycles starting no earlier than `ready`; returns the start.
    fn reserve(&mut self, ready: u64, len: u64) -> u64 {
        let mut t = ready.max(self.floor);
        for (&start, &end) in &self.slots {
            if end <= t {
                continue;
            }
            if start >= t + len {
                break;
            }
            t = end;
        }
        if len > 0 {
            self.slots.insert(t, t + len);
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct Channel {
    device: DeviceKind,
    timing: DeviceTiming,
    geometry: Geometry,
    banks: Vec<BankState>,
    bus: DataBus,
    wear: Vec<u64>,
    counts: ChannelCounts,
}

impl Channel {
    pub fn new(
        device: DeviceKind,
        timing: DeviceTiming,
        capacity_bytes: u64,
        mapping: AddressMapping,
    ) -> Result<Self, MemdevError> {
        timing.validate()?;
        let geometry = Geometry::new(&timing, capacity_bytes, mapping)?;
        let wear = match device {
            DeviceKind::Pcm => vec![0; geometry.total_rows() as usize],
            DeviceKind::Dram => Vec::new(),
        };
        Ok(Self {
            device,
            banks: vec![BankState::default(); geometry.total_banks() as usize],
            timing,
            geometry,
            bus: DataBus::default(),
            wear,
            counts: ChannelCounts::default(),
        })
    }

    pub fn device(&self) -> DeviceKind {
        self.device
    }

    pub fn timing(&self) -> &DeviceTiming {
        &self.timing
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn counts(&self) -> &ChannelCounts {
        &self.counts
    }

    pub fn bank(&self, index: usize) -> &BankState {
        &self.banks[index]
    }

    pub fn decode(&self, addr: u64) -> Result<DecodedAddress, MemdevError> {
        self.geometry.decode(addr).ok_or(MemdevError::OutOfRange {
            device: self.device,
            addr,
            lines: self.geometry.lines(),
        })
    }

    fn burst(&self, kind: OpKind) -> u64 {
        let base = if kind.is_metadata() {
            self.timing.metadata_burst_cycles
        } else {
            self.timing.burst_cycles_per_line
        };
        if kind.is_write() {
            (base as f64 * self.timing.write_multiplier).ceil() as u64
        } else {
            base
        }
    }

    /// Services one access to line `addr` issued at `now`.
    pub fn service(&mut self, kind: OpKind, addr: u64, now: u64) -> Result<DeviceOp, MemdevError> {
        let d = self.decode(addr)?;
        let t = self.timing;
        let burst = self.burst(kind);
        let bank_index = self.geometry.bank_index(&d);
        let bank = &mut self.banks[bank_index];
        let start = now.max(bank.busy_until);

        let (mut data_start, row_hit, activated, precharged) = match bank.open_row {
            Some(r) if r == d.row => (start, true, false, false),
            Some(_) => {
                let last = bank.last_activate.unwrap_or(0);
                let precharge = start.max(last + t.t_ras);
                let activate = (precharge + t.t_rp).max(last + t.t_rc);
                bank.last_activate = Some(activate);
                (activate + t.t_rcd, false, true, true)
            }
            None => {
                let activate = bank.last_activate.map_or(start, |l| start.max(l + t.t_rc));
                bank.last_activate = Some(activate);
                (activate + t.t_rcd, false, true, false)
            }
        };
        self.bus.retire(now);
        data_start = self.bus.reserve(data_start, burst);
        let complete = data_start + burst;
        bank.busy_until = complete;
        bank.open_row = Some(d.row);

        let c = &mut self.counts;
        c.busy_cycles += burst;
        c.row_hits += u64::from(row_hit);
        c.activations += u64::from(activated);
        c.precharges += u64::from(precharged);
        match kind {
            OpKind::LineRead => c.line_reads += 1,
            OpKind::LineWrite => c.line_writes += 1,
            OpKind::MetadataRead => c.metadata_reads += 1,
            OpKind::MetadataWrite => c.metadata_writes += 1,
            OpKind::CompareRead => c.compare_reads += 1,
        }
        if kind == OpKind::LineWrite && self.device == DeviceKind::Pcm {
            self.wear[self.geometry.global_row(&d) as usize] += 1;
        }
        Ok(DeviceOp {
            kind,
            device: self.device,
            addr,
            issue_cycle: now,
            complete_cycle: complete,
            row_hit,
            activated,
            precharged,
        })
    }

    /// Line writes per row across all banks (PCM only; empty for DRAM).
    pub fn wear_histogram(&self) -> &[u64] {
        &self.wear
    }

    pub fn reset_wear(&mut self) {
        self.wear.iter_mut().for_each(|w| *w = 0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WearSummary {
    pub rows: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    pub total: u64,
}

impl WearSummary {
    pub fn of(hist: &[u64]) -> Self {
        let total: u64 = hist.iter().sum();
        Self {
            rows: hist.len() as u64,
            min: hist.iter().copied().min().unwrap_or(0),
            max: hist.iter().copied().max().unwrap_or(0),
            mean: if hist.is_empty() {
                0.0
            } else {
                total as f64 / hist.len() as f64
            },
            total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GIB;

    fn channel(device: DeviceKind) -> Channel {
        let (timing, cap) = match device {
            DeviceKind::Dram => (DeviceTiming::table1_dram(), 2 * GIB),
            DeviceKind::Pcm => (DeviceTiming::table1_pcm(), 8 * GIB),
        };
        Channel::new(device, timing, cap, AddressMapping::RowBankColumn).unwrap()
    }

    /// Second line of the same bank in a different row.
    fn other_row(c: &Channel) -> u64 {
        let g = c.geometry();
        g.encode(&DecodedAddress { row: 1, ..g.decode(0).unwrap() }).unwrap()
    }

    fn three_cases(device: DeviceKind, kind: OpKind) -> [u64; 3] {
        let mut c = channel(device);
        let idle = c.service(kind, 0, 0).unwrap();
        let hit = c.service(kind, 1, idle.complete_cycle).unwrap();
        assert!(hit.row_hit);
        let far = other_row(&c);
        let miss = c.service(kind, far, hit.complete_cycle + 1000).unwrap();
        assert!(miss.precharged && miss.activated);
        [idle.latency(), miss.latency(), hit.latency()]
    }

    #[test]
    fn table1_single_access_latencies() {
        assert_eq!(three_cases(DeviceKind::Dram, OpKind::LineRead), [54, 114, 32]);
        assert_eq!(three_cases(DeviceKind::Dram, OpKind::LineWrite), [54, 114, 32]);
        assert_eq!(three_cases(DeviceKind::Pcm, OpKind::LineRead), [37, 42, 32]);
        assert_eq!(three_cases(DeviceKind::Pcm, OpKind::LineWrite), [133, 138, 128]);
    }

    #[test]
    fn back_to_back_row_miss_respects_row_cycle() {
        let mut c = channel(DeviceKind::Dram);
        let a = c.service(OpKind::LineRead, 0, 0).unwrap();
        assert_eq!(a.complete_cycle, 54);
        let far = other_row(&c);
        let b = c.service(OpKind::LineRead, far, a.complete_cycle).unwrap();
        // precharge at 54 (t_ras satisfied), activate at 114, data at 136.
        assert_eq!(b.complete_cycle, 168);
        assert_eq!(b.latency(), 114);
        // A miss right after activation waits for t_ras before precharging.
        let mut p = channel(DeviceKind::Pcm);
        p.service(OpKind::LineRead, 0, 0).unwrap();
        let far = other_row(&p);
        let r = p.service(OpKind::LineRead, far, 0).unwrap();
        // bank busy until 37; precharge 37, activate 42, data 47..79
        assert_eq!(r.complete_cycle, 79);
    }

    #[test]
    fn bursts_share_the_bus() {
        let mut c = channel(DeviceKind::Dram);
        let a = c.service(OpKind::LineRead, 0, 0).unwrap();
        let g = c.geometry();
        let other_bank = g.encode(&DecodedAddress { bank: 1, ..g.decode(0).unwrap() }).unwrap();
        let b = c.service(OpKind::LineRead, other_bank, 0).unwrap();
        assert_eq!(a.complete_cycle, 54);
        assert_eq!(b.complete_cycle, 86);
        assert_eq!(c.counts().activations, 2);
    }

    #[test]
    fn idle_bank_fills_bus_gap() {
        let mut c = channel(DeviceKind::Dram);
        let g = *c.geometry();
        let at = |bank, row| g.encode(&DecodedAddress { bank, row, ..g.decode(0).unwrap() }).unwrap();
        assert_eq!(c.service(OpKind::LineRead, at(0, 0), 0).unwrap().complete_cycle, 54);
        // row conflict: precharge 54, activate 114, data 136..168
        assert_eq!(c.service(OpKind::LineRead, at(0, 1), 0).unwrap().complete_cycle, 168);
        assert_eq!(c.service(OpKind::LineRead, at(1, 0), 0).unwrap().complete_cycle, 86);
        assert_eq!(c.service(OpKind::LineRead, at(2, 0), 0).unwrap().complete_cycle, 118);
        // 118..136 is too short for a line burst
        assert_eq!(c.service(OpKind::LineRead, at(3, 0), 0).unwrap().complete_cycle, 200);
        assert_eq!(c.service(OpKind::MetadataRead, at(4, 0), 0).unwrap().complete_cycle, 126);
    }

    #[test]
    fn metadata_bursts_are_shorter() {
        let mut c = channel(DeviceKind::Dram);
        let op = c.service(OpKind::MetadataRead, 0, 0).unwrap();
        assert_eq!(op.latency(), 22 + 8);
    }

    #[test]
    fn wear_counts_pcm_line_writes_only() {
        let mut c = channel(DeviceKind::Pcm);
        assert!(c.wear_histogram().iter().all(|&w| w == 0));
        c.service(OpKind::LineWrite, 0, 0).unwrap();
        c.service(OpKind::LineWrite, 1, 0).unwrap();
        c.service(OpKind::LineRead, 2, 0).unwrap();
        let s = WearSummary::of(c.wear_histogram());
        assert_eq!((s.total, s.max), (2, 2));
        assert_eq!(s.rows, 8 * 32768);
        assert!(channel(DeviceKind::Dram).wear_histogram().is_empty());
    }

    #[test]
    fn out_of_range() {
        let mut c = channel(DeviceKind::Dram);
        let lines = c.geometry().lines();
        assert!(matches!(
            c.service(OpKind::LineRead, lines, 0),
            Err(MemdevError::OutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut c = channel(DeviceKind::Pcm);
            (0..500u64)
                .map(|i| {
                    let kind = if i % 3 == 0 { OpKind::LineWrite } else { OpKind::LineRead };
                    c.service(kind, (i * 7919) % c.geometry().lines(), i * 10).unwrap().complete_cycle
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
