//! Energy from event counts: per-access energies, idle power over idle time,
//! and DRAM refresh power over the whole run.

use serde::{Deserialize, Serialize};

use crate::memdev::ChannelCounts;
use crate::trace::LineRequest;
use crate::GIB;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEnergy {
    pub read_pj_per_line: f64,
    pub write_pj_per_line: f64,
    pub metadata_read_pj: f64,
    pub metadata_write_pj: f64,
    pub activate_pj: f64,
    pub idle_mw_per_gb: f64,
    #[serde(default)]
    pub refresh_mw_per_gb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConstants {
    pub dram: DeviceEnergy,
    pub pcm: DeviceEnergy,
    pub clock_mhz: f64,
}

impl EnergyConstants {
    /// Relative magnitudes only: PCM reads cost twice a DRAM access and PCM
    /// writes eight times; a 64 B metadata access costs a quarter of a line.
    /// Per-line figures already cover row activation, so `activate_pj` is 0.
    pub fn default_preset() -> Self {
        Self {
            dram: DeviceEnergy {
                read_pj_per_line: 1000.0,
                write_pj_per_line: 1000.0,
                metadata_read_pj: 250.0,
                metadata_write_pj: 250.0,
                activate_pj: 0.0,
                idle_mw_per_gb: 1.0,
                refresh_mw_per_gb: 0.5,
            },
            pcm: DeviceEnergy {
                read_pj_per_line: 2000.0,
                write_pj_per_line: 8000.0,
                metadata_read_pj: 500.0,
                metadata_write_pj: 2000.0,
                activate_pj: 0.0,
                idle_mw_per_gb: 0.1,
                refresh_mw_per_gb: 0.0,
            },
            clock_mhz: 800.0,
        }
    }

    /// The default access energies with all background power removed.
    pub fn dynamic_only() -> Self {
        let mut c = Self::default_preset();
        for d in [&mut c.dram, &mut c.pcm] {
            d.idle_mw_per_gb = 0.0;
            d.refresh_mw_per_gb = 0.0;
        }
        c
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_preset()),
            "dynamic-only" => Some(Self::dynamic_only()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, d) in [("dram", &self.dram), ("pcm", &self.pcm)] {
            let values = [
                d.read_pj_per_line,
                d.write_pj_per_line,
                d.metadata_read_pj,
                d.metadata_write_pj,
                d.activate_pj,
                d.idle_mw_per_gb,
                d.refresh_mw_per_gb,
            ];
            if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(format!("{name} energy constants must be finite and nonnegative"));
            }
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err("clock_mhz must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceLedger {
    pub capacity_bytes: u64,
    pub counts: ChannelCounts,
    pub busy_cycles: u64,
    pub idle_cycles: u64,
}

impl DeviceLedger {
    pub fn new(capacity_bytes: u64, counts: ChannelCounts, total_cycles: u64) -> Self {
        let busy = counts.busy_cycles.min(total_cycles);
        Self {
            capacity_bytes,
            counts,
            busy_cycles: busy,
            idle_cycles: total_cycles - busy,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub dram: DeviceLedger,
    pub pcm: DeviceLedger,
    pub total_cycles: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceEnergyReport {
    pub dynamic_mj: f64,
    pub idle_mj: f64,
    pub refresh_mj: f64,
    pub total_mj: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dram: DeviceEnergyReport,
    pub pcm: DeviceEnergyReport,
    pub total_mj: f64,
}

const PJ_PER_MJ: f64 = 1e9;

fn device_energy(l: &DeviceLedger, e: &DeviceEnergy, total_cycles: u64, clock_mhz: f64) -> DeviceEnergyReport {
    let c = &l.counts;
    let dynamic_pj = (c.line_reads + c.compare_reads) as f64 * e.read_pj_per_line
        + c.line_writes as f64 * e.write_pj_per_line
        + c.metadata_reads as f64 * e.metadata_read_pj
        + c.metadata_writes as f64 * e.metadata_write_pj
        + c.activations as f64 * e.activate_pj;
    let gb = l.capacity_bytes as f64 / GIB as f64;
    let seconds = |cycles: u64| cycles as f64 / (clock_mhz * 1e6);
    // mW x s = mJ
    let idle_mj = e.idle_mw_per_gb * gb * seconds(l.idle_cycles);
    let refresh_mj = e.refresh_mw_per_gb * gb * seconds(total_cycles);
    let dynamic_mj = dynamic_pj / PJ_PER_MJ;
    DeviceEnergyReport {
        dynamic_mj,
        idle_mj,
        refresh_mj,
        total_mj: dynamic_mj + idle_mj + refresh_mj,
    }
}

pub fn total_energy(ledger: &EnergyLedger, constants: &EnergyConstants) -> EnergyReport {
    let dram = device_energy(&ledger.dram, &constants.dram, ledger.total_cycles, constants.clock_mhz);
    let pcm = device_energy(&ledger.pcm, &constants.pcm, ledger.total_cycles, constants.clock_mhz);
    EnergyReport {
        dram,
        pcm,
        total_mj: dram.total_mj + pcm.total_mj,
    }
}

/// Removes idle gaps: every request arrives with the first one, so each is
/// issued as soon as the controller can take it. Order and op mix are kept.
pub fn stress_mode_transform(trace: &[LineRequest]) -> Vec<LineRequest> {
    let start = trace.first().map_or(0, |r| r.arrival_cycle);
    trace
        .iter()
        .map(|r| LineRequest {
            arrival_cycle: start,
            ..r.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Op;

    fn zero_idle() -> EnergyConstants {
        let mut c = EnergyConstants::default_preset();
        for d in [&mut c.dram, &mut c.pcm] {
            d.idle_mw_per_gb = 0.0;
            d.refresh_mw_per_gb = 0.0;
        }
        c
    }

    #[test]
    fn zero_ledger_is_zero() {
        let r = total_energy(&EnergyLedger::default(), &EnergyConstants::default_preset());
        assert_eq!(r.total_mj, 0.0);
    }

    #[test]
    fn one_dram_write() {
        let mut l = EnergyLedger::default();
        l.dram.counts.line_writes = 1;
        let r = total_energy(&l, &zero_idle());
        assert_eq!(r.total_mj * PJ_PER_MJ, 1000.0);
    }

    #[test]
    fn linearity() {
        let c = zero_idle();
        let mut l = EnergyLedger::default();
        l.dram.counts = ChannelCounts {
            line_reads: 3,
            line_writes: 5,
            metadata_reads: 7,
            metadata_writes: 11,
            compare_reads: 2,
            activations: 13,
            ..Default::default()
        };
        l.pcm.counts = ChannelCounts { line_writes: 4, line_reads: 9, activations: 1, ..Default::default() };
        let mut double = l;
        for d in [&mut double.dram.counts, &mut double.pcm.counts] {
            d.line_reads *= 2;
            d.line_writes *= 2;
            d.metadata_reads *= 2;
            d.metadata_writes *= 2;
            d.compare_reads *= 2;
            d.activations *= 2;
        }
        let a = total_energy(&l, &c).total_mj;
        let b = total_energy(&double, &c).total_mj;
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn idle_and_refresh() {
        let c = EnergyConstants::default_preset();
        let cycles = 800_000_000; // one second
        let dram = EnergyLedger {
            dram: DeviceLedger::new(4 * GIB, ChannelCounts::default(), cycles),
            pcm: DeviceLedger::default(),
            total_cycles: cycles,
        };
        let r = total_energy(&dram, &c);
        assert!((r.dram.idle_mj - 4.0).abs() < 1e-9);
        assert!((r.dram.refresh_mj - 2.0).abs() < 1e-9);
        let pcm = EnergyLedger {
            dram: DeviceLedger::default(),
            pcm: DeviceLedger::new(4 * GIB, ChannelCounts::default(), cycles),
            total_cycles: cycles,
        };
        assert!(total_energy(&pcm, &c).total_mj < r.total_mj);
    }

    #[test]
    fn preset_orderings() {
        let c = EnergyConstants::default_preset();
        assert!(c.pcm.idle_mw_per_gb < c.dram.idle_mw_per_gb);
        assert!(c.pcm.write_pj_per_line > c.dram.write_pj_per_line);
        assert!(c.validate().is_ok());
        let file: EnergyConstants = toml::from_str(include_str!("../presets/energy/default.toml")).unwrap();
        assert_eq!(file, c);
    }

    #[test]
    fn stress_mode() {
        let trace = vec![
            LineRequest::write(5, 1, 1),
            LineRequest::read(1_000_000_005, 1),
        ];
        let s = stress_mode_transform(&trace);
        assert_eq!(s[1].arrival_cycle, 5);
        assert_eq!(s[1].op, Op::Read);
        assert_eq!(stress_mode_transform(&s), s);
        assert!(stress_mode_transform(&[]).is_empty());
    }
}
