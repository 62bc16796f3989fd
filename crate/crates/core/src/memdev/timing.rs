use serde::{Deserialize, Serialize};

use super::MemdevError;

/// Timing and organization of one channel. Cycles are controller cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceTiming {
    pub num_rows: u32,
    pub device_width_bits: u32,
    pub t_ras: u64,
    pub t_rcd: u64,
    pub t_rc: u64,
    pub t_rp: u64,
    /// Scales the burst term of writes.
    pub write_multiplier: f64,
    /// 256 B over a 64-bit bus at one beat per cycle.
    pub burst_cycles_per_line: u64,
    /// One metadata access moves 64 B.
    pub metadata_burst_cycles: u64,
    pub banks_per_rank: u32,
    pub ranks: u32,
}

impl DeviceTiming {
    pub fn table1_pcm() -> Self {
        Self {
            num_rows: 32768,
            device_width_bits: 8,
            t_ras: 15,
            t_rcd: 5,
            t_rc: 20,
            t_rp: 5,
            write_multiplier: 4.0,
            burst_cycles_per_line: 32,
            metadata_burst_cycles: 8,
            banks_per_rank: 8,
            ranks: 1,
        }
    }

    pub fn table1_dram() -> Self {
        Self {
            num_rows: 8192,
            device_width_bits: 16,
            t_ras: 36,
            t_rcd: 22,
            t_rc: 96,
            t_rp: 60,
            write_multiplier: 1.0,
            burst_cycles_per_line: 32,
            metadata_burst_cycles: 8,
            banks_per_rank: 8,
            ranks: 1,
        }
    }

    /// DDR3-1600-like DRAM at 800 MHz. Not from the reference tables.
    pub fn realistic_dram() -> Self {
        Self {
            t_ras: 28,
            t_rcd: 11,
            t_rc: 39,
            t_rp: 11,
            ..Self::table1_dram()
        }
    }

    /// PCM with ~55 ns array reads and 8x slower writes. Not from the
    /// reference tables.
    pub fn realistic_pcm() -> Self {
        Self {
            t_ras: 45,
            t_rcd: 44,
            t_rc: 46,
            t_rp: 1,
            write_multiplier: 8.0,
            ..Self::table1_pcm()
        }
    }

    pub fn validate(&self) -> Result<(), MemdevError> {
        let cycles = [
            ("t_ras", self.t_ras),
            ("t_rcd", self.t_rcd),
            ("t_rc", self.t_rc),
            ("t_rp", self.t_rp),
            ("burst_cycles_per_line", self.burst_cycles_per_line),
            ("metadata_burst_cycles", self.metadata_burst_cycles),
        ];
        for (name, v) in cycles {
            if v == 0 {
                return Err(MemdevError::Timing(format!("{name} must be at least 1 cycle")));
            }
        }
        if self.num_rows == 0 || self.banks_per_rank == 0 || self.ranks == 0 || self.device_width_bits == 0 {
            return Err(MemdevError::Timing("rows, banks, ranks and width must be positive".into()));
        }
        if !(self.write_multiplier >= 1.0 && self.write_multiplier.is_finite()) {
            return Err(MemdevError::Timing(format!(
                "write_multiplier {} must be a finite value >= 1",
                self.write_multiplier
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingPreset {
    #[default]
    Table1,
    Realistic,
}

impl TimingPreset {
    pub fn dram(self) -> DeviceTiming {
        match self {
            TimingPreset::Table1 => DeviceTiming::table1_dram(),
            TimingPreset::Realistic => DeviceTiming::realistic_dram(),
        }
    }

    pub fn pcm(self) -> DeviceTiming {
        match self {
            TimingPreset::Table1 => DeviceTiming::table1_pcm(),
            TimingPreset::Realistic => DeviceTiming::realistic_pcm(),
        }
    }

    /// Looks up a named single-device preset such as `table1-pcm`.
    pub fn named(name: &str) -> Option<DeviceTiming> {
        Some(match name {
            "table1-pcm" => DeviceTiming::table1_pcm(),
            "table1-dram" => DeviceTiming::table1_dram(),
            "realistic-pcm" => DeviceTiming::realistic_pcm(),
            "realistic-dram" => DeviceTiming::realistic_dram(),
            _ => return None,
        })
    }
}

impl std::str::FromStr for TimingPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" => Ok(TimingPreset::Table1),
            "realistic" => Ok(TimingPreset::Realistic),
            _ => Err(format!("unknown timing preset `{s}` (expected table1 or realistic)")),
        }
    }
}
