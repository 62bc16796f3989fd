use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::page_cache::EvictionPolicy;
use crate::dedup::metadata_budget;
use crate::memdev::{AddressMapping, DeviceTiming, Geometry};
use crate::{GIB, LINE_BYTES, MIB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    PureDram,
    PurePcm,
    Hybrid,
    Caram,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::PureDram, ArchKind::PurePcm, ArchKind::Hybrid, ArchKind::Caram];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::PureDram => "pure_dram",
            ArchKind::PurePcm => "pure_pcm",
            ArchKind::Hybrid => "hybrid",
            ArchKind::Caram => "caram",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown architecture `{s}`"))
    }
}

/// Whether metadata accesses use the data channel of the DRAM or a port of
/// their own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetadataPort {
    #[default]
    Shared,
    Separate,
}

impl FromStr for MetadataPort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" => Ok(MetadataPort::Shared),
            "separate" => Ok(MetadataPort::Separate),
            _ => Err(format!("unknown metadata port `{s}` (expected shared or separate)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub kind: ArchKind,
    pub dram_bytes: u64,
    pub pcm_bytes: u64,
    pub write_buffer_bytes: u64,
    pub metadata_region_bytes: u64,
    pub eviction_policy: EvictionPolicy,
    pub queue_depth: usize,
    pub drain_high_watermark: f64,
    pub drain_low_watermark: f64,
    pub max_concurrent_drains: usize,
    pub hot_page_epoch_cycles: u64,
    pub hot_page_threshold: u32,
    pub swap_out_cycles_per_page: u64,
    pub read_miss_cycles: u64,
    pub metadata_port: MetadataPort,
    pub address_mapping: AddressMapping,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self::caram()
    }
}

impl ArchitectureConfig {
    fn base(kind: ArchKind, dram_bytes: u64, pcm_bytes: u64) -> Self {
        Self {
            kind,
            dram_bytes,
            pcm_bytes,
            write_buffer_bytes: 0,
            metadata_region_bytes: 0,
            eviction_policy: EvictionPolicy::Lru,
            queue_depth: 32,
            drain_high_watermark: 0.9,
            drain_low_watermark: 0.1,
            max_concurrent_drains: 8,
            hot_page_epoch_cycles: 1_000_000,
            hot_page_threshold: 2,
            swap_out_cycles_per_page: 10_000,
            read_miss_cycles: 10_000,
            metadata_port: MetadataPort::Shared,
            address_mapping: AddressMapping::RowBankColumn,
        }
    }

    pub fn pure_dram() -> Self {
        Self::base(ArchKind::PureDram, 4 * GIB, 0)
    }

    pub fn pure_pcm() -> Self {
        Self::base(ArchKind::PurePcm, 0, 16 * GIB)
    }

    pub fn hybrid() -> Self {
        Self {
            write_buffer_bytes: 256 * MIB,
            ..Self::base(ArchKind::Hybrid, 2 * GIB, 8 * GIB)
        }
    }

    pub fn caram() -> Self {
        Self {
            write_buffer_bytes: 256 * MIB,
            metadata_region_bytes: 720 * MIB,
            ..Self::base(ArchKind::Caram, 2 * GIB, 8 * GIB)
        }
    }

    /// The equal-cost preset for an architecture.
    pub fn preset(kind: ArchKind) -> Self {
        match kind {
            ArchKind::PureDram => Self::pure_dram(),
            ArchKind::PurePcm => Self::pure_pcm(),
            ArchKind::Hybrid => Self::hybrid(),
            ArchKind::Caram => Self::caram(),
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.dram_bytes + self.pcm_bytes
    }

    /// DRAM lines addressable as ordinary memory.
    pub fn dram_mapped_bytes(&self) -> u64 {
        self.dram_bytes
            .saturating_sub(self.write_buffer_bytes)
            .saturating_sub(self.metadata_region_bytes)
    }

    /// Bytes available to hold data lines.
    pub fn usable_bytes(&self) -> u64 {
        self.pcm_bytes + self.dram_mapped_bytes()
    }

    pub fn has_write_buffer(&self) -> bool {
        matches!(self.kind, ArchKind::Hybrid | ArchKind::Caram)
    }

    /// Every violated constraint, or nothing.
    pub fn validate(&self, dram: &DeviceTiming, pcm: &DeviceTiming) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("dram_bytes", self.dram_bytes),
            ("pcm_bytes", self.pcm_bytes),
            ("write_buffer_bytes", self.write_buffer_bytes),
            ("metadata_region_bytes", self.metadata_region_bytes),
        ] {
            if v % LINE_BYTES != 0 {
                errs.push(format!("{name} = {v} is not a multiple of {LINE_BYTES}"));
            }
        }
        let uses_dram = self.kind != ArchKind::PurePcm;
        let uses_pcm = self.kind != ArchKind::PureDram;
        if uses_dram && self.dram_bytes == 0 {
            errs.push(format!("{} needs dram_bytes > 0", self.kind));
        }
        if uses_pcm && self.pcm_bytes == 0 {
            errs.push(format!("{} needs pcm_bytes > 0", self.kind));
        }
        if !uses_dram && self.dram_bytes != 0 {
            errs.push("pure_pcm must have dram_bytes = 0".into());
        }
        if !uses_pcm && self.pcm_bytes != 0 {
            errs.push("pure_dram must have pcm_bytes = 0".into());
        }
        if self.has_write_buffer() {
            if self.write_buffer_bytes < LINE_BYTES {
                errs.push(format!("{} needs a write buffer of at least one line", self.kind));
            }
            if self.write_buffer_bytes + self.metadata_region_bytes >= self.dram_bytes {
                errs.push(format!(
                    "write_buffer_bytes + metadata_region_bytes ({}) must be less than dram_bytes ({})",
                    self.write_buffer_bytes + self.metadata_region_bytes,
                    self.dram_bytes
                ));
            }
        } else if self.write_buffer_bytes != 0 || self.metadata_region_bytes != 0 {
            errs.push(format!("{} has no write buffer or metadata region", self.kind));
        }
        if self.kind == ArchKind::Caram && errs.is_empty() {
            match metadata_budget(self.usable_bytes()) {
                Ok(b) if b.total_bytes() > self.metadata_region_bytes => errs.push(format!(
                    "metadata for {} usable bytes needs {} bytes but the region holds {}",
                    self.usable_bytes(),
                    b.total_bytes(),
                    self.metadata_region_bytes
                )),
                Ok(_) => {}
                Err(e) => errs.push(e.to_string()),
            }
        }
        if self.usable_bytes() / LINE_BYTES > 1 << 32 {
            errs.push("physical line space exceeds 32-bit addresses".into());
        }
        if self.queue_depth == 0 {
            errs.push("queue_depth must be at least 1".into());
        }
        if self.max_concurrent_drains == 0 {
            errs.push("max_concurrent_drains must be at least 1".into());
        }
        if !(0.0 <= self.drain_low_watermark
            && self.drain_low_watermark < self.drain_high_watermark
            && self.drain_high_watermark <= 1.0)
        {
            errs.push(format!(
                "watermarks must satisfy 0 <= low < high <= 1 (got {} / {})",
                self.drain_low_watermark, self.drain_high_watermark
            ));
        }
        if self.hot_page_epoch_cycles == 0 {
            errs.push("hot_page_epoch_cycles must be positive".into());
        }
        for (name, timing, bytes, used) in [
            ("dram", dram, self.dram_bytes, uses_dram),
            ("pcm", pcm, self.pcm_bytes, uses_pcm),
        ] {
            if !used || bytes == 0 {
                continue;
            }
            if let Err(e) = timing.validate() {
                errs.push(format!("{name}: {e}"));
            } else if let Err(e) = Geometry::new(timing, bytes, self.address_mapping) {
                errs.push(format!("{name}: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
