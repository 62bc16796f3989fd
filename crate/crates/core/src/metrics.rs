//! End-of-run metrics and their serializations.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ArchKind, BufferStats, RunOutput};
use crate::dedup::{AMT_ENTRY_BYTES, LFI_ENTRY_BYTES};
use crate::energy::{total_energy, DeviceLedger, EnergyConstants, EnergyLedger, EnergyReport};
use crate::memdev::{ChannelCounts, WearSummary};
use crate::LINE_BYTES;

pub const REPORT_SCHEMA: &str = "report_v1";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("occupation {used} B exceeds capacity {capacity} B")]
    Overfull { used: u64, capacity: u64 },
    #[error("i/o error writing report: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// `(live + metadata) / capacity`.
pub fn space_occupation_ratio(live_bytes: u64, metadata_bytes: u64, capacity_bytes: u64) -> Result<f64, MetricsError> {
    if capacity_bytes == 0 {
        return Err(MetricsError::ZeroCapacity);
    }
    let used = live_bytes + metadata_bytes;
    if used > capacity_bytes {
        return Err(MetricsError::Overfull {
            used,
            capacity: capacity_bytes,
        });
    }
    Ok(used as f64 / capacity_bytes as f64)
}

/// Payload bytes per cycle; zero for an empty run.
pub fn bandwidth(total_payload_bytes: u64, total_cycles: u64) -> f64 {
    if total_cycles == 0 {
        0.0
    } else {
        total_payload_bytes as f64 / total_cycles as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupSummary {
    pub dropped_duplicates: u64,
    pub shared_lines: u64,
    pub updated_lines: u64,
    pub new_lines: u64,
    pub collision_copies: u64,
    pub overflow_copies: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: String,
    pub workload: String,
    pub arch: ArchKind,
    pub total_cycles: u64,
    pub quiesce_cycles: u64,
    pub read_requests: u64,
    pub write_requests: u64,
    pub completed_requests: u64,
    /// Lines written to their home location for write requests.
    pub device_line_writes: u64,
    pub live_lines: u64,
    pub live_bytes: u64,
    pub capacity_bytes: u64,
    pub metadata_charged: bool,
    /// Live AMT and LFI bytes, whether or not charged to occupation.
    pub metadata_overhead_bytes: u64,
    pub space_occupation_ratio: f64,
    /// Occupation relative to pure DRAM on the same workload, when known.
    pub normalized_occupation: Option<f64>,
    pub bandwidth_bytes_per_cycle: f64,
    pub requests_per_kilocycle: f64,
    pub energy: EnergyReport,
    pub dedup: DedupSummary,
    pub wear: WearSummary,
    pub dram_events: ChannelCounts,
    pub pcm_events: ChannelCounts,
    pub buffer: BufferStats,
    pub evicted_pages: u64,
    pub read_misses: u64,
    pub invariant_violations: Vec<String>,
}

impl SimReport {
    pub fn from_run(
        workload: &str,
        run: &RunOutput,
        energy: &EnergyConstants,
        charge_metadata: bool,
    ) -> Result<Self, MetricsError> {
        let live_bytes = run.live_lines * LINE_BYTES;
        let metadata = run.amt_entries * AMT_ENTRY_BYTES + run.lfi_entries * LFI_ENTRY_BYTES;
        let capacity = run.dram_bytes + run.pcm_bytes;
        let charged = if charge_metadata { metadata } else { 0 };
        let occupation = space_occupation_ratio(live_bytes, charged, capacity)?;
        // Background energy runs until the buffer has settled.
        let cycles = run.total_cycles + run.quiesce_cycles;
        let ledger = EnergyLedger {
            dram: DeviceLedger::new(run.dram_bytes, run.dram, cycles),
            pcm: DeviceLedger::new(run.pcm_bytes, run.pcm, cycles),
            total_cycles: cycles,
        };
        let dedup = run
            .dedup
            .map(|s| DedupSummary {
                dropped_duplicates: s.dropped_duplicates,
                shared_lines: s.shared_lines,
                updated_lines: s.updated_lines,
                new_lines: s.new_lines,
                collision_copies: s.collision_copies,
                overflow_copies: s.overflow_copies,
            })
            .unwrap_or(DedupSummary {
                new_lines: run.write_requests,
                ..Default::default()
            });
        let mut violations = run.invariant_violations.clone();
        if run.dedup.is_some() {
            let d = &dedup;
            let sum = d.dropped_duplicates + d.shared_lines + d.updated_lines + d.new_lines;
            if sum != run.write_requests {
                violations.push(format!(
                    "write partition {sum} != {} write requests",
                    run.write_requests
                ));
            }
        }
        Ok(Self {
            schema: REPORT_SCHEMA.to_string(),
            workload: workload.to_string(),
            arch: run.arch,
            total_cycles: run.total_cycles,
            quiesce_cycles: run.quiesce_cycles,
            read_requests: run.read_requests,
            write_requests: run.write_requests,
            completed_requests: run.completed_requests,
            device_line_writes: run.home_line_writes,
            live_lines: run.live_lines,
            live_bytes,
            capacity_bytes: capacity,
            metadata_charged: charge_metadata,
            metadata_overhead_bytes: metadata,
            space_occupation_ratio: occupation,
            normalized_occupation: None,
            bandwidth_bytes_per_cycle: bandwidth(run.completed_requests * LINE_BYTES, run.total_cycles),
            requests_per_kilocycle: 1000.0 * bandwidth(run.completed_requests, run.total_cycles),
            energy: total_energy(&ledger, energy),
            dedup,
            wear: run.wear,
            dram_events: run.dram,
            pcm_events: run.pcm,
            buffer: run.buffer,
            evicted_pages: run.evicted_pages,
            read_misses: run.read_misses,
            invariant_violations: violations,
        })
    }
}

/// Fills `normalized_occupation` so that pure DRAM is 1 on each workload.
pub fn normalize_occupation(reports: &mut [SimReport]) {
    let baselines: Vec<(String, f64)> = reports
        .iter()
        .filter(|r| r.arch == ArchKind::PureDram)
        .map(|r| (r.workload.clone(), r.space_occupation_ratio))
        .collect();
    for r in reports.iter_mut() {
        r.normalized_occupation = baselines
            .iter()
            .find(|(w, _)| *w == r.workload)
            .map(|&(_, base)| if base > 0.0 { r.space_occupation_ratio / base } else { 0.0 });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

pub const CSV_COLUMNS: [&str; 24] = [
    "workload",
    "arch",
    "read_requests",
    "write_requests",
    "total_cycles",
    "device_line_writes",
    "live_lines",
    "space_occupation_ratio",
    "normalized_occupation",
    "bandwidth_bytes_per_cycle",
    "requests_per_kilocycle",
    "energy_total_mj",
    "energy_dram_mj",
    "energy_pcm_mj",
    "dropped_duplicates",
    "shared_lines",
    "updated_lines",
    "new_lines",
    "collision_copies",
    "overflow_copies",
    "wear_min",
    "wear_max",
    "metadata_overhead_bytes",
    "evicted_pages",
];

fn csv_row(r: &SimReport) -> Vec<String> {
    vec![
        r.workload.clone(),
        r.arch.to_string(),
        r.read_requests.to_string(),
        r.write_requests.to_string(),
        r.total_cycles.to_string(),
        r.device_line_writes.to_string(),
        r.live_lines.to_string(),
        r.space_occupation_ratio.to_string(),
        r.normalized_occupation.map_or(String::new(), |v| v.to_string()),
        r.bandwidth_bytes_per_cycle.to_string(),
        r.requests_per_kilocycle.to_string(),
        r.energy.total_mj.to_string(),
        r.energy.dram.total_mj.to_string(),
        r.energy.pcm.total_mj.to_string(),
        r.dedup.dropped_duplicates.to_string(),
        r.dedup.shared_lines.to_string(),
        r.dedup.updated_lines.to_string(),
        r.dedup.new_lines.to_string(),
        r.dedup.collision_copies.to_string(),
        r.dedup.overflow_copies.to_string(),
        r.wear.min.to_string(),
        r.wear.max.to_string(),
        r.metadata_overhead_bytes.to_string(),
        r.evicted_pages.to_string(),
    ]
}

/// Writes reports in the given format. JSON holds an array when more than
/// one report is given; CSV writes one row per report.
pub fn emit_reports<W: io::Write>(reports: &[SimReport], format: ReportFormat, mut out: W) -> Result<(), MetricsError> {
    match format {
        ReportFormat::Json => {
            if let [single] = reports {
                serde_json::to_writer_pretty(&mut out, single)?;
            } else {
                serde_json::to_writer_pretty(&mut out, reports)?;
            }
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_COLUMNS)?;
            for r in reports {
                w.write_record(csv_row(r))?;
            }
            w.flush()?;
        }
        ReportFormat::Table => out.write_all(render_table(reports).as_bytes())?,
    }
    Ok(())
}

pub fn emit_report<W: io::Write>(report: &SimReport, format: ReportFormat, out: W) -> Result<(), MetricsError> {
    emit_reports(std::slice::from_ref(report), format, out)
}

fn render_table(reports: &[SimReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<10} {:>10} {:>9} {:>9} {:>10} {:>11} {:>12}",
        "workload", "arch", "writes", "dev.wr", "occup.", "norm.occ", "B/cycle", "energy(mJ)"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<12} {:<10} {:>10} {:>9} {:>9.4} {:>10} {:>11.4} {:>12.4}",
            r.workload,
            r.arch,
            r.write_requests,
            r.device_line_writes,
            r.space_occupation_ratio,
            r.normalized_occupation.map_or("-".to_string(), |v| format!("{v:.4}")),
            r.bandwidth_bytes_per_cycle,
            r.energy.total_mj
        );
    }
    s
}
