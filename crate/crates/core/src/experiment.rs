//! Experiment descriptions and the parallel sweep runner.
//!
//! An experiment is the cross product of a list of architectures and a list
//! of workloads. Workloads are synthetic specs or trace files. See
//! `docs/config.md` for the file format.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{run, ArchKind, ArchitectureConfig, ControllerError};
use crate::energy::{stress_mode_transform, EnergyConstants};
use crate::memdev::{DeviceTiming, TimingPreset};
use crate::metrics::{emit_report, emit_reports, normalize_occupation, MetricsError, ReportFormat, SimReport};
use crate::trace::{
    expand_to_lines, generate_synthetic, open_transparent, parse_trace, ExpandOptions, LineRequest,
    SyntheticTraceSpec, TraceError, TraceFormat,
};
use crate::MIB;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("workload `{workload}`: {source}")]
    Trace { workload: String, source: TraceError },
    #[error("{workload}/{arch}: {source}")]
    Run {
        workload: String,
        arch: ArchKind,
        source: ControllerError,
    },
    #[error("{workload}/{arch}: {source}")]
    Metrics {
        workload: String,
        arch: ArchKind,
        source: MetricsError,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Reads and unique writes of a workload, counted in blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadCounts {
    pub name: &'static str,
    pub total_reads: u64,
    pub unique_reads: u64,
    pub total_writes: u64,
    pub unique_writes: u64,
}

/// One-day FIU trace statistics for the four calibrated workloads.
pub const FIU_WORKLOADS: [WorkloadCounts; 4] = [
    WorkloadCounts {
        name: "mail",
        total_reads: 157_012,
        unique_reads: 26_366,
        total_writes: 212_253,
        unique_writes: 108_664,
    },
    WorkloadCounts {
        name: "web-vm",
        total_reads: 42_679,
        unique_reads: 1_341,
        total_writes: 383_539,
        unique_writes: 146_491,
    },
    WorkloadCounts {
        name: "homes",
        total_reads: 7_368,
        unique_reads: 850,
        total_writes: 389_559,
        unique_writes: 243_040,
    },
    WorkloadCounts {
        name: "web-users",
        total_reads: 6_042,
        unique_reads: 143,
        total_writes: 245_662,
        unique_writes: 172_125,
    },
];

/// Share of duplicate writes in the calibrated workloads that rewrite an
/// address already holding the same content.
pub const CALIBRATED_REWRITE_FRACTION: f64 = 0.57;

/// Write buffer used with the calibrated workloads, which replay block
/// counts as line counts (1/16 of the original volume).
pub const CALIBRATED_WRITE_BUFFER_BYTES: u64 = 16 * MIB;

impl WorkloadCounts {
    pub fn by_name(name: &str) -> Option<&'static WorkloadCounts> {
        FIU_WORKLOADS.iter().find(|w| w.name == name)
    }

    /// A synthetic line trace with this workload's request count, read share
    /// and distinct-write ratio.
    pub fn synthetic(&self, rng_seed: u64) -> SyntheticTraceSpec {
        let total = self.total_reads + self.total_writes;
        SyntheticTraceSpec {
            read_fraction: self.total_reads as f64 / total as f64,
            rewrite_fraction: CALIBRATED_REWRITE_FRACTION,
            ..SyntheticTraceSpec::new(
                total,
                self.unique_writes as f64 / self.total_writes as f64,
                rng_seed,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    pub path: PathBuf,
    pub format: TraceFormat,
    #[serde(default)]
    pub expand: ExpandOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Synthetic(SyntheticTraceSpec),
    Trace(TraceSource),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub source: WorkloadSource,
}

impl Workload {
    pub fn load(&self) -> Result<Vec<LineRequest>, ExperimentError> {
        let wrap = |source| ExperimentError::Trace {
            workload: self.name.clone(),
            source,
        };
        match &self.source {
            WorkloadSource::Synthetic(spec) => generate_synthetic(spec).map_err(wrap),
            WorkloadSource::Trace(t) => {
                let file = File::open(&t.path).map_err(|e| wrap(TraceError::Io(e)))?;
                let reader = open_transparent(file).map_err(|e| wrap(TraceError::Io(e)))?;
                let parsed = parse_trace(reader, t.format).map_err(wrap)?;
                Ok(expand_to_lines(&parsed.records, &t.expand))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub seed: u64,
    pub jobs: usize,
    pub output_dir: Option<PathBuf>,
    pub dram_timing: DeviceTiming,
    pub pcm_timing: DeviceTiming,
    pub energy: EnergyConstants,
    pub charge_metadata: bool,
    pub stress_mode: bool,
    pub architectures: Vec<ArchitectureConfig>,
    pub workloads: Vec<Workload>,
}

/// Per-workload seed derived from the experiment seed and the workload name.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for b in name.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingFile {
    dram: Option<DeviceTiming>,
    pcm: Option<DeviceTiming>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    name: String,
    calibration: Option<String>,
    synthetic: Option<toml::Table>,
    trace: Option<TraceSource>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    version: u32,
    preset: Option<String>,
    name: Option<String>,
    seed: Option<u64>,
    jobs: Option<usize>,
    output_dir: Option<PathBuf>,
    timing_preset: Option<TimingPreset>,
    timing: Option<TimingFile>,
    energy_preset: Option<String>,
    energy: Option<EnergyConstants>,
    charge_metadata: Option<bool>,
    stress_mode: Option<bool>,
    architectures: Option<Vec<ArchKind>>,
    arch: Option<BTreeMap<String, toml::Table>>,
    workload: Option<Vec<WorkloadFile>>,
}

pub const PRESETS: [&str; 3] = ["paper-table2-synthetic", "dup-sweep", "equal-cost-smoke"];

/// Duplicate-write fractions of the sweep preset: 0 to 0.9 in steps of 0.1.
pub fn sweep_points() -> Vec<f64> {
    (0..10).map(|i| f64::from(i) / 10.0).collect()
}

/// A web-users shaped trace whose duplicate-write fraction is `dup`. Every
/// point of a sweep draws from the same seed, so neighbouring points differ
/// only in their duplicate fraction.
pub fn sweep_workload(dup: f64, seed: u64) -> Workload {
    let base = WorkloadCounts::by_name("web-users").expect("calibration present");
    let mut spec = base.synthetic(derive_seed(seed, "dup-sweep"));
    spec.unique_fraction = 1.0 - dup;
    Workload {
        name: format!("dup-{dup:.1}"),
        source: WorkloadSource::Synthetic(spec),
    }
}

/// Duplicate-write fraction of the least deduplicable calibrated workload.
pub fn lowest_calibrated_dup() -> f64 {
    FIU_WORKLOADS
        .iter()
        .map(|w| 1.0 - w.unique_writes as f64 / w.total_writes as f64)
        .fold(f64::INFINITY, f64::min)
}

/// The sweep point closest to [`lowest_calibrated_dup`].
pub fn sweep_floor_point() -> f64 {
    let target = lowest_calibrated_dup();
    sweep_points()
        .into_iter()
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .expect("non-empty sweep")
}

/// Equal-cost architecture preset with the write buffer scaled for the
/// calibrated workloads.
pub fn calibrated_arch(kind: ArchKind) -> ArchitectureConfig {
    let mut a = ArchitectureConfig::preset(kind);
    if a.has_write_buffer() {
        a.write_buffer_bytes = CALIBRATED_WRITE_BUFFER_BYTES;
    }
    a
}

impl Experiment {
    fn base(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            seed,
            jobs: 0,
            output_dir: None,
            dram_timing: TimingPreset::Table1.dram(),
            pcm_timing: TimingPreset::Table1.pcm(),
            energy: EnergyConstants::default_preset(),
            charge_metadata: true,
            stress_mode: false,
            architectures: ArchKind::ALL.iter().map(|&k| ArchitectureConfig::preset(k)).collect(),
            workloads: Vec::new(),
        }
    }

    /// Built-in experiments.
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "paper-table2-synthetic" => {
                let mut e = Self::base(name, seed);
                e.architectures = ArchKind::ALL.iter().map(|&k| calibrated_arch(k)).collect();
                e.workloads = FIU_WORKLOADS
                    .iter()
                    .map(|w| Workload {
                        name: w.name.to_string(),
                        source: WorkloadSource::Synthetic(w.synthetic(derive_seed(seed, w.name))),
                    })
                    .collect();
                Some(e)
            }
            "dup-sweep" => {
                let mut e = Self::base(name, seed);
                e.architectures = vec![calibrated_arch(ArchKind::Hybrid), calibrated_arch(ArchKind::Caram)];
                e.workloads = sweep_points().into_iter().map(|d| sweep_workload(d, seed)).collect();
                Some(e)
            }
            "equal-cost-smoke" => {
                let mut e = Self::base(name, seed);
                let mut spec = SyntheticTraceSpec::new(20_000, 0.5, derive_seed(seed, "smoke"));
                spec.read_fraction = 0.2;
                spec.rewrite_fraction = CALIBRATED_REWRITE_FRACTION;
                e.workloads = vec![Workload {
                    name: "smoke".into(),
                    source: WorkloadSource::Synthetic(spec),
                }];
                Some(e)
            }
            _ => None,
        }
    }

    /// Parses an experiment file. Relative trace paths resolve against
    /// `base_dir`. Semantic checks are left to [`Experiment::validate`].
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, Vec<String>> {
        let file: ExperimentFile = toml::from_str(text).map_err(|e| vec![e.to_string()])?;
        let mut errs = Vec::new();
        if file.version != 1 {
            errs.push(format!("unsupported config version {}", file.version));
        }
        let seed = file.seed.unwrap_or(0);
        let mut exp = match &file.preset {
            Some(p) => match Self::preset(p, seed) {
                Some(e) => e,
                None => return Err(vec![format!("unknown preset `{p}` (known: {})", PRESETS.join(", "))]),
            },
            None => {
                if file.seed.is_none() {
                    errs.push("`seed` is required".into());
                }
                Self::base(file.name.as_deref().unwrap_or("experiment"), seed)
            }
        };
        if let Some(n) = file.name {
            exp.name = n;
        }
        if let Some(j) = file.jobs {
            exp.jobs = j;
        }
        exp.output_dir = file.output_dir.map(|p| base_dir.join(p));
        if let Some(t) = file.timing_preset {
            exp.dram_timing = t.dram();
            exp.pcm_timing = t.pcm();
        }
        if let Some(t) = file.timing {
            if let Some(d) = t.dram {
                exp.dram_timing = d;
            }
            if let Some(p) = t.pcm {
                exp.pcm_timing = p;
            }
        }
        if let Some(name) = &file.energy_preset {
            match EnergyConstants::named(name) {
                Some(e) => exp.energy = e,
                None => errs.push(format!("unknown energy preset `{name}`")),
            }
        }
        if let Some(e) = file.energy {
            exp.energy = e;
        }
        if let Some(c) = file.charge_metadata {
            exp.charge_metadata = c;
        }
        if let Some(s) = file.stress_mode {
            exp.stress_mode = s;
        }
        if let Some(kinds) = file.architectures {
            exp.architectures = kinds
                .iter()
                .map(|&k| {
                    exp.architectures
                        .iter()
                        .find(|a| a.kind == k)
                        .cloned()
                        .unwrap_or_else(|| ArchitectureConfig::preset(k))
                })
                .collect();
        }
        for (key, overrides) in file.arch.unwrap_or_default() {
            let kind: ArchKind = match key.parse() {
                Ok(k) => k,
                Err(e) => {
                    errs.push(e);
                    continue;
                }
            };
            let Some(slot) = exp.architectures.iter_mut().find(|a| a.kind == kind) else {
                errs.push(format!("[arch.{key}] given but {key} is not in `architectures`"));
                continue;
            };
            match overlay(slot, overrides) {
                Ok(a) => *slot = a,
                Err(e) => errs.push(format!("[arch.{key}]: {e}")),
            }
        }
        if let Some(ws) = file.workload {
            exp.workloads.clear();
            for w in ws {
                match resolve_workload(w, seed, base_dir) {
                    Ok(w) => exp.workloads.push(w),
                    Err(e) => errs.push(e),
                }
            }
        }
        if errs.is_empty() {
            Ok(exp)
        } else {
            Err(errs)
        }
    }

    /// Replaces the experiment seed and rederives every synthetic seed that
    /// was derived from it.
    pub fn reseed(&mut self, seed: u64) {
        let old = self.seed;
        self.seed = seed;
        for w in &mut self.workloads {
            if let WorkloadSource::Synthetic(spec) = &mut w.source {
                for key in [w.name.as_str(), "dup-sweep"] {
                    if spec.rng_seed == derive_seed(old, key) {
                        spec.rng_seed = derive_seed(seed, key);
                        break;
                    }
                }
            }
        }
    }

    /// Every problem that would stop the experiment, checked without running.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.architectures.is_empty() {
            errs.push("no architectures".into());
        }
        if self.workloads.is_empty() {
            errs.push("no workloads".into());
        }
        let mut seen = Vec::new();
        for a in &self.architectures {
            if seen.contains(&a.kind) {
                errs.push(format!("architecture {} listed twice", a.kind));
            }
            seen.push(a.kind);
            if let Err(es) = a.validate(&self.dram_timing, &self.pcm_timing) {
                errs.extend(es.into_iter().map(|e| format!("{}: {e}", a.kind)));
            }
        }
        let mut names = Vec::new();
        for w in &self.workloads {
            if names.contains(&&w.name) {
                errs.push(format!("workload `{}` listed twice", w.name));
            }
            names.push(&w.name);
            if w.name.is_empty() || !w.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                errs.push(format!("workload name `{}` must be non-empty [A-Za-z0-9._-]", w.name));
            }
            match &w.source {
                WorkloadSource::Synthetic(s) => {
                    if let Err(e) = s.validate() {
                        errs.push(format!("workload `{}`: {e}", w.name));
                    }
                }
                WorkloadSource::Trace(t) => {
                    if !t.path.is_file() {
                        errs.push(format!("workload `{}`: trace file {} not found", w.name, t.path.display()));
                    }
                }
            }
        }
        if let Err(e) = self.energy.validate() {
            errs.push(format!("energy: {e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn run_count(&self) -> usize {
        self.architectures.len() * self.workloads.len()
    }
}

fn overlay(base: &ArchitectureConfig, overrides: toml::Table) -> Result<ArchitectureConfig, String> {
    if overrides.contains_key("kind") {
        return Err("`kind` comes from the table name".into());
    }
    let mut table = toml::Table::try_from(base).map_err(|e| e.to_string())?;
    table.extend(overrides);
    table.try_into().map_err(|e: toml::de::Error| e.to_string())
}

fn resolve_workload(w: WorkloadFile, seed: u64, base_dir: &Path) -> Result<Workload, String> {
    let derived = derive_seed(seed, &w.name);
    let source = match (w.calibration, w.synthetic, w.trace) {
        (Some(c), None, None) => {
            let counts = WorkloadCounts::by_name(&c).ok_or_else(|| format!("unknown calibration `{c}`"))?;
            WorkloadSource::Synthetic(counts.synthetic(derived))
        }
        (None, Some(mut table), None) => {
            table
                .entry("rng_seed")
                .or_insert_with(|| toml::Value::Integer(derived as i64));
            let spec: SyntheticTraceSpec = table
                .try_into()
                .map_err(|e: toml::de::Error| format!("workload `{}`: {e}", w.name))?;
            WorkloadSource::Synthetic(spec)
        }
        (None, None, Some(mut t)) => {
            t.path = base_dir.join(&t.path);
            WorkloadSource::Trace(t)
        }
        _ => {
            return Err(format!(
                "workload `{}` needs exactly one of `calibration`, `synthetic` or `trace`",
                w.name
            ))
        }
    };
    Ok(Workload { name: w.name, source })
}

/// Runs every (workload, architecture) pair. Reports come back ordered by
/// workload, then architecture, whatever the degree of parallelism.
pub fn run_experiment(exp: &Experiment) -> Result<Vec<SimReport>, ExperimentError> {
    exp.validate().map_err(ExperimentError::Invalid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(|| {
        let traces: Vec<Arc<Vec<LineRequest>>> = exp
            .workloads
            .par_iter()
            .map(|w| {
                let t = w.load()?;
                Ok(Arc::new(if exp.stress_mode { stress_mode_transform(&t) } else { t }))
            })
            .collect::<Result<_, ExperimentError>>()?;
        let pairs: Vec<(usize, usize)> = (0..exp.workloads.len())
            .flat_map(|w| (0..exp.architectures.len()).map(move |a| (w, a)))
            .collect();
        let mut reports = pairs
            .par_iter()
            .map(|&(wi, ai)| {
                let w = &exp.workloads[wi];
                let arch = &exp.architectures[ai];
                let out = run(&traces[wi], arch, &exp.dram_timing, &exp.pcm_timing).map_err(|source| {
                    ExperimentError::Run {
                        workload: w.name.clone(),
                        arch: arch.kind,
                        source,
                    }
                })?;
                SimReport::from_run(&w.name, &out, &exp.energy, exp.charge_metadata).map_err(|source| {
                    ExperimentError::Metrics {
                        workload: w.name.clone(),
                        arch: arch.kind,
                        source,
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        normalize_occupation(&mut reports);
        Ok(reports)
    })
}

/// Writes one `<workload>__<arch>.json` per report plus `comparison.csv`
/// into `dir`, creating it if needed. Returns the files written.
pub fn write_report_dir(dir: &Path, reports: &[SimReport]) -> Result<Vec<PathBuf>, MetricsError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(reports.len() + 1);
    for r in reports {
        let path = dir.join(format!("{}__{}.json", r.workload, r.arch));
        emit_report(r, ReportFormat::Json, std::io::BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }
    let path = dir.join("comparison.csv");
    emit_reports(reports, ReportFormat::Csv, std::io::BufWriter::new(File::create(&path)?))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table2_preset_has_sixteen_runs() {
        let e = Experiment::preset("paper-table2-synthetic", 42).unwrap();
        assert_eq!(e.run_count(), 16);
        e.validate().unwrap();
        let caram = e.architectures.iter().find(|a| a.kind == ArchKind::Caram).unwrap();
        assert_eq!(caram.write_buffer_bytes, 16 * MIB);
    }

    #[test]
    fn sweep_preset_covers_calibrated_point() {
        let mut e = Experiment::preset("dup-sweep", 1).unwrap();
        e.validate().unwrap();
        assert_eq!(e.workloads.len(), 10);
        assert!((lowest_calibrated_dup() - (1.0 - 172_125.0 / 245_662.0)).abs() < 1e-12);
        assert_eq!(sweep_floor_point(), 0.3);
        assert!(e.workloads.iter().any(|w| w.name == "dup-0.3"));
        e.reseed(2);
        assert_eq!(e, Experiment::preset("dup-sweep", 2).unwrap());
    }

    #[test]
    fn calibrated_counts() {
        for w in FIU_WORKLOADS {
            let spec = w.synthetic(1);
            assert_eq!(spec.total_lines, w.total_reads + w.total_writes);
            assert_eq!(spec.read_count(), w.total_reads);
            assert_eq!(spec.unique_writes(), w.unique_writes);
        }
    }

    #[test]
    fn parses_full_file() {
        let text = r#"
            version = 1
            seed = 7
            jobs = 2
            timing_preset = "realistic"
            energy_preset = "dynamic-only"
            charge_metadata = false
            architectures = ["hybrid", "caram"]

            [arch.caram]
            write_buffer_bytes = 1048576
            metadata_port = "separate"

            [[workload]]
            name = "mix"
            [workload.synthetic]
            total_lines = 100
            unique_fraction = 0.5

            [[workload]]
            name = "mail"
            calibration = "mail"
        "#;
        let e = Experiment::from_toml_str(text, Path::new(".")).unwrap();
        assert_eq!(e.architectures.len(), 2);
        assert_eq!(e.architectures[1].write_buffer_bytes, MIB);
        assert_eq!(e.architectures[1].metadata_region_bytes, 720 * MIB);
        assert_eq!(e.pcm_timing, TimingPreset::Realistic.pcm());
        assert!(!e.charge_metadata);
        match &e.workloads[0].source {
            WorkloadSource::Synthetic(s) => assert_eq!(s.rng_seed, derive_seed(7, "mix")),
            _ => panic!(),
        }
        e.validate().unwrap();
    }

    #[test]
    fn reports_config_errors() {
        let bad = |t: &str| Experiment::from_toml_str(t, Path::new(".")).unwrap_err();
        assert!(bad("version = 1\nseed = 1\narchitectures = [\"quantum\"]")[0].contains("quantum"));
        assert!(bad("version = 1")[0].contains("seed"));
        assert!(bad("version = 1\npreset = \"nope\"")[0].contains("unknown preset"));
        let e = Experiment::from_toml_str(
            "version = 1\nseed = 1\n[[workload]]\nname = \"t\"\ntrace = { path = \"missing.fiu\", format = \"fiu\" }",
            Path::new("/nonexistent"),
        )
        .unwrap();
        assert!(e.validate().unwrap_err()[0].contains("not found"));
        let e = Experiment::from_toml_str(
            "version = 1\nseed = 1\n[arch.hybrid]\nwrite_buffer_bytes = 4294967296",
            Path::new("."),
        );
        let e = e.unwrap();
        assert!(e.validate().is_err());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let mut e = Experiment::preset("equal-cost-smoke", 3).unwrap();
        if let WorkloadSource::Synthetic(s) = &mut e.workloads[0].source {
            s.total_lines = 3000;
        }
        e.jobs = 1;
        let one = run_experiment(&e).unwrap();
        e.jobs = 4;
        let four = run_experiment(&e).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.len(), 4);
        assert_eq!(one[0].normalized_occupation, Some(1.0));
    }

    #[test]
    fn shipped_experiment_files_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/experiments");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            let e = Experiment::from_toml_str(&text, &dir)
                .unwrap_or_else(|errs| panic!("{}: {errs:?}", path.display()));
            e.validate().unwrap_or_else(|errs| panic!("{}: {errs:?}", path.display()));
            seen += 1;
        }
        assert!(seen >= 3);
        let text = std::fs::read_to_string(dir.join("paper-table2-synthetic.toml")).unwrap();
        assert_eq!(
            Experiment::from_toml_str(&text, &dir).unwrap(),
            Experiment::preset("paper-table2-synthetic", 42).unwrap()
        );
    }

    #[test]
    fn reseed_changes_derived_seeds() {
        let mut e = Experiment::preset("paper-table2-synthetic", 1).unwrap();
        e.reseed(2);
        assert_eq!(e, Experiment::preset("paper-table2-synthetic", 2).unwrap());
    }
}
