//! `caram`: runs hybrid-memory experiments and handles traces.
//!
//! Exit codes: 0 success, 2 invalid input (config, flags, unreadable or
//! malformed trace), 3 a run failed or broke an invariant.

mod trace_cmd;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use caram::controller::{ArchKind, MetadataPort};
use caram::dedup::metadata_budget;
use caram::energy::EnergyConstants;
use caram::experiment::{run_experiment, write_report_dir, Experiment, ExperimentError, PRESETS};
use caram::memdev::TimingPreset;
use caram::metrics::{emit_reports, ReportFormat};
use caram::MIB;
use clap::{Args, Parser, Subcommand, ValueEnum};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "caram", version, about = "Hybrid DRAM/PCM memory simulator with line-level deduplication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-run reports plus a comparison CSV.
    Run(RunArgs),
    /// Validate an experiment without running it.
    Check(Source),
    /// Inspect, convert or generate traces.
    #[command(subcommand)]
    Trace(trace_cmd::TraceCommand),
}

#[derive(Args)]
#[group(multiple = false)]
struct Source {
    /// Experiment file (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in experiment.
    #[arg(long, value_name = "NAME", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Report directory; overrides the experiment's `output_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Experiment seed; synthetic workloads derive theirs from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PRESET")]
    timing_preset: Option<TimingPreset>,
    #[arg(long, value_name = "PRESET")]
    energy_preset: Option<String>,
    /// Count AMT/LFI bytes as occupied space.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    charge_metadata: Option<bool>,
    /// Whether metadata traffic shares the DRAM channel (applies to caram).
    #[arg(long, value_name = "PORT")]
    metadata_port: Option<MetadataPort>,
    /// Remove idle gaps between requests.
    #[arg(long)]
    stress: bool,
    /// Summary printed to stdout.
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

/// A command failure and the exit code it maps to.
pub enum Failure {
    Invalid(anyhow::Error),
    Breach(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Breach(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(source) => cmd_check(source),
        Command::Trace(t) => trace_cmd::run(t),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Invalid(e) | Failure::Breach(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load(source: &Source, seed: Option<u64>) -> anyhow::Result<Experiment> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut e = Experiment::from_toml_str(&text, base)
                .map_err(|errs| anyhow!("{}:\n  {}", path.display(), errs.join("\n  ")))?;
            if let Some(s) = seed {
                e.reseed(s);
            }
            Ok(e)
        }
        (None, Some(name)) => {
            Experiment::preset(name, seed.unwrap_or(DEFAULT_SEED)).ok_or_else(|| anyhow!("unknown preset `{name}`"))
        }
        (None, None) => Err(anyhow!("give --config <PATH> or --preset <NAME>")),
    }
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let mut exp = load(&args.source, args.seed)?;
    if let Some(j) = args.jobs {
        exp.jobs = j;
    }
    if let Some(t) = args.timing_preset {
        exp.dram_timing = t.dram();
        exp.pcm_timing = t.pcm();
    }
    if let Some(name) = &args.energy_preset {
        exp.energy = EnergyConstants::named(name).ok_or_else(|| anyhow!("unknown energy preset `{name}`"))?;
    }
    if let Some(c) = args.charge_metadata {
        exp.charge_metadata = c;
    }
    if let Some(p) = args.metadata_port {
        for a in &mut exp.architectures {
            a.metadata_port = p;
        }
    }
    exp.stress_mode |= args.stress;
    exp.validate()
        .map_err(|errs| anyhow!("invalid experiment:\n  {}", errs.join("\n  ")))?;

    let reports = run_experiment(&exp).map_err(|e| match e {
        ExperimentError::Invalid(_) | ExperimentError::Trace { .. } => Failure::Invalid(e.into()),
        _ => Failure::Breach(e.into()),
    })?;

    if let Some(dir) = args.out.as_ref().or(exp.output_dir.as_ref()) {
        let files = write_report_dir(dir, &reports)
            .with_context(|| format!("writing reports to {}", dir.display()))
            .map_err(Failure::Breach)?;
        eprintln!("wrote {} files to {}", files.len(), dir.display());
    }
    emit_reports(&reports, args.format.into(), std::io::stdout().lock())
        .context("writing summary")
        .map_err(Failure::Breach)?;

    let breaches: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.invariant_violations
                .iter()
                .map(move |v| format!("{}/{}: {v}", r.workload, r.arch))
        })
        .collect();
    if breaches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Breach(anyhow!("invariant violations:\n  {}", breaches.join("\n  "))))
    }
}

fn cmd_check(source: Source) -> CmdResult {
    let experiments = if source.config.is_none() && source.preset.is_none() {
        PRESETS
            .iter()
            .map(|p| Experiment::preset(p, DEFAULT_SEED).expect("listed preset"))
            .collect()
    } else {
        vec![load(&source, None)?]
    };
    let mut problems = Vec::new();
    for exp in &experiments {
        match exp.validate() {
            Ok(()) => {
                println!("{}: ok, {} runs", exp.name, exp.run_count());
                for a in exp.architectures.iter().filter(|a| a.kind == ArchKind::Caram) {
                    if let Ok(b) = metadata_budget(a.usable_bytes()) {
                        println!(
                            "  caram metadata: {} MiB needed for {} MiB usable, {} MiB reserved",
                            b.total_bytes().div_ceil(MIB),
                            a.usable_bytes() / MIB,
                            a.metadata_region_bytes / MIB
                        );
                    }
                }
            }
            Err(errs) => problems.extend(errs.into_iter().map(|e| format!("{}: {e}", exp.name))),
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invalid(anyhow!("{}", problems.join("\n  "))))
    }
}
