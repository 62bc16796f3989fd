use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use caram::experiment::WorkloadCounts;
use caram::trace::native::encode_blocks;
use caram::trace::{
    decode_native, encode_native, generate_synthetic, open_transparent, parse_trace, NativeTrace, SyntheticTraceSpec,
    TraceFormat, TraceStats,
};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use crate::CmdResult;

#[derive(Subcommand)]
pub enum TraceCommand {
    /// Print read/write totals and unique-content counts.
    Inspect {
        path: PathBuf,
        /// Input format; detected from the file header when omitted.
        #[arg(long, value_enum)]
        format: Option<InputFormat>,
        #[arg(long)]
        json: bool,
    },
    /// Convert an FIU text trace (optionally gzipped) to the native format.
    Convert { input: PathBuf, output: PathBuf },
    /// Write a synthetic line trace in the native format.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Fiu,
    Native,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// TOML file holding the synthetic trace fields, without `rng_seed`.
    #[arg(long, value_name = "PATH", conflicts_with = "calibration", required_unless_present = "calibration")]
    spec: Option<PathBuf>,
    /// Shape the trace like one of the built-in workloads.
    #[arg(long, value_name = "NAME")]
    calibration: Option<String>,
    #[arg(long)]
    seed: u64,
    /// Override the request count.
    #[arg(long)]
    total_lines: Option<u64>,
    /// Store line contents, not just fingerprints.
    #[arg(long)]
    payload: bool,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

pub fn run(cmd: TraceCommand) -> CmdResult {
    match cmd {
        TraceCommand::Inspect { path, format, json } => inspect(&path, format, json),
        TraceCommand::Convert { input, output } => convert(&input, &output),
        TraceCommand::Generate(args) => generate(args),
    }
}

#[derive(Serialize)]
struct Inspection<'a> {
    path: &'a Path,
    format: &'static str,
    unit: &'static str,
    records: usize,
    skipped: usize,
    #[serde(flatten)]
    stats: TraceStats,
}

fn detect(path: &Path) -> anyhow::Result<InputFormat> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = open_transparent(file)?;
    let head = reader.fill_buf()?;
    Ok(if head.starts_with(b"CLT1") {
        InputFormat::Native
    } else {
        InputFormat::Fiu
    })
}

fn inspect(path: &Path, format: Option<InputFormat>, json: bool) -> CmdResult {
    let format = match format {
        Some(f) => f,
        None => detect(path)?,
    };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (name, unit, records, skipped, stats) = match format {
        InputFormat::Fiu => {
            let parsed = parse_trace(file, TraceFormat::Fiu).with_context(|| format!("parsing {}", path.display()))?;
            let stats = TraceStats::of_blocks(&parsed.records);
            ("fiu", "blocks", parsed.records.len(), parsed.skipped, stats)
        }
        InputFormat::Native => {
            let mut bytes = Vec::new();
            std::io::Read::read_to_end(&mut open_transparent(file)?, &mut bytes)
                .with_context(|| format!("reading {}", path.display()))?;
            match decode_native(&bytes).with_context(|| format!("decoding {}", path.display()))? {
                NativeTrace::Blocks(r) => ("native", "blocks", r.len(), 0, TraceStats::of_blocks(&r)),
                NativeTrace::Lines(r) => ("native", "lines", r.len(), 0, TraceStats::of_lines(&r)),
            }
        }
    };
    let report = Inspection {
        path,
        format: name,
        unit,
        records,
        skipped,
        stats,
    };
    let mut out = std::io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &report).context("writing json")?;
        writeln!(out).context("writing json")?;
        return Ok(());
    }
    let s = &report.stats;
    let lines = writeln!(out, "{} ({} {}, {} records)", path.display(), name, unit, records)
        .and_then(|_| writeln!(out, "{:<8} {:>12} {:>12} {:>14}", "", "total", "unique", "lines"))
        .and_then(|_| writeln!(out, "{:<8} {:>12} {:>12} {:>14}", "reads", s.total_reads, s.unique_reads, s.read_lines))
        .and_then(|_| writeln!(out, "{:<8} {:>12} {:>12} {:>14}", "writes", s.total_writes, s.unique_writes, s.write_lines))
        .and_then(|_| if skipped > 0 { writeln!(out, "skipped {skipped} malformed lines") } else { Ok(()) });
    lines.context("writing stats")?;
    Ok(())
}

fn convert(input: &Path, output: &Path) -> CmdResult {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let parsed = parse_trace(file, TraceFormat::Fiu).with_context(|| format!("parsing {}", input.display()))?;
    write_file(output, &encode_blocks(&parsed.records))?;
    eprintln!(
        "{} records -> {} ({} malformed lines skipped)",
        parsed.records.len(),
        output.display(),
        parsed.skipped
    );
    Ok(())
}

fn generate(args: GenerateArgs) -> CmdResult {
    let mut spec = match (&args.spec, &args.calibration) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if table.contains_key("rng_seed") {
                return Err(anyhow!("{}: give the seed with --seed, not `rng_seed`", path.display()).into());
            }
            table.insert("rng_seed".into(), toml::Value::Integer(0));
            let spec: SyntheticTraceSpec = table.try_into().with_context(|| format!("parsing {}", path.display()))?;
            spec
        }
        (None, Some(name)) => WorkloadCounts::by_name(name)
            .ok_or_else(|| anyhow!("unknown calibration `{name}`"))?
            .synthetic(0),
        (None, None) => unreachable!("clap requires one source"),
    };
    spec.rng_seed = args.seed;
    if let Some(n) = args.total_lines {
        spec.total_lines = n;
    }
    spec.with_payload |= args.payload;
    let trace = generate_synthetic(&spec).context("generating trace")?;
    write_file(&args.out, &encode_native(&NativeTrace::Lines(trace)))?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}
