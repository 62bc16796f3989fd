#![no_main]

use caram::trace::{parse_trace, TraceFormat, TraceStats};
use libfuzzer_sys::fuzz_target;

// Plain or gzipped FIU text; malformed lines must be skipped, never panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = parse_trace(data, TraceFormat::Fiu) {
        let stats = TraceStats::of_blocks(&parsed.records);
        assert!(stats.unique_writes <= stats.total_writes);
        assert!(stats.unique_reads <= stats.total_reads);
    }
});
