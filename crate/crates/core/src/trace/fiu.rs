//! FIU / SNIA IOTTA deduplication trace reader.
//!
//! Each line holds whitespace-separated columns:
//!
//! ```text
//! timestamp_ns  pid  process  lba  size  op  major  minor  md5
//! ```
//!
//! `lba` and `size` are in 512-byte sectors, `op` is `W` or `R`, and `md5` is
//! the 32-digit hex MD5 of the block. Process names may contain spaces, so the
//! six trailing columns are taken from the right. The block fingerprint is the
//! first four MD5 bytes read big-endian (the first eight hex digits).
//! Blank lines and lines starting with `#` are ignored.

use std::io::BufRead;

use super::{ParsedTrace, TraceError, TraceRecord};
use crate::trace::Op;

const SECTOR_BYTES: u64 = 512;
const SECTORS_PER_BLOCK: u64 = crate::BLOCK_BYTES / SECTOR_BYTES;

/// Parses one non-empty FIU line into a (possibly multi-block) record.
pub fn parse_fiu_line(line: &str) -> Result<TraceRecord, String> {
    let cols: Vec<&str> = line.split_whitespace().collect();
    if cols.len() < 9 {
        return Err(format!("expected 9 columns, found {}", cols.len()));
    }
    let n = cols.len();
    let timestamp_ns: u64 = cols[0]
        .parse()
        .map_err(|_| format!("bad timestamp {:?}", cols[0]))?;
    let lba: u64 = cols[n - 6]
        .parse()
        .map_err(|_| format!("bad lba {:?}", cols[n - 6]))?;
    let sectors: u64 = cols[n - 5]
        .parse()
        .map_err(|_| format!("bad size {:?}", cols[n - 5]))?;
    if sectors == 0 {
        return Err("zero-length request".into());
    }
    let op = match cols[n - 4] {
        "W" | "w" | "Write" | "write" | "WRITE" => Op::Write,
        "R" | "r" | "Read" | "read" | "READ" => Op::Read,
        other => return Err(format!("bad op {other:?}")),
    };
    let major: u32 = cols[n - 3]
        .parse()
        .map_err(|_| format!("bad major {:?}", cols[n - 3]))?;
    let minor: u32 = cols[n - 2]
        .parse()
        .map_err(|_| format!("bad minor {:?}", cols[n - 2]))?;
    let md5 = cols[n - 1];
    if md5.len() != 32 || !md5.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("bad md5 {md5:?}"));
    }
    let block_hash = u32::from_str_radix(&md5[..8], 16).expect("validated hex");

    let block_lba = lba / SECTORS_PER_BLOCK;
    let end_sector = lba
        .checked_add(sectors)
        .ok_or_else(|| "lba overflow".to_string())?;
    let blocks = end_sector.div_ceil(SECTORS_PER_BLOCK) - block_lba;
    let block_count = u32::try_from(blocks).map_err(|_| "request too large".to_string())?;

    Ok(TraceRecord {
        timestamp_ns,
        device_id: (major << 16) | (minor & 0xffff),
        block_lba,
        block_count,
        op,
        block_hash,
    })
}

/// Formats a single-block record back into an FIU line.
pub fn format_fiu_line(record: &TraceRecord) -> String {
    format!(
        "{} 0 sim {} {} {} {} {} {:08x}{:024x}",
        record.timestamp_ns,
        record.block_lba * SECTORS_PER_BLOCK,
        u64::from(record.block_count) * SECTORS_PER_BLOCK,
        if record.op.is_write() { "W" } else { "R" },
        record.device_id >> 16,
        record.device_id & 0xffff,
        record.block_hash,
        0u128,
    )
}

/// Parses a whole FIU stream. Malformed lines are skipped; more than 1%
/// malformed is a format error naming the first bad line (1-based).
pub fn parse_fiu<R: BufRead>(reader: R) -> Result<ParsedTrace, TraceError> {
    let mut records = Vec::new();
    let mut total = 0usize;
    let mut malformed = 0usize;
    let mut first_failure: Option<(usize, String)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        total += 1;
        match parse_fiu_line(trimmed) {
            Ok(record) => records.push(record),
            Err(reason) => {
                malformed += 1;
                first_failure.get_or_insert((idx + 1, reason));
            }
        }
    }

    if malformed * 100 > total {
        let (first_line, reason) = first_failure.expect("malformed > 0");
        return Err(TraceError::Format {
            first_line,
            reason,
            malformed,
            total,
        });
    }
    Ok(ParsedTrace {
        records: super::expand_block_counts(records),
        skipped: malformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "89966527834177 4846 syslogd 904301208 8 W 6 0 531a0c4b4d8d5ebf0e4cf3f4e6cd8e5c";

    #[test]
    fn parses_iotta_columns() {
        let r = parse_fiu_line(LINE).unwrap();
        assert_eq!(r.timestamp_ns, 89966527834177);
        assert_eq!(r.block_lba, 904301208 / 8);
        assert_eq!(r.block_count, 1);
        assert_eq!(r.op, Op::Write);
        assert_eq!(r.device_id, 6 << 16);
        assert_eq!(r.block_hash, 0x531a0c4b);
    }

    #[test]
    fn process_names_with_spaces() {
        let r = parse_fiu_line("10 1 kworker/0:1 H 80 16 R 8 1 ffffffff000000000000000000000000").unwrap();
        assert_eq!(r.block_lba, 10);
        assert_eq!(r.block_count, 2);
        assert_eq!(r.op, Op::Read);
        assert_eq!(r.block_hash, 0xffffffff);
    }

    #[test]
    fn unaligned_request_covers_touched_blocks() {
        let r = parse_fiu_line("1 1 p 4 8 W 0 0 00000001000000000000000000000000").unwrap();
        assert_eq!((r.block_lba, r.block_count), (0, 2));
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(parse_fiu_line("1 2 3").is_err());
        assert!(parse_fiu_line("x 1 p 0 8 W 0 0 00000001000000000000000000000000").is_err());
        assert!(parse_fiu_line("1 1 p 0 8 X 0 0 00000001000000000000000000000000").is_err());
        assert!(parse_fiu_line("1 1 p 0 0 W 0 0 00000001000000000000000000000000").is_err());
        assert!(parse_fiu_line("1 1 p 0 8 W 0 0 0000zz01000000000000000000000000").is_err());
        assert!(parse_fiu_line("1 1 p 0 8 W 0 0 00000001").is_err());
    }

    #[test]
    fn format_round_trips() {
        let r = parse_fiu_line(LINE).unwrap();
        assert_eq!(parse_fiu_line(&format_fiu_line(&r)).unwrap(), r);
    }

    #[test]
    fn tolerates_one_percent_malformed() {
        let mut text = String::new();
        for i in 0..100 {
            text.push_str(&format!("{i} 1 p {} 8 W 0 0 0000000{}000000000000000000000000\n", i * 8, i % 10));
        }
        text.push_str("garbage\n");
        let parsed = parse_fiu(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 100);
        assert_eq!(parsed.skipped, 1);

        text.push_str("more garbage\n");
        match parse_fiu(text.as_bytes()) {
            Err(TraceError::Format { first_line, malformed, .. }) => {
                assert_eq!(first_line, 101);
                assert_eq!(malformed, 2);
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_not_counted() {
        let text = format!("# header\n\n{LINE}\n");
        let parsed = parse_fiu(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.skipped, 0);
    }
}
