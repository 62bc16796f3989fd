//! Trace-driven simulator of a content-aware hybrid PCM/DRAM main memory.
//!
//! The memory controller deduplicates 256-byte lines inline: every line write
//! is fingerprinted, looked up in a line fingerprint index (LFI), and either
//! stored as a new physical line or mapped onto an existing one through the
//! address mapping table (AMT). The simulator replays block I/O traces (or
//! synthetic line traces) against four architectures, pure DRAM, pure PCM, a
//! naive hybrid and the deduplicating hybrid, and reports space occupation,
//! bandwidth, energy and wear.
//!
//! Module map:
//!
//! * [`trace`]: trace parsing (FIU text, native `.clt`), block to line
//!   expansion, synthetic generation, and [`hash::super_fast_hash`].
//! * [`dedup`]: the AMT/LFI engine and its write/read/evict procedures.
//! * [`memdev`]: bank and row-buffer timing for one DRAM and one PCM channel.
//! * [`controller`]: request queues, write buffer, allocation, page cache,
//!   and the discrete-event simulation loop.
//! * [`energy`]: event-count energy accounting.
//! * [`metrics`]: the end-of-run report and its serializations.
//! * [`experiment`]: experiment configuration files and parallel sweeps.

pub mod controller;
pub mod dedup;
pub mod energy;
pub mod experiment;
pub mod hash;
pub mod memdev;
pub mod metrics;
pub mod trace;

/// Size of one deduplication and access granule.
pub const LINE_BYTES: u64 = 256;

/// Size of one disk block and of one page-cache page.
pub const BLOCK_BYTES: u64 = 4096;

/// Lines per 4 KiB block (and per page).
pub const LINES_PER_BLOCK: u64 = BLOCK_BYTES / LINE_BYTES;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * KIB;
pub const GIB: u64 = 1024 * MIB;
