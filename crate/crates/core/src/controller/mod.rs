//! The memory controller: request admission, per-architecture routing, the
//! DRAM write buffer, physical line allocation and page-cache eviction.
//!
//! One run is a discrete-event simulation. Each admitted request becomes a
//! chain of device operations issued back to back; chains of different
//! requests and of write-buffer drains interleave on the channels.
//!
//! DRAM is laid out as `[metadata | write buffer | mapped]`. Physical line
//! addresses number the PCM lines first, then the mapped DRAM lines.

mod alloc;
mod buffer;
mod config;
mod page_cache;

pub use alloc::{Home, HotPagePolicy, HybridAllocator};
pub use buffer::{BufferEntry, WriteBuffer};
pub use config::{ArchKind, ArchitectureConfig, MetadataPort};
pub use page_cache::{EvictionPolicy, PageCache};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dedup::{
    metadata_budget, DedupEngine, DedupError, DedupStats, LineAllocator, MemOp, MetaKey, Pla, ReadOutcome,
    AMT_ENTRY_BYTES, LFI_ENTRY_BYTES,
};
use crate::memdev::{Channel, ChannelCounts, DeviceKind, DeviceTiming, MemdevError, OpKind, WearSummary};
use crate::trace::{LineRequest, Op};
use crate::{LINES_PER_BLOCK, LINE_BYTES};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("trace not time-ordered at request {0}")]
    Unordered(usize),
    #[error("cycle {cycle}: out of memory, nothing left to evict")]
    Capacity { cycle: u64 },
    #[error("cycle {cycle}: {source}")]
    Device { cycle: u64, source: MemdevError },
    #[error("cycle {cycle}: {source}")]
    Dedup { cycle: u64, source: DedupError },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferStats {
    pub capacity_lines: u64,
    pub peak_occupancy: u64,
    pub final_occupancy: u64,
    pub drained: u64,
    pub cancelled: u64,
    pub drain_episodes: u64,
    pub stalls: u64,
}

/// Raw outcome of one run, before metrics are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub arch: ArchKind,
    pub read_requests: u64,
    pub write_requests: u64,
    pub completed_requests: u64,
    /// Completion cycle of the last trace request.
    pub total_cycles: u64,
    /// Extra cycles spent draining the write buffer after the last request.
    pub quiesce_cycles: u64,
    pub dram_bytes: u64,
    pub pcm_bytes: u64,
    pub dram: ChannelCounts,
    pub pcm: ChannelCounts,
    /// Lines written to their physical home on behalf of write requests.
    pub home_line_writes: u64,
    pub live_lines: u64,
    pub amt_entries: u64,
    pub lfi_entries: u64,
    pub dedup: Option<DedupStats>,
    pub wear: WearSummary,
    pub evicted_pages: u64,
    pub read_misses: u64,
    pub buffer: BufferStats,
    pub invariant_violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ch {
    Dram,
    Pcm,
    Meta,
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Dev { ch: Ch, kind: OpKind, addr: u64 },
    /// Line access resolved when issued: a buffered copy wins over home.
    Read { pla: Pla, kind: OpKind },
    BufferWrite { pla: Pla },
    Delay(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Admit,
    Step(usize),
    Drain(usize),
}

#[derive(Debug)]
struct Drain {
    entry: BufferEntry,
    stage: u8,
}

// One per simulator, so the size gap does not matter.
#[allow(clippy::large_enum_variant)]
enum Mapping {
    Dedup(DedupEngine),
    Table(HashMap<u32, Pla>),
}

pub struct Simulator {
    cfg: ArchitectureConfig,
    dram: Option<Channel>,
    pcm: Option<Channel>,
    meta: Option<Channel>,
    alloc: HybridAllocator,
    mapping: Mapping,
    cache: PageCache,
    buffer: Option<WriteBuffer>,
    meta_lines: u64,
    amt_entries: u64,
    lfi_entries: u64,
    buffer_base: u64,
    mapped_base: u64,
    events: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    chains: Vec<Option<VecDeque<Step>>>,
    free_chain_ids: Vec<usize>,
    drains: Vec<Option<Drain>>,
    waiters: VecDeque<usize>,
    home_line_writes: u64,
    evicted_pages: u64,
    read_misses: u64,
    stalls: u64,
}

impl Simulator {
    pub fn new(cfg: &ArchitectureConfig, dram: &DeviceTiming, pcm: &DeviceTiming) -> Result<Self, ControllerError> {
        cfg.validate(dram, pcm).map_err(ControllerError::Config)?;
        let dev = |kind, timing: &DeviceTiming, bytes: u64| -> Result<Option<Channel>, ControllerError> {
            if bytes == 0 {
                return Ok(None);
            }
            Channel::new(kind, *timing, bytes, cfg.address_mapping)
                .map(Some)
                .map_err(|e| ControllerError::Config(vec![e.to_string()]))
        };
        let dram_ch = dev(DeviceKind::Dram, dram, cfg.dram_bytes)?;
        let pcm_ch = dev(DeviceKind::Pcm, pcm, cfg.pcm_bytes)?;
        let caram = cfg.kind == ArchKind::Caram;
        let meta_ch = if caram && cfg.metadata_port == MetadataPort::Separate {
            dev(DeviceKind::Dram, dram, cfg.dram_bytes)?
        } else {
            None
        };

        let meta_lines = cfg.metadata_region_bytes / LINE_BYTES;
        let buffer_lines = cfg.write_buffer_bytes / LINE_BYTES;
        let mapped_lines = match cfg.kind {
            ArchKind::PurePcm => 0,
            _ => cfg.dram_mapped_bytes() / LINE_BYTES,
        };
        let hot = cfg.has_write_buffer().then_some(HotPagePolicy {
            epoch_cycles: cfg.hot_page_epoch_cycles,
            threshold: cfg.hot_page_threshold,
        });
        let alloc = HybridAllocator::new(pcm_ch.as_ref().map(|c| *c.geometry()), mapped_lines, hot);
        let budget = metadata_budget(cfg.usable_bytes()).map_err(|e| ControllerError::Config(vec![e.to_string()]))?;
        let mapping = if caram {
            Mapping::Dedup(DedupEngine::new(budget))
        } else {
            Mapping::Table(HashMap::new())
        };
        let buffer = cfg
            .has_write_buffer()
            .then(|| WriteBuffer::new(buffer_lines, cfg.drain_high_watermark, cfg.drain_low_watermark));
        Ok(Self {
            cfg: cfg.clone(),
            dram: dram_ch,
            pcm: pcm_ch,
            meta: meta_ch,
            alloc,
            mapping,
            cache: PageCache::new(cfg.eviction_policy),
            buffer,
            meta_lines,
            amt_entries: budget.lines(),
            lfi_entries: budget.lines(),
            buffer_base: meta_lines,
            mapped_base: meta_lines + buffer_lines,
            events: BinaryHeap::new(),
            seq: 0,
            chains: Vec::new(),
            free_chain_ids: Vec::new(),
            drains: Vec::new(),
            waiters: VecDeque::new(),
            home_line_writes: 0,
            evicted_pages: 0,
            read_misses: 0,
            stalls: 0,
        })
    }

    fn schedule(&mut self, cycle: u64, ev: Event) {
        self.seq += 1;
        self.events.push(Reverse((cycle, self.seq, ev)));
    }

    fn channel(&mut self, ch: Ch) -> &mut Channel {
        match ch {
            Ch::Dram => self.dram.as_mut(),
            Ch::Pcm => self.pcm.as_mut(),
            Ch::Meta => self.meta.as_mut().or(self.dram.as_mut()),
        }
        .expect("routing only targets present channels")
    }

    fn service(&mut self, ch: Ch, kind: OpKind, addr: u64, now: u64) -> Result<u64, ControllerError> {
        self.channel(ch)
            .service(kind, addr, now)
            .map(|op| op.complete_cycle)
            .map_err(|source| ControllerError::Device { cycle: now, source })
    }

    /// DRAM line holding a metadata entry.
    fn meta_addr(&self, key: MetaKey) -> u64 {
        let byte = match key {
            MetaKey::Amt(lla) => (u64::from(lla) % self.amt_entries) * AMT_ENTRY_BYTES,
            MetaKey::Lfi(lfp, d) => {
                let slot = (u64::from(lfp) + u64::from(d) * 0x9e37_79b9) % self.lfi_entries;
                self.amt_entries * AMT_ENTRY_BYTES + slot * LFI_ENTRY_BYTES
            }
        };
        (byte / LINE_BYTES).min(self.meta_lines - 1)
    }

    /// Device location of a line's home copy.
    fn home_of(&self, pla: Pla) -> (Ch, u64) {
        match self.alloc.home(pla) {
            Home::Pcm(a) => (Ch::Pcm, a),
            Home::Dram(a) => (Ch::Dram, self.mapped_base + a),
        }
    }

    fn write_step(&self, pla: Pla) -> Step {
        match self.home_of(pla) {
            (Ch::Pcm, _) if self.buffer.is_some() => Step::BufferWrite { pla },
            (ch, addr) => Step::Dev {
                ch,
                kind: OpKind::LineWrite,
                addr,
            },
        }
    }

    fn cancel_buffered(&mut self, pla: Pla) {
        if let Some(b) = self.buffer.as_mut() {
            b.cancel(pla);
            let in_flight: Vec<BufferEntry> = self.drains.iter().flatten().map(|d| d.entry).collect();
            b.cancel_in_flight(pla, &in_flight);
        }
    }

    fn evict_page(&mut self, page: u32) -> Result<(), ControllerError> {
        let llas: Vec<u32> = (page * LINES_PER_BLOCK as u32..(page + 1) * LINES_PER_BLOCK as u32).collect();
        let freed: Vec<Pla> = match &mut self.mapping {
            Mapping::Dedup(engine) => {
                let mapped: Vec<u32> = llas.into_iter().filter(|&l| engine.lookup(l).is_some()).collect();
                engine
                    .evict_lines(&mapped, &mut self.alloc)
                    .map_err(|source| ControllerError::Dedup { cycle: self.alloc.now, source })?
            }
            Mapping::Table(table) => {
                let mut freed = Vec::new();
                for lla in llas {
                    if let Some(pla) = table.remove(&lla) {
                        self.alloc.release(pla);
                        freed.push(pla);
                    }
                }
                freed
            }
        };
        for pla in freed {
            self.cancel_buffered(pla);
        }
        self.evicted_pages += 1;
        Ok(())
    }

    /// Evicts pages until a line is free, charging swap-out time to `steps`.
    fn make_room(&mut self, now: u64, steps: &mut VecDeque<Step>) -> Result<(), ControllerError> {
        while self.alloc.free_lines() == 0 {
            let page = self.cache.victim().ok_or(ControllerError::Capacity { cycle: now })?;
            self.evict_page(page)?;
            steps.push_back(Step::Delay(self.cfg.swap_out_cycles_per_page));
        }
        Ok(())
    }

    fn plan(&mut self, req: &LineRequest, now: u64) -> Result<VecDeque<Step>, ControllerError> {
        let mut steps = VecDeque::new();
        self.alloc.now = now;
        let page = req.lla / LINES_PER_BLOCK as u32;
        match req.op {
            Op::Read => {
                let hit = match &mut self.mapping {
                    Mapping::Dedup(engine) => match engine.process_read(req.lla) {
                        ReadOutcome::Hit { pla, .. } => Some(pla),
                        ReadOutcome::Miss { .. } => None,
                    },
                    Mapping::Table(table) => table.get(&req.lla).copied(),
                };
                if matches!(self.mapping, Mapping::Dedup(_)) {
                    steps.push_back(Step::Dev {
                        ch: Ch::Meta,
                        kind: OpKind::MetadataRead,
                        addr: self.meta_addr(MetaKey::Amt(req.lla)),
                    });
                }
                match hit {
                    Some(pla) => {
                        steps.push_back(Step::Read { pla, kind: OpKind::LineRead });
                        self.cache.touch(page);
                    }
                    None => {
                        self.read_misses += 1;
                        steps.push_back(Step::Delay(self.cfg.read_miss_cycles));
                    }
                }
            }
            Op::Write => {
                self.alloc.note_write(req.lla);
                if matches!(self.mapping, Mapping::Dedup(_)) {
                    self.make_room(now, &mut steps)?;
                    let Mapping::Dedup(engine) = &mut self.mapping else { unreachable!() };
                    let outcome = engine
                        .process_write(req.lla, req.lfp, req.payload.as_ref(), &mut self.alloc)
                        .map_err(|source| ControllerError::Dedup { cycle: now, source })?;
                    for op in outcome.memory_ops {
                        match op {
                            MemOp::MetaRead(k) => steps.push_back(Step::Dev {
                                ch: Ch::Meta,
                                kind: OpKind::MetadataRead,
                                addr: self.meta_addr(k),
                            }),
                            MemOp::MetaWrite(k) => steps.push_back(Step::Dev {
                                ch: Ch::Meta,
                                kind: OpKind::MetadataWrite,
                                addr: self.meta_addr(k),
                            }),
                            MemOp::CompareRead(pla) => steps.push_back(Step::Read { pla, kind: OpKind::CompareRead }),
                            MemOp::LineRead(pla) => steps.push_back(Step::Read { pla, kind: OpKind::LineRead }),
                            MemOp::LineWrite(pla) => {
                                self.home_line_writes += 1;
                                steps.push_back(self.write_step(pla));
                            }
                            MemOp::FreeLine(pla) => self.cancel_buffered(pla),
                        }
                    }
                } else {
                    let existing = match &self.mapping {
                        Mapping::Table(t) => t.get(&req.lla).copied(),
                        Mapping::Dedup(_) => unreachable!(),
                    };
                    let pla = match existing {
                        Some(pla) => pla,
                        None => {
                            self.make_room(now, &mut steps)?;
                            let pla = self
                                .alloc
                                .allocate(req.lla)
                                .map_err(|source| ControllerError::Dedup { cycle: now, source })?;
                            if let Mapping::Table(t) = &mut self.mapping {
                                t.insert(req.lla, pla);
                            }
                            pla
                        }
                    };
                    self.home_line_writes += 1;
                    steps.push_back(self.write_step(pla));
                }
                self.cache.touch(page);
            }
        }
        Ok(steps)
    }

    fn start_drains(&mut self, now: u64) {
        let Some(buffer) = self.buffer.as_mut() else { return };
        loop {
            let in_flight = self.drains.iter().flatten().count();
            if in_flight >= self.cfg.max_concurrent_drains {
                return;
            }
            let Some(entry) = buffer.next_drain(in_flight as u64) else { return };
            let id = match self.drains.iter().position(Option::is_none) {
                Some(i) => i,
                None => {
                    self.drains.push(None);
                    self.drains.len() - 1
                }
            };
            self.drains[id] = Some(Drain { entry, stage: 0 });
            self.seq += 1;
            self.events.push(Reverse((now, self.seq, Event::Drain(id))));
        }
    }

    fn wake_waiter(&mut self, now: u64) {
        if let Some(id) = self.waiters.pop_front() {
            self.schedule(now, Event::Step(id));
        }
    }

    fn drain_step(&mut self, id: usize, now: u64) -> Result<Option<u64>, ControllerError> {
        let d = self.drains[id].as_mut().expect("live drain");
        let entry = d.entry;
        let stage = d.stage;
        d.stage += 1;
        let buffer = self.buffer.as_ref().expect("drains need a buffer");
        match stage {
            0 => Ok(Some(self.service(Ch::Dram, OpKind::LineRead, self.buffer_base + entry.slot, now)?)),
            1 if buffer.is_live(&entry) => {
                let (ch, addr) = self.home_of(entry.pla);
                Ok(Some(self.service(ch, OpKind::LineWrite, addr, now)?))
            }
            1 => Ok(Some(now)),
            _ => {
                self.drains[id] = None;
                self.buffer.as_mut().unwrap().complete(&entry);
                self.wake_waiter(now);
                self.start_drains(now);
                Ok(None)
            }
        }
    }

    /// Runs one step of request chain `id`; returns false when the chain is
    /// parked waiting for buffer space.
    fn chain_step(&mut self, id: usize, now: u64) -> Result<Option<u64>, ControllerError> {
        let Some(step) = self.chains[id].as_mut().expect("live chain").pop_front() else {
            return Ok(None);
        };
        let next = match step {
            Step::Dev { ch, kind, addr } => self.service(ch, kind, addr, now)?,
            Step::Delay(c) => now + c,
            Step::Read { pla, kind } => match self.buffer.as_ref().and_then(|b| b.lookup(pla)) {
                Some(slot) => self.service(Ch::Dram, kind, self.buffer_base + slot, now)?,
                None => {
                    let (ch, addr) = self.home_of(pla);
                    self.service(ch, kind, addr, now)?
                }
            },
            Step::BufferWrite { pla } => {
                if !self.alloc.is_live(pla) {
                    now
                } else if self.buffer.as_ref().unwrap().is_full() {
                    self.chains[id].as_mut().unwrap().push_front(step);
                    self.waiters.push_back(id);
                    self.stalls += 1;
                    self.start_drains(now);
                    return Ok(Some(u64::MAX));
                } else {
                    let entry = self.buffer.as_mut().unwrap().push(pla);
                    let done = self.service(Ch::Dram, OpKind::LineWrite, self.buffer_base + entry.slot, now)?;
                    self.start_drains(now);
                    done
                }
            }
        };
        Ok(Some(next))
    }

    pub fn run(mut self, trace: &[LineRequest]) -> Result<RunOutput, ControllerError> {
        if let Some(i) = trace.windows(2).position(|w| w[1].arrival_cycle < w[0].arrival_cycle) {
            return Err(ControllerError::Unordered(i + 1));
        }
        let mut next_req = 0usize;
        let mut in_flight = 0usize;
        let mut admit_pending = false;
        let mut completed = 0u64;
        let mut total_cycles = 0u64;
        let mut last_event = 0u64;
        let mut flushing = false;
        if let Some(first) = trace.first() {
            self.schedule(first.arrival_cycle, Event::Admit);
            admit_pending = true;
        }

        while let Some(Reverse((now, _, ev))) = self.events.pop() {
            last_event = last_event.max(now);
            match ev {
                Event::Admit => {
                    admit_pending = false;
                    let req = &trace[next_req];
                    let steps = self.plan(req, now)?;
                    let id = self.free_chain_ids.pop().unwrap_or_else(|| {
                        self.chains.push(None);
                        self.chains.len() - 1
                    });
                    self.chains[id] = Some(steps);
                    self.schedule(now, Event::Step(id));
                    next_req += 1;
                    in_flight += 1;
                    if in_flight < self.cfg.queue_depth && next_req < trace.len() {
                        self.schedule(now.max(trace[next_req].arrival_cycle), Event::Admit);
                        admit_pending = true;
                    }
                }
                Event::Step(id) => match self.chain_step(id, now)? {
                    Some(u64::MAX) => {}
                    Some(next) => self.schedule(next, Event::Step(id)),
                    None => {
                        self.chains[id] = None;
                        self.free_chain_ids.push(id);
                        completed += 1;
                        in_flight -= 1;
                        total_cycles = total_cycles.max(now);
                        if !admit_pending && next_req < trace.len() {
                            self.schedule(now.max(trace[next_req].arrival_cycle), Event::Admit);
                            admit_pending = true;
                        }
                    }
                },
                Event::Drain(id) => {
                    if let Some(next) = self.drain_step(id, now)? {
                        self.schedule(next, Event::Drain(id));
                    }
                }
            }
            if !flushing && completed == trace.len() as u64 {
                flushing = true;
                if let Some(b) = self.buffer.as_mut() {
                    b.force_drain();
                }
                self.start_drains(now);
            }
        }
        Ok(self.finish(trace, completed, total_cycles, last_event.saturating_sub(total_cycles)))
    }

    fn finish(self, trace: &[LineRequest], completed: u64, total_cycles: u64, quiesce_cycles: u64) -> RunOutput {
        let reads = trace.iter().filter(|r| r.op == Op::Read).count() as u64;
        let mut violations = Vec::new();
        let (amt_entries, lfi_entries, dedup) = match &self.mapping {
            Mapping::Dedup(engine) => {
                if let Err(e) = engine.check_invariants() {
                    violations.push(e);
                }
                if engine.lfi_len() as u64 != self.alloc.live_lines() {
                    violations.push(format!(
                        "LFI holds {} lines but the allocator has {} live",
                        engine.lfi_len(),
                        self.alloc.live_lines()
                    ));
                }
                (engine.amt_len() as u64, engine.lfi_len() as u64, Some(*engine.stats()))
            }
            Mapping::Table(t) => {
                if t.len() as u64 != self.alloc.live_lines() {
                    violations.push("page table and allocator disagree".into());
                }
                (0, 0, None)
            }
        };
        if self.alloc.live_lines() > self.alloc.capacity_lines() {
            violations.push("live lines exceed capacity".into());
        }
        if completed != trace.len() as u64 {
            violations.push(format!("{} of {} requests completed", completed, trace.len()));
        }
        let mut dram = self.dram.as_ref().map(|c| *c.counts()).unwrap_or_default();
        if let Some(m) = &self.meta {
            let c = m.counts();
            dram.metadata_reads += c.metadata_reads;
            dram.metadata_writes += c.metadata_writes;
            dram.activations += c.activations;
            dram.precharges += c.precharges;
            dram.row_hits += c.row_hits;
            dram.busy_cycles += c.busy_cycles;
        }
        let buffer = self
            .buffer
            .as_ref()
            .map(|b| BufferStats {
                capacity_lines: b.capacity(),
                peak_occupancy: b.peak,
                final_occupancy: b.occupancy(),
                drained: b.drained,
                cancelled: b.cancelled,
                drain_episodes: b.episodes,
                stalls: self.stalls,
            })
            .unwrap_or_default();
        RunOutput {
            arch: self.cfg.kind,
            read_requests: reads,
            write_requests: trace.len() as u64 - reads,
            completed_requests: completed,
            total_cycles,
            quiesce_cycles,
            dram_bytes: self.cfg.dram_bytes,
            pcm_bytes: self.cfg.pcm_bytes,
            dram,
            pcm: self.pcm.as_ref().map(|c| *c.counts()).unwrap_or_default(),
            home_line_writes: self.home_line_writes,
            live_lines: self.alloc.live_lines(),
            amt_entries,
            lfi_entries,
            dedup,
            wear: WearSummary::of(self.pcm.as_ref().map_or(&[][..], |c| c.wear_histogram())),
            evicted_pages: self.evicted_pages,
            read_misses: self.read_misses,
            buffer,
            invariant_violations: violations,
        }
    }
}

/// Convenience wrapper: builds a simulator and replays `trace`.
pub fn run(
    trace: &[LineRequest],
    arch: &ArchitectureConfig,
    dram: &DeviceTiming,
    pcm: &DeviceTiming,
) -> Result<RunOutput, ControllerError> {
    Simulator::new(arch, dram, pcm)?.run(trace)
}
