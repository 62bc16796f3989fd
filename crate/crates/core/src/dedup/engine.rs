use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{DedupError, Lfp, Lla, MetadataBudget, Pla, MAX_REF_COUNT};
use crate::trace::LinePayload;

/// Source of free physical lines. The engine frees lines through it when their
/// reference count reaches zero.
pub trait LineAllocator {
    fn allocate(&mut self, lla: Lla) -> Result<Pla, DedupError>;
    fn release(&mut self, pla: Pla);
}

/// Hands out physical lines in increasing order and never reuses them.
/// Deterministic and trivially predictable, which makes it the allocator of
/// choice for reference-model comparisons.
#[derive(Debug, Clone, Default)]
pub struct CountingAllocator {
    pub next: Pla,
    pub limit: Option<Pla>,
    pub live: HashSet<Pla>,
}

impl CountingAllocator {
    pub fn with_limit(limit: Pla) -> Self {
        Self {
            limit: Some(limit),
            ..Self::default()
        }
    }
}

impl LineAllocator for CountingAllocator {
    fn allocate(&mut self, _lla: Lla) -> Result<Pla, DedupError> {
        if self.limit.is_some_and(|l| self.live.len() as u64 >= u64::from(l)) {
            return Err(DedupError::Capacity);
        }
        let pla = self.next;
        self.next = self.next.checked_add(1).ok_or(DedupError::Capacity)?;
        self.live.insert(pla);
        Ok(pla)
    }

    fn release(&mut self, pla: Pla) {
        let was_live = self.live.remove(&pla);
        debug_assert!(was_live, "double free of {pla}");
    }
}

/// Which metadata entry a metadata access touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetaKey {
    Amt(Lla),
    Lfi(Lfp, u16),
}

/// Memory traffic induced by a deduplication decision, in issue order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemOp {
    MetaRead(MetaKey),
    MetaWrite(MetaKey),
    /// Read of a stored line to byte-compare it with incoming data.
    CompareRead(Pla),
    LineRead(Pla),
    LineWrite(Pla),
    /// The line's last reference went away; it returns to the allocator.
    FreeLine(Pla),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    DuplicateRequestDropped,
    SharedExistingLine,
    NewLineWritten,
    LineUpdated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub kind: OutcomeKind,
    pub pla: Pla,
    pub memory_ops: Vec<MemOp>,
}

impl DedupOutcome {
    pub fn line_writes(&self) -> usize {
        self.memory_ops
            .iter()
            .filter(|op| matches!(op, MemOp::LineWrite(_)))
            .count()
    }

    pub fn freed(&self) -> impl Iterator<Item = Pla> + '_ {
        self.memory_ops.iter().filter_map(|op| match op {
            MemOp::FreeLine(p) => Some(*p),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadOutcome {
    Hit { pla: Pla, memory_ops: Vec<MemOp> },
    Miss { memory_ops: Vec<MemOp> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub write_requests: u64,
    pub dropped_duplicates: u64,
    pub shared_lines: u64,
    pub new_lines: u64,
    pub updated_lines: u64,
    /// New lines written because a fingerprint matched different content.
    pub collision_copies: u64,
    /// New lines written because the matching line's reference count was full.
    pub overflow_copies: u64,
    pub line_writes: u64,
    pub freed_lines: u64,
    pub read_hits: u64,
    pub read_misses: u64,
    pub evicted_mappings: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfiEntry {
    pub disambiguator: u16,
    pub pla: Pla,
    pub ref_count: u16,
}

/// The deduplicator. Single writer: all mutation goes through `&mut self`.
#[derive(Debug, Clone)]
pub struct DedupEngine {
    budget: MetadataBudget,
    amt: HashMap<Lla, Pla>,
    lfi: HashMap<Lfp, Vec<LfiEntry>>,
    /// Reverse index from a physical line to the LFI entry describing it.
    owner: HashMap<Pla, (Lfp, u16)>,
    contents: HashMap<Pla, LinePayload>,
    /// Running sum of all reference counts.
    total_refs: u64,
    stats: DedupStats,
}

impl DedupEngine {
    pub fn new(budget: MetadataBudget) -> Self {
        Self {
            budget,
            amt: HashMap::new(),
            lfi: HashMap::new(),
            owner: HashMap::new(),
            contents: HashMap::new(),
            total_refs: 0,
            stats: DedupStats::default(),
        }
    }

    pub fn budget(&self) -> &MetadataBudget {
        &self.budget
    }

    pub fn stats(&self) -> &DedupStats {
        &self.stats
    }

    pub fn amt_len(&self) -> usize {
        self.amt.len()
    }

    /// Number of live LFI entries, which equals the number of live lines.
    pub fn lfi_len(&self) -> usize {
        self.owner.len()
    }

    pub fn lookup(&self, lla: Lla) -> Option<Pla> {
        self.amt.get(&lla).copied()
    }

    pub fn entries(&self, lfp: Lfp) -> &[LfiEntry] {
        self.lfi.get(&lfp).map_or(&[], Vec::as_slice)
    }

    pub fn owner_of(&self, pla: Pla) -> Option<(Lfp, u16)> {
        self.owner.get(&pla).copied()
    }

    pub fn ref_count(&self, pla: Pla) -> Option<u16> {
        let (lfp, d) = self.owner_of(pla)?;
        self.entries(lfp)
            .iter()
            .find(|e| e.disambiguator == d)
            .map(|e| e.ref_count)
    }

    /// AMT contents sorted by logical address.
    pub fn amt_sorted(&self) -> Vec<(Lla, Pla)> {
        let mut v: Vec<_> = self.amt.iter().map(|(&l, &p)| (l, p)).collect();
        v.sort_unstable();
        v
    }

    /// LFI contents as `(lfp, entry)` sorted by fingerprint and disambiguator.
    pub fn lfi_sorted(&self) -> Vec<(Lfp, LfiEntry)> {
        let mut v: Vec<_> = self
            .lfi
            .iter()
            .flat_map(|(&f, chain)| chain.iter().map(move |e| (f, *e)))
            .collect();
        v.sort_unstable_by_key(|(f, e)| (*f, e.disambiguator));
        v
    }

    pub fn payload(&self, pla: Pla) -> Option<&LinePayload> {
        self.contents.get(&pla)
    }

    /// Bytes of metadata currently in use (live entries only).
    pub fn metadata_bytes(&self) -> u64 {
        self.amt.len() as u64 * super::AMT_ENTRY_BYTES + self.owner.len() as u64 * super::LFI_ENTRY_BYTES
    }

    fn content_matches(&self, pla: Pla, payload: Option<&[u8]>) -> bool {
        // Without both contents at hand the fingerprint decides.
        match (payload, self.contents.get(&pla)) {
            (Some(incoming), Some(stored)) => incoming == &stored[..],
            _ => true,
        }
    }

    /// Drops one reference to `pla`; frees the line at zero.
    fn release(&mut self, pla: Pla, alloc: &mut dyn LineAllocator, ops: &mut Vec<MemOp>) {
        let (lfp, d) = self.owner[&pla];
        ops.push(MemOp::MetaRead(MetaKey::Lfi(lfp, d)));
        ops.push(MemOp::MetaWrite(MetaKey::Lfi(lfp, d)));
        let chain = self.lfi.get_mut(&lfp).expect("owner implies chain");
        let pos = chain
            .iter()
            .position(|e| e.disambiguator == d)
            .expect("owner implies entry");
        chain[pos].ref_count -= 1;
        self.total_refs -= 1;
        if chain[pos].ref_count == 0 {
            chain.remove(pos);
            if chain.is_empty() {
                self.lfi.remove(&lfp);
            }
            self.owner.remove(&pla);
            self.contents.remove(&pla);
            alloc.release(pla);
            ops.push(MemOp::FreeLine(pla));
            self.stats.freed_lines += 1;
        }
    }

    /// Processes a line write.
    ///
    /// 1. Look the fingerprint up in the LFI and byte-compare every candidate
    ///    line (fingerprint equality stands in when no payload is available).
    /// 2. On a content match: if the AMT already maps `lla` to that line the
    ///    request is a duplicate and is dropped; otherwise `lla` is remapped
    ///    onto the line, releasing its previous line first.
    /// 3. With no match a new line is allocated and written and an LFI entry
    ///    created; if `lla` was mapped the old line is released (an update).
    ///
    /// A match whose reference count is saturated is skipped, so the write
    /// falls through to a private copy.
    pub fn process_write(
        &mut self,
        lla: Lla,
        lfp: Lfp,
        payload: Option<&LinePayload>,
        alloc: &mut dyn LineAllocator,
    ) -> Result<DedupOutcome, DedupError> {
        let incoming = payload.map(|p| &p[..]);
        let current = self.amt.get(&lla).copied();
        let mut ops = Vec::with_capacity(8);

        let mut target: Option<Pla> = None;
        let mut dropped = false;
        let mut saw_saturated = false;
        let mut saw_mismatch = false;

        let chain = self.entries(lfp);
        ops.push(MemOp::MetaRead(MetaKey::Lfi(
            lfp,
            chain.first().map_or(0, |e| e.disambiguator),
        )));
        for (i, e) in chain.iter().enumerate() {
            if i > 0 {
                ops.push(MemOp::MetaRead(MetaKey::Lfi(lfp, e.disambiguator)));
            }
            ops.push(MemOp::CompareRead(e.pla));
            if self.content_matches(e.pla, incoming) {
                if current == Some(e.pla) {
                    dropped = true;
                    target = Some(e.pla);
                    break;
                }
                if e.ref_count < MAX_REF_COUNT {
                    target = Some(e.pla);
                    break;
                }
                saw_saturated = true;
            } else {
                saw_mismatch = true;
            }
        }
        ops.push(MemOp::MetaRead(MetaKey::Amt(lla)));

        if let Some(pla) = target {
            self.stats.write_requests += 1;
            if dropped {
                self.stats.dropped_duplicates += 1;
                return Ok(DedupOutcome {
                    kind: OutcomeKind::DuplicateRequestDropped,
                    pla,
                    memory_ops: ops,
                });
            }
            if let Some(old) = current {
                self.release(old, alloc, &mut ops);
            }
            let (f, d) = self.owner[&pla];
            let entry = self
                .lfi
                .get_mut(&f)
                .and_then(|c| c.iter_mut().find(|e| e.disambiguator == d))
                .expect("target entry is live");
            entry.ref_count += 1;
            self.total_refs += 1;
            ops.push(MemOp::MetaWrite(MetaKey::Lfi(f, d)));
            self.amt.insert(lla, pla);
            ops.push(MemOp::MetaWrite(MetaKey::Amt(lla)));
            self.stats.shared_lines += 1;
            self.debug_check();
            return Ok(DedupOutcome {
                kind: OutcomeKind::SharedExistingLine,
                pla,
                memory_ops: ops,
            });
        }

        let pla = alloc.allocate(lla)?;
        self.stats.write_requests += 1;
        if saw_saturated {
            self.stats.overflow_copies += 1;
        } else if saw_mismatch {
            self.stats.collision_copies += 1;
        }
        ops.push(MemOp::LineWrite(pla));
        self.stats.line_writes += 1;
        if let Some(p) = payload {
            self.contents.insert(pla, p.clone());
        }
        let chain = self.lfi.entry(lfp).or_default();
        let disambiguator = chain.iter().map(|e| e.disambiguator + 1).max().unwrap_or(0);
        chain.push(LfiEntry {
            disambiguator,
            pla,
            ref_count: 1,
        });
        self.total_refs += 1;
        self.owner.insert(pla, (lfp, disambiguator));
        ops.push(MemOp::MetaWrite(MetaKey::Lfi(lfp, disambiguator)));

        let kind = match current {
            Some(old) => {
                self.release(old, alloc, &mut ops);
                self.stats.updated_lines += 1;
                OutcomeKind::LineUpdated
            }
            None => {
                self.stats.new_lines += 1;
                OutcomeKind::NewLineWritten
            }
        };
        self.amt.insert(lla, pla);
        ops.push(MemOp::MetaWrite(MetaKey::Amt(lla)));

        self.debug_check();
        Ok(DedupOutcome {
            kind,
            pla,
            memory_ops: ops,
        })
    }

    /// Resolves a line read through the AMT.
    pub fn process_read(&mut self, lla: Lla) -> ReadOutcome {
        let mut memory_ops = vec![MemOp::MetaRead(MetaKey::Amt(lla))];
        match self.amt.get(&lla) {
            Some(&pla) => {
                self.stats.read_hits += 1;
                memory_ops.push(MemOp::LineRead(pla));
                ReadOutcome::Hit { pla, memory_ops }
            }
            None => {
                self.stats.read_misses += 1;
                ReadOutcome::Miss { memory_ops }
            }
        }
    }

    /// Removes the mappings of evicted logical lines and returns the physical
    /// lines that lost their last reference (already released to `alloc`).
    /// Nothing is modified if any address is unmapped or repeated.
    pub fn evict_lines(
        &mut self,
        llas: &[Lla],
        alloc: &mut dyn LineAllocator,
    ) -> Result<Vec<Pla>, DedupError> {
        let mut seen = HashSet::with_capacity(llas.len());
        for &lla in llas {
            if !self.amt.contains_key(&lla) || !seen.insert(lla) {
                return Err(DedupError::NotMapped(lla));
            }
        }
        let mut ops = Vec::new();
        for &lla in llas {
            let pla = self.amt.remove(&lla).expect("checked above");
            self.release(pla, alloc, &mut ops);
            self.stats.evicted_mappings += 1;
        }
        self.debug_check();
        Ok(ops
            .into_iter()
            .filter_map(|op| match op {
                MemOp::FreeLine(p) => Some(p),
                _ => None,
            })
            .collect())
    }

    fn debug_check(&self) {
        debug_assert_eq!(self.total_refs, self.amt.len() as u64, "reference conservation");
    }

    /// Full structural check. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut refs = 0u64;
        let mut plas = HashSet::new();
        for (&lfp, chain) in &self.lfi {
            if chain.is_empty() {
                return Err(format!("empty chain for {lfp:#x}"));
            }
            let mut tags = HashSet::new();
            for e in chain {
                if e.ref_count == 0 {
                    return Err(format!("zero ref_count for pla {}", e.pla));
                }
                if !plas.insert(e.pla) {
                    return Err(format!("pla {} in two LFI entries", e.pla));
                }
                if !tags.insert(e.disambiguator) {
                    return Err(format!("repeated disambiguator under {lfp:#x}"));
                }
                if self.owner.get(&e.pla) != Some(&(lfp, e.disambiguator)) {
                    return Err(format!("reverse index disagrees for pla {}", e.pla));
                }
                refs += u64::from(e.ref_count);
            }
        }
        if plas.len() != self.owner.len() {
            return Err("reverse index has stale entries".into());
        }
        if refs != self.amt.len() as u64 {
            return Err(format!("sum of ref_count {refs} != AMT size {}", self.amt.len()));
        }
        let mut holders: HashMap<Pla, u64> = HashMap::new();
        for (&lla, &pla) in &self.amt {
            if !plas.contains(&pla) {
                return Err(format!("lla {lla:#x} maps to pla {pla} with no LFI entry"));
            }
            *holders.entry(pla).or_default() += 1;
        }
        for (&lfp, chain) in &self.lfi {
            for e in chain {
                if holders.get(&e.pla).copied().unwrap_or(0) != u64::from(e.ref_count) {
                    return Err(format!("ref_count of {lfp:#x}/{} disagrees with AMT", e.disambiguator));
                }
            }
        }
        Ok(())
    }

    pub(super) fn from_parts(
        budget: MetadataBudget,
        amt: HashMap<Lla, Pla>,
        lfi: HashMap<Lfp, Vec<LfiEntry>>,
        contents: HashMap<Pla, LinePayload>,
    ) -> Result<Self, DedupError> {
        let mut owner = HashMap::new();
        for (&lfp, chain) in &lfi {
            for e in chain {
                owner.insert(e.pla, (lfp, e.disambiguator));
            }
        }
        let total_refs = lfi.values().flatten().map(|e| u64::from(e.ref_count)).sum();
        let engine = Self {
            budget,
            amt,
            lfi,
            owner,
            contents,
            total_refs,
            stats: DedupStats::default(),
        };
        engine.check_invariants().map_err(DedupError::Snapshot)?;
        if engine.contents.keys().any(|p| !engine.owner.contains_key(p)) {
            return Err(DedupError::Snapshot("payload for a dead line".into()));
        }
        Ok(engine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::metadata_budget;

    fn engine() -> (DedupEngine, CountingAllocator) {
        (
            DedupEngine::new(metadata_budget(1 << 20).unwrap()),
            CountingAllocator::default(),
        )
    }

    #[test]
    fn write_sequence_walks_every_branch() {
        let (mut e, mut a) = engine();

        let out = e.process_write(5, 0xAB, None, &mut a).unwrap();
        assert_eq!(out.kind, OutcomeKind::NewLineWritten);
        assert_eq!(out.line_writes(), 1);
        assert_eq!((e.lfi_len(), e.amt_len()), (1, 1));
        let ab = out.pla;
        assert_eq!(e.ref_count(ab), Some(1));

        let out = e.process_write(5, 0xAB, None, &mut a).unwrap();
        assert_eq!(out.kind, OutcomeKind::DuplicateRequestDropped);
        assert_eq!(out.line_writes(), 0);
        assert!(out.memory_ops.contains(&MemOp::CompareRead(ab)));

        let out = e.process_write(9, 0xAB, None, &mut a).unwrap();
        assert_eq!(out.kind, OutcomeKind::SharedExistingLine);
        assert_eq!(e.ref_count(ab), Some(2));
        assert_eq!((e.lfi_len(), e.amt_len()), (1, 2));

        let out = e.process_write(5, 0xCD, None, &mut a).unwrap();
        assert_eq!(out.kind, OutcomeKind::LineUpdated);
        assert_eq!(out.line_writes(), 1);
        assert_eq!(e.ref_count(ab), Some(1));
        assert_eq!(e.entries(0xCD).len(), 1);

        match e.process_read(9) {
            ReadOutcome::Hit { pla, memory_ops } => {
                assert_eq!(pla, ab);
                assert_eq!(memory_ops, vec![MemOp::MetaRead(MetaKey::Amt(9)), MemOp::LineRead(ab)]);
            }
            miss => panic!("expected hit, got {miss:?}"),
        }
        assert!(matches!(e.process_read(77), ReadOutcome::Miss { .. }));
        e.check_invariants().unwrap();
    }

    #[test]
    fn update_frees_sole_holder() {
        let (mut e, mut a) = engine();
        let first = e.process_write(1, 10, None, &mut a).unwrap().pla;
        let out = e.process_write(1, 20, None, &mut a).unwrap();
        assert_eq!(out.freed().collect::<Vec<_>>(), vec![first]);
        assert!(e.entries(10).is_empty());
        assert!(!a.live.contains(&first));
    }

    #[test]
    fn release_before_share() {
        let (mut e, mut a) = engine();
        let x = e.process_write(1, 10, None, &mut a).unwrap().pla;
        let y = e.process_write(2, 20, None, &mut a).unwrap().pla;
        let out = e.process_write(1, 20, None, &mut a).unwrap();
        assert_eq!(out.kind, OutcomeKind::SharedExistingLine);
        assert_eq!(out.pla, y);
        assert_eq!(out.freed().collect::<Vec<_>>(), vec![x]);
        let free_pos = out.memory_ops.iter().position(|o| *o == MemOp::FreeLine(x)).unwrap();
        let share_pos = out
            .memory_ops
            .iter()
            .position(|o| *o == MemOp::MetaWrite(MetaKey::Amt(1)))
            .unwrap();
        assert!(free_pos < share_pos);
        assert_eq!(e.ref_count(y), Some(2));
        e.check_invariants().unwrap();
    }

    #[test]
    fn collisions_get_private_lines() {
        let (mut e, mut a) = engine();
        let p1: LinePayload = Box::new([1u8; 256]);
        let p2: LinePayload = Box::new([2u8; 256]);
        let first = e.process_write(1, 7, Some(&p1), &mut a).unwrap();
        let second = e.process_write(2, 7, Some(&p2), &mut a).unwrap();
        assert_eq!(second.kind, OutcomeKind::NewLineWritten);
        assert_ne!(first.pla, second.pla);
        assert_eq!(e.entries(7).len(), 2);
        assert_eq!(e.stats().collision_copies, 1);

        // Same content as the second entry: shares it after probing both.
        let third = e.process_write(3, 7, Some(&p2), &mut a).unwrap();
        assert_eq!(third.kind, OutcomeKind::SharedExistingLine);
        assert_eq!(third.pla, second.pla);
        let compares = third
            .memory_ops
            .iter()
            .filter(|o| matches!(o, MemOp::CompareRead(_)))
            .count();
        assert_eq!(compares, 2);
        e.check_invariants().unwrap();
    }

    #[test]
    fn saturated_ref_count_spills_to_a_copy() {
        let (mut e, mut a) = engine();
        let base = e.process_write(0, 1, None, &mut a).unwrap().pla;
        for lla in 1..u32::from(MAX_REF_COUNT) {
            assert_eq!(
                e.process_write(lla, 1, None, &mut a).unwrap().kind,
                OutcomeKind::SharedExistingLine
            );
        }
        assert_eq!(e.ref_count(base), Some(MAX_REF_COUNT));
        let out = e.process_write(u32::from(MAX_REF_COUNT), 1, None, &mut a).unwrap();
        assert_eq!(out.kind, OutcomeKind::NewLineWritten);
        assert_ne!(out.pla, base);
        assert_eq!(e.stats().overflow_copies, 1);
        // A rewrite of a saturated line is still recognized as a duplicate.
        let again = e.process_write(3, 1, None, &mut a).unwrap();
        assert_eq!(again.kind, OutcomeKind::DuplicateRequestDropped);
        // The next sharer joins the copy.
        let next = e.process_write(u32::from(MAX_REF_COUNT) + 1, 1, None, &mut a).unwrap();
        assert_eq!((next.kind, next.pla), (OutcomeKind::SharedExistingLine, out.pla));
        e.check_invariants().unwrap();
    }

    #[test]
    fn eviction() {
        let (mut e, mut a) = engine();
        let solo = e.process_write(1, 100, None, &mut a).unwrap().pla;
        let shared = e.process_write(2, 200, None, &mut a).unwrap().pla;
        e.process_write(3, 200, None, &mut a).unwrap();

        assert_eq!(e.evict_lines(&[1], &mut a).unwrap(), vec![solo]);
        assert_eq!(e.lfi_len(), 1);
        assert_eq!(e.evict_lines(&[2], &mut a).unwrap(), Vec::<Pla>::new());
        assert_eq!(e.ref_count(shared), Some(1));

        assert_eq!(e.evict_lines(&[9], &mut a), Err(DedupError::NotMapped(9)));
        assert_eq!(e.evict_lines(&[3, 3], &mut a), Err(DedupError::NotMapped(3)));
        assert_eq!(e.amt_len(), 1);

        // An evicted address comes back as a new line.
        let back = e.process_write(1, 100, None, &mut a).unwrap();
        assert_eq!(back.kind, OutcomeKind::NewLineWritten);
        e.check_invariants().unwrap();
    }

    #[test]
    fn allocator_exhaustion_leaves_state_untouched() {
        let mut e = DedupEngine::new(metadata_budget(512).unwrap());
        let mut a = CountingAllocator::with_limit(1);
        e.process_write(1, 1, None, &mut a).unwrap();
        assert_eq!(e.process_write(2, 2, None, &mut a), Err(DedupError::Capacity));
        assert_eq!(e.amt_len(), 1);
        assert_eq!(e.stats().write_requests, 1);
        // Sharing needs no allocation.
        assert!(e.process_write(2, 1, None, &mut a).is_ok());
    }
}
