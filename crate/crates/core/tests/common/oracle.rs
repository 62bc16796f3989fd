//! Reference model of line deduplication, written without looking at the
//! engine's data structures: every physical line is a record holding its
//! content and the set of logical addresses that point at it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use caram::dedup::{DedupEngine, MAX_REF_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Content identity: fingerprint plus an id for the bytes behind it. Two
/// writes are duplicates iff both parts agree.
pub type Content = (u32, u32);

#[derive(Debug, Clone)]
struct Line {
    pla: u32,
    content: Content,
    holders: BTreeSet<u32>,
}

#[derive(Debug, Default)]
pub struct Oracle {
    lines: Vec<Line>,
    next_pla: u32,
    pub device_writes: u64,
    pub freed: u64,
}

impl Oracle {
    fn line_of(&self, lla: u32) -> Option<usize> {
        self.lines.iter().position(|l| l.holders.contains(&lla))
    }

    fn detach(&mut self, idx: usize, lla: u32) {
        self.lines[idx].holders.remove(&lla);
        if self.lines[idx].holders.is_empty() {
            self.lines.remove(idx);
            self.freed += 1;
        }
    }

    pub fn write(&mut self, lla: u32, content: Content) {
        let current = self.line_of(lla);
        if let Some(i) = current {
            if self.lines[i].content == content {
                return;
            }
        }
        // Oldest line with this content that can take one more reference.
        let target = self
            .lines
            .iter()
            .find(|l| l.content == content && l.holders.len() < usize::from(MAX_REF_COUNT))
            .map(|l| l.pla);
        if let Some(i) = current {
            self.detach(i, lla);
        }
        match target {
            Some(pla) => {
                let line = self.lines.iter_mut().find(|l| l.pla == pla).unwrap();
                line.holders.insert(lla);
            }
            None => {
                self.lines.push(Line {
                    pla: self.next_pla,
                    content,
                    holders: BTreeSet::from([lla]),
                });
                self.next_pla += 1;
                self.device_writes += 1;
            }
        }
    }

    pub fn read(&self, lla: u32) -> Option<u32> {
        self.line_of(lla).map(|i| self.lines[i].pla)
    }

    pub fn evict(&mut self, lla: u32) {
        let i = self.line_of(lla).expect("evicting unmapped address");
        self.detach(i, lla);
    }

    pub fn amt(&self) -> BTreeMap<u32, u32> {
        self.lines
            .iter()
            .flat_map(|l| l.holders.iter().map(move |&a| (a, l.pla)))
            .collect()
    }

    /// `(pla, fingerprint, reference count)` for each live line.
    pub fn lfi(&self) -> BTreeSet<(u32, u32, u64)> {
        self.lines
            .iter()
            .map(|l| (l.pla, l.content.0, l.holders.len() as u64))
            .collect()
    }

    pub fn live_lines(&self) -> usize {
        self.lines.len()
    }
}

/// Faster variant of the same model for long traces: content -> lines index.
/// Semantics are identical to [`Oracle`]; both are checked against each other
/// on short traces.
#[derive(Debug, Default)]
pub struct IndexedOracle {
    by_content: HashMap<Content, Vec<(u32, BTreeSet<u32>)>>,
    where_is: HashMap<u32, (Content, u32)>,
    next_pla: u32,
    pub device_writes: u64,
    pub freed: u64,
}

impl IndexedOracle {
    fn detach(&mut self, lla: u32) {
        let (content, pla) = self.where_is.remove(&lla).unwrap();
        let lines = self.by_content.get_mut(&content).unwrap();
        let i = lines.iter().position(|(p, _)| *p == pla).unwrap();
        lines[i].1.remove(&lla);
        if lines[i].1.is_empty() {
            lines.remove(i);
            self.freed += 1;
        }
    }

    pub fn write(&mut self, lla: u32, content: Content) {
        let current = self.where_is.get(&lla).copied();
        if current.is_some_and(|(c, _)| c == content) {
            return;
        }
        let target = self.by_content.get(&content).and_then(|lines| {
            lines
                .iter()
                .find(|(_, h)| h.len() < usize::from(MAX_REF_COUNT))
                .map(|(p, _)| *p)
        });
        if current.is_some() {
            self.detach(lla);
        }
        let lines = self.by_content.entry(content).or_default();
        let pla = match target {
            Some(pla) => {
                lines.iter_mut().find(|(p, _)| *p == pla).unwrap().1.insert(lla);
                pla
            }
            None => {
                let pla = self.next_pla;
                self.next_pla += 1;
                self.device_writes += 1;
                lines.push((pla, BTreeSet::from([lla])));
                pla
            }
        };
        self.where_is.insert(lla, (content, pla));
    }

    pub fn read(&self, lla: u32) -> Option<u32> {
        self.where_is.get(&lla).map(|(_, p)| *p)
    }

    pub fn evict(&mut self, lla: u32) {
        self.detach(lla);
    }

    pub fn amt(&self) -> BTreeMap<u32, u32> {
        self.where_is.iter().map(|(&a, &(_, p))| (a, p)).collect()
    }

    pub fn lfi(&self) -> BTreeSet<(u32, u32, u64)> {
        self.by_content
            .iter()
            .flat_map(|(c, lines)| lines.iter().map(move |(p, h)| (*p, c.0, h.len() as u64)))
            .collect()
    }

    pub fn mapped(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.where_is.keys().copied().collect();
        v.sort_unstable();
        v
    }
}

pub fn engine_amt(e: &DedupEngine) -> BTreeMap<u32, u32> {
    e.amt_sorted().into_iter().collect()
}

pub fn engine_lfi(e: &DedupEngine) -> BTreeSet<(u32, u32, u64)> {
    e.lfi_sorted()
        .into_iter()
        .map(|(lfp, en)| (en.pla, lfp, u64::from(en.ref_count)))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub enum Step {
    Write { lla: u32, content: Content },
    Read { lla: u32 },
    /// Evict the `k`-th currently mapped address (modulo the mapped count).
    Evict { k: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Mix {
    pub ops: usize,
    pub addresses: u32,
    pub contents: u32,
    /// Fingerprint space; smaller than `contents` forces collisions.
    pub fingerprints: u32,
    pub read_pct: u32,
    pub evict_pct: u32,
}

pub fn random_mix(rng: &mut ChaCha8Rng, max_ops: usize) -> Mix {
    let ops = rng.gen_range(1..=max_ops);
    let addresses = rng.gen_range(1..=(ops as u32).max(2));
    let contents = rng.gen_range(1..=(ops as u32).max(2));
    let fingerprints = if rng.gen_bool(0.3) {
        rng.gen_range(1..=contents)
    } else {
        u32::MAX
    };
    Mix {
        ops,
        addresses,
        contents,
        fingerprints,
        read_pct: rng.gen_range(0..30),
        evict_pct: rng.gen_range(0..15),
    }
}

pub fn steps(mix: &Mix, seed: u64) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..mix.ops)
        .map(|_| {
            let roll = rng.gen_range(0..100);
            if roll < mix.read_pct {
                Step::Read { lla: rng.gen_range(0..mix.addresses) }
            } else if roll < mix.read_pct + mix.evict_pct {
                Step::Evict { k: rng.gen() }
            } else {
                let id = rng.gen_range(0..mix.contents);
                let fp = if mix.fingerprints == u32::MAX {
                    id.wrapping_mul(0x9e37_79b9) ^ 0x5bd1_e995
                } else {
                    id % mix.fingerprints
                };
                Step::Write { lla: rng.gen_range(0..mix.addresses), content: (fp, id) }
            }
        })
        .collect()
}

/// 256 bytes that differ for different content ids.
pub fn body(id: u32) -> Box<[u8; 256]> {
    let mut b = [0u8; 256];
    for (i, chunk) in b.chunks_mut(4).enumerate() {
        chunk.copy_from_slice(&(id ^ (i as u32).wrapping_mul(0x0101_0101)).to_le_bytes());
    }
    Box::new(b)
}
