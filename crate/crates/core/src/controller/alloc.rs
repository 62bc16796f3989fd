use std::collections::{HashMap, HashSet};

use crate::dedup::{DedupError, LineAllocator, Lla, Pla};
use crate::memdev::{DecodedAddress, Geometry};

/// Where a physical line lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Home {
    Pcm(u64),
    Dram(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct HotPagePolicy {
    pub epoch_cycles: u64,
    pub threshold: u32,
}

/// PCM rows handed out round-robin so writes spread evenly over rows.
#[derive(Debug, Clone)]
struct PcmPool {
    geometry: Geometry,
    /// Next never-used column per global row.
    fresh: Vec<u32>,
    recycled: HashMap<u64, Vec<u32>>,
    cursor: u64,
    free: u64,
}

impl PcmPool {
    fn new(geometry: Geometry) -> Self {
        Self {
            fresh: vec![0; geometry.total_rows() as usize],
            recycled: HashMap::new(),
            cursor: 0,
            free: geometry.lines(),
            geometry,
        }
    }

    fn allocate(&mut self) -> Option<u64> {
        if self.free == 0 {
            return None;
        }
        let rows = self.geometry.total_rows();
        let lpr = self.geometry.lines_per_row;
        loop {
            let row = self.cursor;
            self.cursor = (self.cursor + 1) % rows;
            let column = if let Some(col) = self.recycled.get_mut(&row).and_then(Vec::pop) {
                col
            } else if self.fresh[row as usize] < lpr {
                self.fresh[row as usize] += 1;
                self.fresh[row as usize] - 1
            } else {
                continue;
            };
            self.free -= 1;
            let origin = self.geometry.row_origin(row);
            let addr = self.geometry.encode(&DecodedAddress { column, ..origin });
            return Some(addr.expect("row origin is in range"));
        }
    }

    fn release(&mut self, addr: u64) {
        let d = self.geometry.decode(addr).expect("released line in range");
        self.recycled.entry(self.geometry.global_row(&d)).or_default().push(d.column);
        self.free += 1;
    }
}

#[derive(Debug, Clone)]
struct DramPool {
    lines: u64,
    next: u64,
    recycled: Vec<u64>,
}

impl DramPool {
    fn allocate(&mut self) -> Option<u64> {
        if let Some(a) = self.recycled.pop() {
            return Some(a);
        }
        (self.next < self.lines).then(|| {
            self.next += 1;
            self.next - 1
        })
    }

    fn free(&self) -> u64 {
        self.lines - self.next + self.recycled.len() as u64
    }
}

/// Physical line allocator over `[PCM lines | DRAM-mapped lines]`.
///
/// Lines of pages written at least `threshold` times in the current epoch go
/// to DRAM when it has room; everything else goes to PCM.
#[derive(Debug, Clone)]
pub struct HybridAllocator {
    pcm: Option<PcmPool>,
    pcm_lines: u64,
    dram: DramPool,
    hot: Option<HotPagePolicy>,
    page_writes: HashMap<u32, (u64, u32)>,
    live: HashSet<Pla>,
    pub now: u64,
}

impl HybridAllocator {
    pub fn new(pcm: Option<Geometry>, dram_lines: u64, hot: Option<HotPagePolicy>) -> Self {
        let pcm_lines = pcm.map_or(0, |g| g.lines());
        assert!(pcm_lines + dram_lines <= 1 << 32, "physical space exceeds 32-bit addresses");
        Self {
            pcm: pcm.map(PcmPool::new),
            pcm_lines,
            dram: DramPool {
                lines: dram_lines,
                next: 0,
                recycled: Vec::new(),
            },
            hot,
            page_writes: HashMap::new(),
            live: HashSet::new(),
            now: 0,
        }
    }

    pub fn capacity_lines(&self) -> u64 {
        self.pcm_lines + self.dram.lines
    }

    pub fn free_lines(&self) -> u64 {
        self.pcm.as_ref().map_or(0, |p| p.free) + self.dram.free()
    }

    pub fn live_lines(&self) -> u64 {
        self.live.len() as u64
    }

    pub fn is_live(&self, pla: Pla) -> bool {
        self.live.contains(&pla)
    }

    pub fn home(&self, pla: Pla) -> Home {
        let p = u64::from(pla);
        if p < self.pcm_lines {
            Home::Pcm(p)
        } else {
            Home::Dram(p - self.pcm_lines)
        }
    }

    /// Counts a write to the page of `lla` toward the hot-page rule.
    pub fn note_write(&mut self, lla: Lla) {
        let Some(hot) = self.hot else { return };
        let epoch = self.now / hot.epoch_cycles;
        let e = self.page_writes.entry(lla / 16).or_insert((epoch, 0));
        if e.0 != epoch {
            *e = (epoch, 0);
        }
        e.1 += 1;
    }

    fn is_hot(&self, lla: Lla) -> bool {
        let Some(hot) = self.hot else { return false };
        let epoch = self.now / hot.epoch_cycles;
        self.page_writes
            .get(&(lla / 16))
            .is_some_and(|&(e, n)| e == epoch && n >= hot.threshold)
    }

    fn take_dram(&mut self) -> Option<Pla> {
        self.dram.allocate().map(|a| (self.pcm_lines + a) as Pla)
    }

    fn take_pcm(&mut self) -> Option<Pla> {
        self.pcm.as_mut()?.allocate().map(|a| a as Pla)
    }
}

impl LineAllocator for HybridAllocator {
    fn allocate(&mut self, lla: Lla) -> Result<Pla, DedupError> {
        let pla = if self.is_hot(lla) || self.pcm.is_none() {
            self.take_dram().or_else(|| self.take_pcm())
        } else {
            self.take_pcm().or_else(|| self.take_dram())
        }
        .ok_or(DedupError::Capacity)?;
        self.live.insert(pla);
        Ok(pla)
    }

    fn release(&mut self, pla: Pla) {
        let was_live = self.live.remove(&pla);
        debug_assert!(was_live, "double free of {pla}");
        match self.home(pla) {
            Home::Pcm(a) => self.pcm.as_mut().expect("pcm pool").release(a),
            Home::Dram(a) => self.dram.recycled.push(a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memdev::{AddressMapping, DeviceTiming};
    use crate::MIB;

    fn pcm_geometry() -> Geometry {
        Geometry::new(&DeviceTiming::table1_pcm(), 64 * MIB, AddressMapping::RowBankColumn).unwrap()
    }

    #[test]
    fn round_robin_over_rows() {
        let g = pcm_geometry();
        let mut a = HybridAllocator::new(Some(g), 0, None);
        let x = a.allocate(0).unwrap();
        let y = a.allocate(1).unwrap();
        let rx = g.global_row(&g.decode(u64::from(x)).unwrap());
        let ry = g.global_row(&g.decode(u64::from(y)).unwrap());
        assert_ne!(rx, ry);

        let mut wear = vec![0u64; g.total_rows() as usize];
        for i in 2..10_000 {
            let p = a.allocate(i).unwrap();
            wear[g.global_row(&g.decode(u64::from(p)).unwrap()) as usize] += 1;
        }
        wear[rx as usize] += 1;
        wear[ry as usize] += 1;
        let (min, max) = (wear.iter().min().unwrap(), wear.iter().max().unwrap());
        assert!(max - min <= 1);
    }

    #[test]
    fn fills_then_fails_then_reuses() {
        let mut a = HybridAllocator::new(None, 4, None);
        let got: Vec<_> = (0..4).map(|i| a.allocate(i).unwrap()).collect();
        assert_eq!(a.allocate(9), Err(DedupError::Capacity));
        a.release(got[2]);
        assert_eq!(a.allocate(9), Ok(got[2]));
        assert_eq!(a.free_lines(), 0);
    }

    #[test]
    fn hot_pages_go_to_dram() {
        let hot = HotPagePolicy { epoch_cycles: 1000, threshold: 2 };
        let mut a = HybridAllocator::new(Some(pcm_geometry()), 16, Some(hot));
        a.note_write(3);
        let cold = a.allocate(3).unwrap();
        assert!(matches!(a.home(cold), Home::Pcm(_)));
        a.note_write(4);
        let warm = a.allocate(4).unwrap();
        assert!(matches!(a.home(warm), Home::Dram(_)));
        a.now = 5000;
        a.note_write(5);
        assert!(matches!(a.home(a.clone().allocate(5).unwrap()), Home::Pcm(_)));
    }
}
