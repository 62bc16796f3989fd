use std::collections::{HashMap, VecDeque};

use crate::dedup::Pla;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferEntry {
    pub id: u64,
    pub pla: Pla,
    pub slot: u64,
}

/// FIFO DRAM write buffer in front of PCM.
///
/// Occupancy counts entries until their drain completes. Entries whose line
/// is freed before draining are cancelled.
#[derive(Debug, Clone)]
pub struct WriteBuffer {
    capacity: u64,
    high: u64,
    low: u64,
    queue: VecDeque<BufferEntry>,
    live: HashMap<u64, Pla>,
    /// Newest live slot per line, for reads that hit the buffer.
    latest: HashMap<Pla, (u64, u32)>,
    next_id: u64,
    occupancy: u64,
    draining: bool,
    pub peak: u64,
    pub drained: u64,
    pub cancelled: u64,
    pub episodes: u64,
}

impl WriteBuffer {
    pub fn new(capacity_lines: u64, high: f64, low: f64) -> Self {
        Self {
            capacity: capacity_lines,
            high: ((capacity_lines as f64 * high).ceil() as u64).clamp(1, capacity_lines.max(1)),
            low: (capacity_lines as f64 * low).floor() as u64,
            queue: VecDeque::new(),
            live: HashMap::new(),
            latest: HashMap::new(),
            next_id: 0,
            occupancy: 0,
            draining: false,
            peak: 0,
            drained: 0,
            cancelled: 0,
            episodes: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn is_full(&self) -> bool {
        self.occupancy >= self.capacity
    }

    pub fn low_watermark(&self) -> u64 {
        self.low
    }

    /// Buffer slot holding the newest copy of `pla`, if any.
    pub fn lookup(&self, pla: Pla) -> Option<u64> {
        self.latest.get(&pla).map(|&(slot, _)| slot)
    }

    pub fn push(&mut self, pla: Pla) -> BufferEntry {
        debug_assert!(!self.is_full());
        let id = self.next_id;
        self.next_id += 1;
        let entry = BufferEntry {
            id,
            pla,
            slot: id % self.capacity,
        };
        self.queue.push_back(entry);
        self.live.insert(id, pla);
        let l = self.latest.entry(pla).or_insert((entry.slot, 0));
        *l = (entry.slot, l.1 + 1);
        self.occupancy += 1;
        self.peak = self.peak.max(self.occupancy);
        if !self.draining && self.occupancy >= self.high {
            self.draining = true;
            self.episodes += 1;
        }
        entry
    }

    fn forget(&mut self, pla: Pla) {
        if let Some(l) = self.latest.get_mut(&pla) {
            l.1 -= 1;
            if l.1 == 0 {
                self.latest.remove(&pla);
            }
        }
    }

    /// Drops every undrained entry for a freed line.
    pub fn cancel(&mut self, pla: Pla) {
        if !self.latest.contains_key(&pla) {
            return;
        }
        let mut dropped = Vec::new();
        self.queue.retain(|e| {
            let keep = e.pla != pla;
            if !keep {
                dropped.push(e.id);
            }
            keep
        });
        for id in dropped {
            self.live.remove(&id);
            self.forget(pla);
            self.occupancy -= 1;
            self.cancelled += 1;
        }
        self.update_mode();
    }

    fn update_mode(&mut self) {
        if self.draining && self.occupancy <= self.low {
            self.draining = false;
        }
    }

    /// Starts draining (used at end of trace) regardless of the high mark.
    pub fn force_drain(&mut self) {
        if !self.draining && self.occupancy > self.low {
            self.draining = true;
            self.episodes += 1;
        }
    }

    /// Next entry to drain, if draining should continue given how many
    /// drains are already in flight.
    pub fn next_drain(&mut self, in_flight: u64) -> Option<BufferEntry> {
        if !self.draining || self.occupancy.saturating_sub(in_flight) <= self.low {
            return None;
        }
        self.queue.pop_front()
    }

    pub fn is_live(&self, entry: &BufferEntry) -> bool {
        self.live.contains_key(&entry.id)
    }

    /// Completes a drain started by [`next_drain`]. Returns false if the entry
    /// was cancelled meanwhile (its line freed).
    pub fn complete(&mut self, entry: &BufferEntry) -> bool {
        if self.live.remove(&entry.id).is_none() {
            return false;
        }
        self.forget(entry.pla);
        self.occupancy -= 1;
        self.drained += 1;
        self.update_mode();
        true
    }

    /// Cancels an entry already popped for draining (line freed mid-drain).
    pub fn cancel_in_flight(&mut self, pla: Pla, in_flight: &[BufferEntry]) {
        for e in in_flight.iter().filter(|e| e.pla == pla) {
            if self.live.remove(&e.id).is_some() {
                self.forget(pla);
                self.occupancy -= 1;
                self.cancelled += 1;
            }
        }
        self.update_mode();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn watermark_episode() {
        let mut b = WriteBuffer::new(10, 0.9, 0.1);
        for p in 0..8 {
            b.push(p);
        }
        assert_eq!(b.next_drain(0), None);
        b.push(8);
        assert_eq!(b.episodes, 1);
        let mut drained = Vec::new();
        while let Some(e) = b.next_drain(0) {
            assert!(b.complete(&e));
            drained.push(e.pla);
        }
        assert_eq!(drained, (0..8).collect::<Vec<_>>());
        assert_eq!(b.occupancy(), 1);
    }

    #[test]
    fn cancellation_and_lookup() {
        let mut b = WriteBuffer::new(4, 0.9, 0.1);
        let a = b.push(7);
        b.push(7);
        assert_eq!(b.lookup(7), Some(1));
        assert_eq!(a.slot, 0);
        b.cancel(7);
        assert_eq!((b.occupancy(), b.cancelled), (0, 2));
        assert_eq!(b.lookup(7), None);
    }

    #[test]
    fn in_flight_cancellation() {
        let mut b = WriteBuffer::new(2, 0.5, 0.0);
        b.push(3);
        let e = b.next_drain(0).unwrap();
        b.cancel_in_flight(3, &[e]);
        assert!(!b.complete(&e));
        assert_eq!(b.occupancy(), 0);
    }
}
