use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvictionPolicy {
    #[default]
    Lru,
    Clock,
}

/// Resident 4 KiB pages and their replacement order.
#[derive(Debug, Clone)]
pub enum PageCache {
    Lru {
        stamp: u64,
        by_page: HashMap<u32, u64>,
        by_stamp: BTreeMap<u64, u32>,
    },
    Clock {
        ring: VecDeque<u32>,
        referenced: HashMap<u32, bool>,
    },
}

impl PageCache {
    pub fn new(policy: EvictionPolicy) -> Self {
        match policy {
            EvictionPolicy::Lru => PageCache::Lru {
                stamp: 0,
                by_page: HashMap::new(),
                by_stamp: BTreeMap::new(),
            },
            EvictionPolicy::Clock => PageCache::Clock {
                ring: VecDeque::new(),
                referenced: HashMap::new(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PageCache::Lru { by_page, .. } => by_page.len(),
            PageCache::Clock { referenced, .. } => referenced.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, page: u32) -> bool {
        match self {
            PageCache::Lru { by_page, .. } => by_page.contains_key(&page),
            PageCache::Clock { referenced, .. } => referenced.contains_key(&page),
        }
    }

    /// Marks an access; inserts the page if it is not resident.
    pub fn touch(&mut self, page: u32) {
        match self {
            PageCache::Lru { stamp, by_page, by_stamp } => {
                *stamp += 1;
                if let Some(old) = by_page.insert(page, *stamp) {
                    by_stamp.remove(&old);
                }
                by_stamp.insert(*stamp, page);
            }
            PageCache::Clock { ring, referenced } => match referenced.get_mut(&page) {
                Some(bit) => *bit = true,
                None => {
                    // New pages start unreferenced behind the hand.
                    referenced.insert(page, false);
                    ring.push_back(page);
                }
            },
        }
    }

    pub fn victim(&mut self) -> Option<u32> {
        match self {
            PageCache::Lru { by_page, by_stamp, .. } => {
                let (_, page) = by_stamp.pop_first()?;
                by_page.remove(&page);
                Some(page)
            }
            PageCache::Clock { ring, referenced } => loop {
                let page = ring.pop_front()?;
                let bit = referenced.get_mut(&page).expect("ring and map agree");
                if *bit {
                    *bit = false;
                    ring.push_back(page);
                } else {
                    referenced.remove(&page);
                    return Some(page);
                }
            },
        }
    }
}
