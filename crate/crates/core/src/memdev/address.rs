use serde::{Deserialize, Serialize};

use super::timing::DeviceTiming;
use super::MemdevError;
use crate::LINE_BYTES;

/// How a channel-local line index is split into rank, bank, row and column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AddressMapping {
    /// `row | rank | bank | column` from most to least significant. A row's
    /// worth of consecutive lines stays in one bank, and consecutive rows
    /// rotate over banks.
    #[default]
    RowBankColumn,
    /// `row | rank | column | bank`: consecutive lines rotate over banks.
    BankInterleaved,
    /// `rank | bank | row | column`: each bank holds one contiguous range.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecodedAddress {
    pub channel: u32,
    pub rank: u32,
    pub bank: u32,
    pub row: u32,
    pub column: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub mapping: AddressMapping,
    pub ranks: u32,
    pub banks_per_rank: u32,
    /// Rows per bank actually backed by capacity (at most the device's rows).
    pub rows: u32,
    pub lines_per_row: u32,
}

impl Geometry {
    /// `lines_per_row = capacity / (banks x ranks x rows x 256)`, at least 1.
    /// The capacity must fill a whole number of rows in every bank.
    pub fn new(timing: &DeviceTiming, capacity_bytes: u64, mapping: AddressMapping) -> Result<Self, MemdevError> {
        if capacity_bytes == 0 || capacity_bytes % LINE_BYTES != 0 {
            return Err(MemdevError::Geometry(format!(
                "capacity {capacity_bytes} is not a positive multiple of {LINE_BYTES}"
            )));
        }
        let lines = capacity_bytes / LINE_BYTES;
        let banks = u64::from(timing.banks_per_rank) * u64::from(timing.ranks);
        let lines_per_row = (lines / (banks * u64::from(timing.num_rows))).max(1);
        let stripe = banks * lines_per_row;
        if lines % stripe != 0 {
            return Err(MemdevError::Geometry(format!(
                "{lines} lines do not fill whole rows of {lines_per_row} lines across {banks} banks"
            )));
        }
        let rows = lines / stripe;
        if rows > u64::from(timing.num_rows) || lines_per_row > u64::from(u32::MAX) {
            return Err(MemdevError::Geometry(format!("capacity {capacity_bytes} exceeds the device")));
        }
        Ok(Self {
            mapping,
            ranks: timing.ranks,
            banks_per_rank: timing.banks_per_rank,
            rows: rows as u32,
            lines_per_row: lines_per_row as u32,
        })
    }

    pub fn lines(&self) -> u64 {
        self.total_banks() * u64::from(self.rows) * u64::from(self.lines_per_row)
    }

    pub fn total_banks(&self) -> u64 {
        u64::from(self.ranks) * u64::from(self.banks_per_rank)
    }

    pub fn total_rows(&self) -> u64 {
        self.total_banks() * u64::from(self.rows)
    }

    pub fn bank_index(&self, d: &DecodedAddress) -> usize {
        (d.rank * self.banks_per_rank + d.bank) as usize
    }

    pub fn global_row(&self, d: &DecodedAddress) -> u64 {
        self.bank_index(d) as u64 * u64::from(self.rows) + u64::from(d.row)
    }

    /// The (rank, bank, row) identified by a global row number.
    pub fn row_origin(&self, global_row: u64) -> DecodedAddress {
        let bank_index = (global_row / u64::from(self.rows)) as u32;
        DecodedAddress {
            channel: 0,
            rank: bank_index / self.banks_per_rank,
            bank: bank_index % self.banks_per_rank,
            row: (global_row % u64::from(self.rows)) as u32,
            column: 0,
        }
    }

    pub fn decode(&self, addr: u64) -> Option<DecodedAddress> {
        if addr >= self.lines() {
            return None;
        }
        let lpr = u64::from(self.lines_per_row);
        let banks = u64::from(self.banks_per_rank);
        let ranks = u64::from(self.ranks);
        let rows = u64::from(self.rows);
        let (rank, bank, row, column) = match self.mapping {
            AddressMapping::RowBankColumn => {
                let column = addr % lpr;
                let rest = addr / lpr;
                (rest / banks % ranks, rest % banks, rest / (banks * ranks), column)
            }
            AddressMapping::BankInterleaved => {
                let bank = addr % banks;
                let rest = addr / banks;
                let column = rest % lpr;
                let rest = rest / lpr;
                (rest % ranks, bank, rest / ranks, column)
            }
            AddressMapping::Linear => {
                let column = addr % lpr;
                let rest = addr / lpr;
                let row = rest % rows;
                let rest = rest / rows;
                (rest / banks, rest % banks, row, column)
            }
        };
        Some(DecodedAddress {
            channel: 0,
            rank: rank as u32,
            bank: bank as u32,
            row: row as u32,
            column: column as u32,
        })
    }

    pub fn encode(&self, d: &DecodedAddress) -> Option<u64> {
        if d.rank >= self.ranks || d.bank >= self.banks_per_rank || d.row >= self.rows || d.column >= self.lines_per_row {
            return None;
        }
        let lpr = u64::from(self.lines_per_row);
        let banks = u64::from(self.banks_per_rank);
        let ranks = u64::from(self.ranks);
        let rows = u64::from(self.rows);
        let (rank, bank, row, column) = (u64::from(d.rank), u64::from(d.bank), u64::from(d.row), u64::from(d.column));
        Some(match self.mapping {
            AddressMapping::RowBankColumn => ((row * ranks + rank) * banks + bank) * lpr + column,
            AddressMapping::BankInterleaved => ((row * ranks + rank) * lpr + column) * banks + bank,
            AddressMapping::Linear => ((rank * banks + bank) * rows + row) * lpr + column,
        })
    }
}
