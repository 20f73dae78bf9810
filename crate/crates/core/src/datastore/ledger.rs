use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use super::ndjson::{AppendLog, SyncPolicy};
use super::record::{LedgerEntry, LedgerKind};
use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConservationReport {
    pub fee: u64,
    pub distributed: u64,
    pub retained: u64,
}

impl ConservationReport {
    pub fn holds(&self) -> bool {
        self.distributed as u128 + self.retained as u128 == self.fee as u128
    }
}

struct Inner {
    log: AppendLog,
    entries: Vec<LedgerEntry>,
    by_ref: HashMap<String, Vec<usize>>,
}

/// Settlement ledger. Every append is fsynced before returning.
pub struct Ledger {
    inner: Mutex<Inner>,
}

impl Ledger {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::open_with_capacity(path, None)
    }

    pub fn open_with_capacity(path: &Path, capacity: Option<u64>) -> Result<Self, StoreError> {
        let (log, entries) = AppendLog::open::<LedgerEntry>(path, SyncPolicy::EveryAppend, capacity)?;
        let mut by_ref: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_ref.entry(e.query_ref.clone()).or_default().push(i);
        }
        Ok(Self {
            inner: Mutex::new(Inner { log, entries, by_ref }),
        })
    }

    pub fn append(&self, entry: LedgerEntry) -> Result<(), StoreError> {
        self.append_batch(vec![entry])
    }

    /// All entries land in one write and one fsync, or none do.
    pub fn append_batch(&self, entries: Vec<LedgerEntry>) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner.log.append_all(&entries)?;
        for e in entries {
            let i = inner.entries.len();
            inner.by_ref.entry(e.query_ref.clone()).or_default().push(i);
            inner.entries.push(e);
        }
        Ok(())
    }

    /// Entries for `query_ref` in append order.
    pub fn read(&self, query_ref: &str) -> Vec<LedgerEntry> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner
            .by_ref
            .get(query_ref)
            .map(|ix| ix.iter().map(|&i| inner.entries[i].clone()).collect())
            .unwrap_or_default()
    }

    pub fn has_fee(&self, query_ref: &str) -> bool {
        self.read(query_ref).iter().any(|e| e.kind == LedgerKind::FeeReceived)
    }

    pub fn all(&self) -> Vec<LedgerEntry> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).entries.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn conservation(&self, query_ref: &str) -> ConservationReport {
        conservation_of(&self.read(query_ref))
    }
}

pub fn conservation_of(entries: &[LedgerEntry]) -> ConservationReport {
    let mut report = ConservationReport {
        fee: 0,
        distributed: 0,
        retained: 0,
    };
    for e in entries {
        let slot = match e.kind {
            LedgerKind::FeeReceived => &mut report.fee,
            LedgerKind::PaymentInstruction => &mut report.distributed,
            LedgerKind::Retention => &mut report.retained,
        };
        *slot = slot.saturating_add(e.amount);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vdp::CryptoAddress;

    fn pay(q: &str, addr: &str, amount: u64) -> LedgerEntry {
        let mut e = LedgerEntry::new(LedgerKind::PaymentInstruction, q, amount, 1);
        e.counterparty_address = Some(CryptoAddress::bitcoin(addr));
        e
    }

    #[test]
    fn fee_and_instructions_conserve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.ndjson");
        let ledger = Ledger::open(&path).unwrap();
        ledger
            .append_batch(vec![
                LedgerEntry::new(LedgerKind::FeeReceived, "q1", 1000, 1),
                pay("q1", "A", 750),
                pay("q1", "B", 250),
            ])
            .unwrap();
        assert_eq!(ledger.read("q1").len(), 3);
        assert!(ledger.conservation("q1").holds());
        assert!(ledger.read("nope").is_empty());
        drop(ledger);
        let reopened = Ledger::open(&path).unwrap();
        assert_eq!(reopened.read("q1").len(), 3);
    }

    #[test]
    fn full_ledger_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = Ledger::open_with_capacity(&dir.path().join("l.ndjson"), Some(200)).unwrap();
        let batch = vec![
            LedgerEntry::new(LedgerKind::FeeReceived, "q", 10, 1),
            pay("q", "A", 10),
        ];
        assert!(matches!(ledger.append_batch(batch), Err(StoreError::StorageFull)));
        assert!(ledger.is_empty());
    }
}
