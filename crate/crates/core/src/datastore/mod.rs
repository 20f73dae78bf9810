//! Append-only persistence: sense records, derived features and the
//! settlement ledger, one NDJSON file each.

mod filter;
mod ledger;
mod ndjson;
mod record;
mod store;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use filter::{Comparator, FieldPredicate, Filterable, RecordFilter};
pub use ledger::{conservation_of, ConservationReport, Ledger};
pub use ndjson::{AppendLog, SyncPolicy, SENSE_SYNC_INTERVAL};
pub use record::{
    now_millis, DerivedRecord, FieldValue, LedgerEntry, LedgerKind, NewRecord, Privacy, RecordId,
    SenseRecord, SourceVdp, EXPORT_WHITELIST,
};
pub use store::{validate_public, validate_sealed, DerivedStore, RecordStore, SenseStore, StoredRecord};

pub const PUBLIC_SENSE_FILE: &str = "sense.pub.ndjson";
pub const SEALED_SENSE_FILE: &str = "sense.priv.ndjson";
pub const DERIVED_FILE: &str = "derived.ndjson";
pub const LEDGER_FILE: &str = "ledger.ndjson";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate record id {0}")]
    DuplicateId(RecordId),
    #[error("storage full")]
    StorageFull,
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("bad predicate: {0}")]
    BadPredicate(String),
    #[error("{}:{line}: corrupt store line: {message}", path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        ndjson::map_io(e)
    }
}

pub fn store_path(data_dir: &Path, file: &str) -> PathBuf {
    data_dir.join(file)
}
