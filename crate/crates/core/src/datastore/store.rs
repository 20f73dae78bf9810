use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::filter::{Filterable, RecordFilter};
use super::ndjson::{AppendLog, SyncPolicy, SENSE_SYNC_INTERVAL};
use super::record::{validate_common, DerivedRecord, Privacy, RecordId, SenseRecord};
use super::StoreError;

pub trait StoredRecord: Clone + Serialize + DeserializeOwned + Filterable + Send + Sync {
    fn record_id(&self) -> RecordId;
}

impl StoredRecord for SenseRecord {
    fn record_id(&self) -> RecordId {
        self.record_id
    }
}

impl StoredRecord for DerivedRecord {
    fn record_id(&self) -> RecordId {
        self.record_id
    }
}

type Validator<T> = fn(&T) -> Result<(), String>;

struct Inner<T> {
    log: AppendLog,
    records: Vec<T>,
    by_id: HashMap<RecordId, usize>,
    /// (timestamp, insertion index): timestamp order, stable on ties.
    by_time: BTreeSet<(i64, usize)>,
}

/// Append-only record store backed by one NDJSON file, with in-memory id
/// and timestamp indexes rebuilt on open.
pub struct RecordStore<T> {
    inner: RwLock<Inner<T>>,
    validator: Validator<T>,
}

pub type SenseStore = RecordStore<SenseRecord>;
pub type DerivedStore = RecordStore<DerivedRecord>;

impl<T: StoredRecord> RecordStore<T> {
    pub fn open_with(
        path: &Path,
        validator: Validator<T>,
        policy: SyncPolicy,
        capacity: Option<u64>,
    ) -> Result<Self, StoreError> {
        let (log, records) = AppendLog::open::<T>(path, policy, capacity)?;
        let mut by_id = HashMap::with_capacity(records.len());
        let mut by_time = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.record_id(), i).is_some() {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate record id {}", r.record_id()),
                });
            }
            by_time.insert((r.timestamp(), i));
        }
        Ok(Self {
            inner: RwLock::new(Inner {
                log,
                records,
                by_id,
                by_time,
            }),
            validator,
        })
    }

    pub fn append(&self, record: T) -> Result<RecordId, StoreError> {
        (self.validator)(&record).map_err(StoreError::SchemaViolation)?;
        let id = record.record_id();
        let mut inner = self.inner.write().unwrap_or_else(|p| p.into_inner());
        if inner.by_id.contains_key(&id) {
            return Err(StoreError::DuplicateId(id));
        }
        inner.log.append(&record)?;
        let index = inner.records.len();
        inner.by_id.insert(id, index);
        inner.by_time.insert((record.timestamp(), index));
        inner.records.push(record);
        Ok(id)
    }

    pub fn get(&self, id: RecordId) -> Option<T> {
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        inner.by_id.get(&id).map(|&i| inner.records[i].clone())
    }

    pub fn contains(&self, id: RecordId) -> bool {
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        inner.by_id.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every record in insertion order.
    pub fn scan(&self) -> Vec<T> {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).records.clone()
    }

    /// Records satisfying every conjunct of `filter`, in timestamp order.
    pub fn query(&self, filter: &RecordFilter) -> Result<Vec<T>, StoreError> {
        filter.check()?;
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        let (lo, hi) = filter.time_range.unwrap_or((i64::MIN, i64::MAX));
        let mut out = Vec::new();
        for &(_, i) in inner.by_time.range((lo, 0)..=(hi, usize::MAX)) {
            let r = &inner.records[i];
            if filter.matches(r)? {
                out.push(r.clone());
            }
        }
        Ok(out)
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        inner.log.sync().map_err(Into::into)
    }
}

impl SenseStore {
    /// The public node's store: Public and Private records plus metadata
    /// stubs of sealed records.
    pub fn open_public(path: &Path) -> Result<Self, StoreError> {
        Self::open_with(path, validate_public, SyncPolicy::Batched(SENSE_SYNC_INTERVAL), None)
    }

    /// The private node's store: sealed records with their envelopes.
    pub fn open_sealed(path: &Path) -> Result<Self, StoreError> {
        Self::open_with(path, validate_sealed, SyncPolicy::Batched(SENSE_SYNC_INTERVAL), None)
    }
}

impl DerivedStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::open_with(
            path,
            DerivedRecord::validate,
            SyncPolicy::Batched(SENSE_SYNC_INTERVAL),
            None,
        )
    }
}

pub fn validate_public(r: &SenseRecord) -> Result<(), String> {
    if r.privacy == Privacy::Sealed {
        if !r.is_sealed_stub() {
            return Err("the public store holds only metadata stubs of sealed records".into());
        }
        return validate_common(&r.source_id, &r.record_type, r.timestamp, &r.fields);
    }
    r.validate()
}

pub fn validate_sealed(r: &SenseRecord) -> Result<(), String> {
    if r.privacy != Privacy::Sealed {
        return Err("the sealed store only accepts sealed records".into());
    }
    r.validate()
}
