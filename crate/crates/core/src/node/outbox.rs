//! Durable queue of sealed records awaiting delivery to the private node.
//! Holds envelopes (ciphertext) only; never plaintext.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::state::{write_announced_key, OUTBOX_FILE};
use super::wire::{encode_forward, Wire};
use crate::callosum::MsgType;
use crate::datastore::{AppendLog, RecordId, SenseRecord, StoreError, SyncPolicy};
use crate::gateway::{Delivery, SealedSink};
use crate::sealed::PublicKey;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OutboxEvent {
    Enqueued(Box<SenseRecord>),
    Sent(RecordId),
}

/// The private node's announced public key, shared by the outbox, the
/// gateway and provisioning.
#[derive(Default)]
pub struct KeyCell {
    key: Mutex<Option<PublicKey>>,
    changed: Condvar,
    /// Number of announcements received, including repeats.
    announcements: AtomicU64,
}

impl KeyCell {
    pub fn new(initial: Option<PublicKey>) -> Self {
        Self {
            key: Mutex::new(initial),
            changed: Condvar::new(),
            announcements: AtomicU64::new(0),
        }
    }

    pub fn get(&self) -> Option<PublicKey> {
        *self.key.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn set(&self, key: PublicKey) {
        *self.key.lock().unwrap_or_else(|p| p.into_inner()) = Some(key);
        self.changed.notify_all();
    }

    /// Wait for an announcement beyond the first `after` ones.
    pub fn wait_announcement(&self, after: u64, timeout: Duration) -> Option<PublicKey> {
        let deadline = Instant::now() + timeout;
        let mut guard = self.key.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            if self.announcements() > after {
                if let Some(k) = *guard {
                    return Some(k);
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            guard = self
                .changed
                .wait_timeout(guard, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    pub fn announcements(&self) -> u64 {
        self.announcements.load(Ordering::SeqCst)
    }

    /// Record an announcement received from the private node.
    pub fn accept(&self, data_dir: &Path, key: PublicKey) {
        self.announcements.fetch_add(1, Ordering::SeqCst);
        match self.get() {
            Some(existing) if existing == key => {}
            existing => {
                if let Some(old) = existing {
                    log::warn!("private node key changed from {} to {}", old.key_id(), key.key_id());
                }
                if let Err(e) = write_announced_key(data_dir, &key) {
                    log::error!("cannot persist announced key: {e}");
                }
                log::info!("private node announced key {}", key.key_id());
                self.set(key);
            }
        }
        self.changed.notify_all();
    }
}

struct Inner {
    log: AppendLog,
    pending: VecDeque<SenseRecord>,
}

pub struct Outbox {
    wire: Arc<Wire>,
    key: Arc<KeyCell>,
    inner: Mutex<Inner>,
    last_error: RwLock<Option<String>>,
}

impl Outbox {
    pub fn open(data_dir: &Path, wire: Arc<Wire>, key: Arc<KeyCell>) -> Result<Outbox, StoreError> {
        let (log, events) = AppendLog::open::<OutboxEvent>(&data_dir.join(OUTBOX_FILE), SyncPolicy::EveryAppend, None)?;
        let mut pending: VecDeque<SenseRecord> = VecDeque::new();
        for event in events {
            match event {
                OutboxEvent::Enqueued(r) => pending.push_back(*r),
                OutboxEvent::Sent(id) => pending.retain(|r| r.record_id != id),
            }
        }
        if !pending.is_empty() {
            log::info!("{} sealed records waiting for delivery", pending.len());
        }
        Ok(Outbox {
            wire,
            key,
            inner: Mutex::new(Inner { log, pending }),
            last_error: RwLock::new(None),
        })
    }

    pub fn pending(&self) -> usize {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).pending.len()
    }

    /// Try to send everything queued, oldest first. Returns the reason
    /// delivery stopped, if it did.
    pub fn flush(&self) -> Result<Option<String>, StoreError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        self.flush_locked(&mut inner)
    }

    fn flush_locked(&self, inner: &mut Inner) -> Result<Option<String>, StoreError> {
        while let Some(record) = inner.pending.front() {
            if self.key.get().is_none() {
                return Ok(Some(self.note("private node key not announced yet; run provisioning")));
            }
            let Some(payload) = encode_forward(record) else {
                log::error!("dropping queued record {} without envelope", record.record_id);
                let id = record.record_id;
                inner.log.append(&OutboxEvent::Sent(id))?;
                inner.pending.pop_front();
                continue;
            };
            if let Err(e) = self.wire.send(MsgType::SenseForward, payload) {
                return Ok(Some(self.note(&e.to_string())));
            }
            let id = record.record_id;
            inner.log.append(&OutboxEvent::Sent(id))?;
            inner.pending.pop_front();
        }
        *self.last_error.write().unwrap_or_else(|p| p.into_inner()) = None;
        Ok(None)
    }

    fn note(&self, reason: &str) -> String {
        let mut last = self.last_error.write().unwrap_or_else(|p| p.into_inner());
        if last.as_deref() != Some(reason) {
            log::warn!("sealed forwarding deferred: {reason}");
            *last = Some(reason.to_string());
        }
        reason.to_string()
    }
}

impl SealedSink for Outbox {
    fn submit(&self, record: SenseRecord) -> Result<Delivery, StoreError> {
        let id = record.record_id;
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner.log.append(&OutboxEvent::Enqueued(Box::new(record.clone())))?;
        inner.pending.push_back(record);
        let stopped = self.flush_locked(&mut inner)?;
        let still_queued = inner.pending.iter().any(|r| r.record_id == id);
        Ok(match (still_queued, stopped) {
            (false, _) => Delivery::Forwarded,
            (true, reason) => Delivery::Deferred(reason.unwrap_or_else(|| "queued".into())),
        })
    }

    fn announced_key(&self) -> Option<PublicKey> {
        self.key.get()
    }
}
