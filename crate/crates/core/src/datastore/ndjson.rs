//! Newline-delimited JSON append log.

use std::fs::{File, OpenOptions};
use std::io::{self, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, Weak};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::StoreError;
use crate::canonical::to_canonical;

/// When appended bytes are forced to stable storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPolicy {
    /// `fsync` before every append returns.
    EveryAppend,
    /// A background thread syncs pending writes at this interval.
    Batched(Duration),
}

pub const SENSE_SYNC_INTERVAL: Duration = Duration::from_millis(100);

struct Shared {
    file: File,
    dirty: bool,
}

pub struct AppendLog {
    path: PathBuf,
    shared: Arc<Mutex<Shared>>,
    policy: SyncPolicy,
    len: u64,
    capacity: Option<u64>,
}

impl AppendLog {
    /// Open (creating if absent) and replay every complete line.
    ///
    /// A final line without a trailing newline, or one that does not parse,
    /// is treated as a torn write and truncated away. A bad line anywhere
    /// else is corruption.
    pub fn open<T: DeserializeOwned>(
        path: &Path,
        policy: SyncPolicy,
        capacity: Option<u64>,
    ) -> Result<(AppendLog, Vec<T>), StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;

        let mut items = Vec::new();
        let mut good_len = 0usize;
        let mut line_no = 0usize;
        let mut start = 0usize;
        while start < raw.len() {
            line_no += 1;
            let Some(nl) = raw[start..].iter().position(|&b| b == b'\n') else {
                break;
            };
            let line = &raw[start..start + nl];
            let end = start + nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                good_len = end;
                start = end;
                continue;
            }
            match serde_json::from_slice::<T>(line) {
                Ok(item) => {
                    items.push(item);
                    good_len = end;
                }
                Err(e) if end == raw.len() => {
                    log::warn!("{}: dropping unparsable final line {line_no}: {e}", path.display());
                    break;
                }
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: e.to_string(),
                    })
                }
            }
            start = end;
        }
        if good_len < raw.len() {
            log::warn!(
                "{}: truncating {} bytes of torn tail",
                path.display(),
                raw.len() - good_len
            );
            file.set_len(good_len as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;

        let shared = Arc::new(Mutex::new(Shared { file, dirty: false }));
        if let SyncPolicy::Batched(interval) = policy {
            spawn_syncer(Arc::downgrade(&shared), interval);
        }
        Ok((
            AppendLog {
                path: path.to_path_buf(),
                shared,
                policy,
                len: good_len as u64,
                capacity,
            },
            items,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len_bytes(&self) -> u64 {
        self.len
    }

    /// Append items as one write; either all lines land or the call fails.
    pub fn append_all<T: Serialize>(&mut self, items: &[T]) -> Result<(), StoreError> {
        let mut buf = String::new();
        for item in items {
            let line = to_canonical(item).map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
            buf.push_str(&line);
            buf.push('\n');
        }
        let bytes = buf.as_bytes();
        if let Some(cap) = self.capacity {
            if self.len + bytes.len() as u64 > cap {
                return Err(StoreError::StorageFull);
            }
        }
        let mut shared = self.shared.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = shared.file.write_all(bytes).and_then(|_| shared.file.flush()) {
            // Roll back a partial write so the file stays line-aligned.
            let _ = shared.file.set_len(self.len);
            return Err(e.into());
        }
        self.len += bytes.len() as u64;
        match self.policy {
            SyncPolicy::EveryAppend => shared.file.sync_data()?,
            SyncPolicy::Batched(_) => shared.dirty = true,
        }
        Ok(())
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<(), StoreError> {
        self.append_all(std::slice::from_ref(item))
    }

    pub fn sync(&self) -> io::Result<()> {
        let mut shared = self.shared.lock().unwrap_or_else(|p| p.into_inner());
        shared.file.sync_data()?;
        shared.dirty = false;
        Ok(())
    }
}

impl Drop for AppendLog {
    fn drop(&mut self) {
        let _ = self.sync();
    }
}

fn spawn_syncer(shared: Weak<Mutex<Shared>>, interval: Duration) {
    thread::Builder::new()
        .name("ndjson-sync".into())
        .spawn(move || loop {
            thread::sleep(interval);
            let Some(shared) = shared.upgrade() else { return };
            let mut guard = shared.lock().unwrap_or_else(|p| p.into_inner());
            if guard.dirty {
                if let Err(e) = guard.file.sync_data() {
                    log::error!("background sync failed: {e}");
                } else {
                    guard.dirty = false;
                }
            }
        })
        .expect("spawn sync thread");
}

pub(super) fn map_io(e: io::Error) -> StoreError {
    if e.kind() == ErrorKind::StorageFull {
        StoreError::StorageFull
    } else {
        StoreError::Io(e.to_string())
    }
}
