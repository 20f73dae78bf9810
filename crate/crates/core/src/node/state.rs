//! Small pieces of node state kept as files in the data directory.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NodeError;
use crate::callosum::ChannelMode;
use crate::sealed::{generate_keypair_os, KeyPair, PublicKey};

pub const LOCK_FILE: &str = "lifeserver.lock";
pub const MODE_FILE: &str = "channel.mode";
pub const PROVISION_REQUEST_FILE: &str = "provision.request";
pub const ANNOUNCED_KEY_FILE: &str = "announced_key.json";
pub const NODE_KEY_FILE: &str = "node.key";
pub const OUTBOX_FILE: &str = "outbox.ndjson";

/// Exclusive ownership of a data directory for the life of the node.
#[derive(Debug)]
pub struct DataDirLock {
    _file: File,
    path: PathBuf,
}

impl DataDirLock {
    pub fn acquire(data_dir: &Path) -> Result<DataDirLock, NodeError> {
        fs::create_dir_all(data_dir).map_err(|e| NodeError::io(data_dir, e))?;
        let path = data_dir.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| NodeError::io(&path, e))?;
        match file.try_lock() {
            Ok(()) => Ok(DataDirLock { _file: file, path }),
            Err(TryLockError::WouldBlock) => Err(NodeError::DataDirLocked(data_dir.to_path_buf())),
            Err(TryLockError::Error(e)) => Err(NodeError::io(&path, e)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), NodeError> {
    let tmp = path.with_extension("tmp");
    let result = (|| -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Some(dir) = path.parent() {
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        Ok(())
    })();
    result.map_err(|e| NodeError::io(path, e))
}

/// The operator-set channel mode, if `lock` has ever been run.
pub fn read_mode(data_dir: &Path) -> Option<ChannelMode> {
    let text = fs::read_to_string(data_dir.join(MODE_FILE)).ok()?;
    ChannelMode::parse(text.trim())
}

pub fn write_mode(data_dir: &Path, mode: ChannelMode) -> Result<(), NodeError> {
    fs::create_dir_all(data_dir).map_err(|e| NodeError::io(data_dir, e))?;
    write_atomic(&data_dir.join(MODE_FILE), format!("{}\n", mode.as_str()).as_bytes())
}

/// Mode at startup: the recorded operator decision wins over the config's
/// first-boot mode.
pub fn effective_mode(data_dir: &Path, configured: ChannelMode) -> ChannelMode {
    match read_mode(data_dir) {
        Some(recorded) => {
            if recorded != configured {
                log::info!(
                    "channel mode {} recorded in {} overrides configured {}",
                    recorded.as_str(),
                    data_dir.display(),
                    configured.as_str()
                );
            }
            recorded
        }
        None => configured,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyAnnouncement {
    pub key_id: String,
    pub public_key: PublicKey,
}

impl KeyAnnouncement {
    pub fn of(key: &PublicKey) -> Self {
        Self {
            key_id: key.key_id().to_hex(),
            public_key: *key,
        }
    }

    /// The key, if `key_id` really is its derivation.
    pub fn verified(&self) -> Option<PublicKey> {
        (self.public_key.key_id().to_hex() == self.key_id).then_some(self.public_key)
    }
}

pub fn read_announced_key(data_dir: &Path) -> Option<PublicKey> {
    let bytes = fs::read(data_dir.join(ANNOUNCED_KEY_FILE)).ok()?;
    serde_json::from_slice::<KeyAnnouncement>(&bytes).ok()?.verified()
}

pub fn write_announced_key(data_dir: &Path, key: &PublicKey) -> Result<(), NodeError> {
    let body = crate::canonical::to_canonical(&KeyAnnouncement::of(key)).expect("serializable");
    write_atomic(&data_dir.join(ANNOUNCED_KEY_FILE), body.as_bytes())
}

/// Load the private node's keypair, generating it on first boot.
pub fn load_or_create_keypair(data_dir: &Path) -> Result<KeyPair, NodeError> {
    let path = data_dir.join(NODE_KEY_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => {
            let bytes = hex::decode(text.trim()).map_err(|e| NodeError::io(&path, e))?;
            let secret: [u8; 32] = bytes
                .try_into()
                .map_err(|_| NodeError::io(&path, "key file must hold 32 bytes"))?;
            Ok(KeyPair::from_secret_bytes(secret))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let keypair = generate_keypair_os().map_err(NodeError::Seal)?;
            fs::create_dir_all(data_dir).map_err(|e| NodeError::io(data_dir, e))?;
            let tmp = path.with_extension("tmp");
            {
                let mut options = OpenOptions::new();
                options.write(true).create(true).truncate(true);
                #[cfg(unix)]
                {
                    use std::os::unix::fs::OpenOptionsExt;
                    options.mode(0o600);
                }
                let mut f = options.open(&tmp).map_err(|e| NodeError::io(&tmp, e))?;
                f.write_all(hex::encode(keypair.secret_bytes()).as_bytes())
                    .and_then(|_| f.sync_all())
                    .map_err(|e| NodeError::io(&tmp, e))?;
            }
            fs::rename(&tmp, &path).map_err(|e| NodeError::io(&path, e))?;
            log::info!("generated node key {}", keypair.key_id());
            Ok(keypair)
        }
        Err(e) => Err(NodeError::io(&path, e)),
    }
}
