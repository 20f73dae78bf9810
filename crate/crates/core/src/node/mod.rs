//! Node orchestration: configuration, the public and private node runtimes,
//! channel wiring and provisioning.

mod config;
mod fetch;
mod outbox;
mod private;
mod public;
mod runtime;
mod state;
mod wire;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

pub use config::{ChannelConfig, ConfigError, NodeConfig, Role, Transport};
pub use fetch::{HttpFetcher, MAX_DOCUMENT_BYTES};
pub use outbox::{KeyCell, Outbox};
pub use private::PrivateNode;
pub use public::PublicNode;
pub use runtime::{bind_http, preflight, run, serve, Deployment};
pub use state::{
    effective_mode, load_or_create_keypair, read_announced_key, read_mode, write_mode, DataDirLock,
    KeyAnnouncement, ANNOUNCED_KEY_FILE, LOCK_FILE, MODE_FILE, NODE_KEY_FILE, OUTBOX_FILE,
    PROVISION_REQUEST_FILE,
};
pub use wire::{decode_forward, encode_forward, Wire};

use crate::datastore::StoreError;
use crate::sealed::SealError;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    ConfigFile { path: String, source: ConfigError },
    #[error("this operation needs a {0} node")]
    WrongRole(Role),
    #[error("address {0} is already in use")]
    PortInUse(String),
    #[error("data directory {} is locked by another process", .0.display())]
    DataDirLocked(PathBuf),
    #[error("no key announcement from the private node within {0:?}")]
    ChannelHandshakeTimeout(Duration),
    #[error("the channel is locked in diode mode; unlock it (lock --unlock) before provisioning")]
    Locked,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Seal(SealError),
}

impl NodeError {
    pub(crate) fn io(path: &Path, e: impl Display) -> NodeError {
        NodeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Process exit code: 1 usage, 2 configuration, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            NodeError::Usage(_) => 1,
            NodeError::Config(_) | NodeError::ConfigFile { .. } => 2,
            _ => 3,
        }
    }
}
