use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::config::{NodeConfig, Role};
use super::public::follow_mode_file;
use super::state::{self, DataDirLock, KeyAnnouncement};
use super::wire::{decode_forward, Wire};
use super::NodeError;
use crate::callosum::{ChannelMode, HandlerError, Link, MsgType, Router};
use crate::datastore::{
    now_millis, DerivedRecord, DerivedStore, SenseStore, StoreError, DERIVED_FILE, SEALED_SENSE_FILE,
};
use crate::mind::extract_features;
use crate::sealed::{KeyPair, SealError};

/// Records per export packet, well below the payload limit.
const EXPORT_BATCH: usize = 1000;

/// The isolated node: owns the key, the sealed store and feature extraction.
pub struct PrivateNode {
    config: NodeConfig,
    _lock: DataDirLock,
    core: Arc<Core>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

struct Core {
    wire: Arc<Wire>,
    keypair: KeyPair,
    sealed: SenseStore,
    derived: DerivedStore,
    last_heartbeat: AtomicI64,
}

impl Core {
    fn duplex(&self) -> bool {
        self.wire.link().mode() == ChannelMode::Duplex
    }

    /// Store a forwarded sealed record and extract its features. Repeated
    /// deliveries of the same record are harmless.
    fn accept_forward(&self, payload: &[u8]) -> Result<(), HandlerError> {
        let record = decode_forward(payload)?;
        let envelope = record.sealed_payload.clone().ok_or("forward without envelope")?;
        if envelope.key_id != self.keypair.key_id() {
            return Err(Box::new(SealError::UnknownKeyId(envelope.key_id)));
        }
        match self.sealed.append(record.clone()) {
            Ok(_) | Err(StoreError::DuplicateId(_)) => {}
            Err(e) => return Err(e.into()),
        }
        let features = extract_features(&self.keypair, &envelope, &record, now_millis())?;
        for f in &features {
            match self.derived.append(f.clone()) {
                Ok(_) | Err(StoreError::DuplicateId(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if self.duplex() {
            self.export(&features);
        }
        Ok(())
    }

    fn announce(&self) {
        if !self.duplex() {
            return;
        }
        let body = crate::canonical::to_canonical(&KeyAnnouncement::of(self.keypair.public_key()))
            .expect("serializable");
        if let Err(e) = self.wire.send(MsgType::KeyAnnounce, body.into_bytes()) {
            log::debug!("key announcement not sent: {e}");
        }
    }

    /// Send whitelisted features to the public node. Only ever attempted in
    /// duplex mode.
    fn export(&self, records: &[DerivedRecord]) {
        if !self.duplex() {
            return;
        }
        let exportable: Vec<&DerivedRecord> = records.iter().filter(|r| r.exportable()).collect();
        for batch in exportable.chunks(EXPORT_BATCH) {
            let body = match serde_json::to_vec(batch) {
                Ok(b) => b,
                Err(e) => {
                    log::error!("export serialization failed: {e}");
                    return;
                }
            };
            if let Err(e) = self.wire.send(MsgType::QueryResponse, body) {
                log::debug!("derived export not sent: {e}");
                return;
            }
        }
    }

    fn export_all(&self) {
        self.export(&self.derived.scan());
    }
}

impl PrivateNode {
    pub fn start(config: NodeConfig, link: Arc<dyn Link>) -> Result<PrivateNode, NodeError> {
        if config.role != Role::Private {
            return Err(NodeError::WrongRole(config.role));
        }
        let dir = config.data_dir.clone();
        let lock = DataDirLock::acquire(&dir)?;
        link.set_mode(state::effective_mode(&dir, config.channel.mode));
        let keypair = state::load_or_create_keypair(&dir)?;
        let core = Arc::new(Core {
            wire: Wire::new(link, config.channel.fec),
            keypair,
            sealed: SenseStore::open_sealed(&dir.join(SEALED_SENSE_FILE))?,
            derived: DerivedStore::open(&dir.join(DERIVED_FILE))?,
            last_heartbeat: AtomicI64::new(0),
        });

        let mut router = Router::new();
        {
            let core = core.clone();
            router.register(MsgType::SenseForward, move |p| core.accept_forward(&p.payload));
        }
        {
            let core = core.clone();
            router.register(MsgType::QueryRequest, move |_| {
                core.announce();
                core.export_all();
                Ok(())
            });
        }
        {
            let core = core.clone();
            router.register(MsgType::Heartbeat, move |_| {
                core.last_heartbeat.store(now_millis(), Ordering::Relaxed);
                Ok(())
            });
        }
        let stop = Arc::new(AtomicBool::new(false));
        let mut threads = vec![core.wire.spawn_receiver(router, stop.clone(), "private-rx")];
        threads.push(spawn_maintenance(dir, core.clone(), stop.clone()));
        core.announce();
        core.export_all();
        Ok(PrivateNode {
            config,
            _lock: lock,
            core,
            stop,
            threads,
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn link(&self) -> &Arc<dyn Link> {
        self.core.wire.link()
    }

    pub fn keypair(&self) -> &KeyPair {
        &self.core.keypair
    }

    pub fn sealed_store(&self) -> &SenseStore {
        &self.core.sealed
    }

    pub fn derived_store(&self) -> &DerivedStore {
        &self.core.derived
    }

    pub fn frame_errors(&self) -> u64 {
        self.core.wire.frame_errors()
    }

    /// Milliseconds timestamp of the last heartbeat from the public node.
    pub fn last_heartbeat(&self) -> i64 {
        self.core.last_heartbeat.load(Ordering::Relaxed)
    }

    pub fn set_mode(&self, mode: ChannelMode) -> Result<(), NodeError> {
        state::write_mode(&self.config.data_dir, mode)?;
        self.link().set_mode(mode);
        if mode == ChannelMode::Duplex {
            self.core.announce();
            self.core.export_all();
        }
        Ok(())
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let _ = self.core.sealed.sync();
        let _ = self.core.derived.sync();
    }
}

impl Drop for PrivateNode {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn spawn_maintenance(dir: PathBuf, core: Arc<Core>, stop: Arc<AtomicBool>) -> JoinHandle<()> {
    thread::Builder::new()
        .name("private-maint".into())
        .spawn(move || {
            let mut mode_file = state::read_mode(&dir);
            let mut previous = core.wire.link().mode();
            while !stop.load(Ordering::Relaxed) {
                thread::sleep(Duration::from_millis(100));
                follow_mode_file(&dir, core.wire.link().as_ref(), &mut mode_file);
                let now = core.wire.link().mode();
                if previous == ChannelMode::Diode && now == ChannelMode::Duplex {
                    core.announce();
                    core.export_all();
                }
                previous = now;
            }
        })
        .expect("spawn maintenance thread")
}
