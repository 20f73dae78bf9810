use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::config::{NodeConfig, Role};
use super::outbox::{KeyCell, Outbox};
use super::state::{self, DataDirLock, KeyAnnouncement, PROVISION_REQUEST_FILE};
use super::wire::Wire;
use super::NodeError;
use crate::callosum::{ChannelMode, HandlerError, Link, MsgType, Router};
use crate::datastore::{
    now_millis, DerivedRecord, DerivedStore, Ledger, SenseStore, StoreError, DERIVED_FILE, LEDGER_FILE,
    PUBLIC_SENSE_FILE,
};
use crate::gateway::{Gateway, Pairing};
use crate::mind::MindEngine;
use crate::sealed::PublicKey;
use crate::vdp::VdpFetcher;

const TICK: Duration = Duration::from_millis(100);
const HEARTBEAT_EVERY: Duration = Duration::from_secs(1);

/// The Internet-facing node: HTTP APIs, the public store and ledger, and the
/// sending end of the channel.
pub struct PublicNode {
    config: NodeConfig,
    _lock: DataDirLock,
    wire: Arc<Wire>,
    key: Arc<KeyCell>,
    outbox: Arc<Outbox>,
    sense: Arc<SenseStore>,
    derived: Arc<DerivedStore>,
    ledger: Arc<Ledger>,
    gateway: Arc<Gateway>,
    last_heartbeat: Arc<AtomicI64>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

fn import_derived(derived: &DerivedStore, payload: &[u8]) -> Result<(), HandlerError> {
    let records: Vec<DerivedRecord> = serde_json::from_slice(payload)?;
    let mut imported = 0;
    for record in records {
        if !record.exportable() {
            log::warn!("refusing non-whitelisted feature {:?}", record.feature_name);
            continue;
        }
        match derived.append(record) {
            Ok(_) => imported += 1,
            Err(StoreError::DuplicateId(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if imported > 0 {
        log::info!("imported {imported} derived records");
    }
    Ok(())
}

impl PublicNode {
    pub fn start(
        config: NodeConfig,
        link: Arc<dyn Link>,
        fetcher: Arc<dyn VdpFetcher + Send + Sync>,
    ) -> Result<PublicNode, NodeError> {
        if config.role != Role::Public {
            return Err(NodeError::WrongRole(config.role));
        }
        let dir = config.data_dir.clone();
        let lock = DataDirLock::acquire(&dir)?;
        link.set_mode(state::effective_mode(&dir, config.channel.mode));

        let sense = Arc::new(SenseStore::open_public(&dir.join(PUBLIC_SENSE_FILE))?);
        let derived = Arc::new(DerivedStore::open(&dir.join(DERIVED_FILE))?);
        let ledger = Arc::new(Ledger::open(&dir.join(LEDGER_FILE))?);
        let key = Arc::new(KeyCell::new(state::read_announced_key(&dir)));
        let wire = Wire::new(link, config.channel.fec);
        let outbox = Arc::new(Outbox::open(&dir, wire.clone(), key.clone())?);
        let pairing = Pairing::open(
            &dir,
            config.pairing_code.as_deref().unwrap_or_default(),
            config.pairing_ttl,
        )?;
        let mind = Arc::new(MindEngine::new(
            sense.clone(),
            derived.clone(),
            ledger.clone(),
            config.mind,
            fetcher,
        ));
        let gateway = Arc::new(Gateway::new(pairing, sense.clone(), outbox.clone(), mind));

        let stop = Arc::new(AtomicBool::new(false));
        let last_heartbeat = Arc::new(AtomicI64::new(0));
        let mut router = Router::new();
        {
            let key = key.clone();
            let dir = dir.clone();
            router.register(MsgType::KeyAnnounce, move |p| {
                let ann: KeyAnnouncement = serde_json::from_slice(&p.payload)?;
                let k = ann.verified().ok_or("announced key_id does not match the key")?;
                key.accept(&dir, k);
                Ok(())
            });
        }
        {
            let derived = derived.clone();
            router.register(MsgType::QueryResponse, move |p| import_derived(&derived, &p.payload));
        }
        {
            let hb = last_heartbeat.clone();
            router.register(MsgType::Heartbeat, move |_| {
                hb.store(now_millis(), Ordering::Relaxed);
                Ok(())
            });
        }
        let mut threads = vec![wire.spawn_receiver(router, stop.clone(), "public-rx")];
        threads.push(spawn_maintenance(
            dir.clone(),
            wire.clone(),
            key.clone(),
            outbox.clone(),
            stop.clone(),
        ));

        if wire.link().mode() == ChannelMode::Diode && key.get().is_none() {
            log::warn!(
                "channel is in diode mode and no private-node key has been announced: \
                 sealed ingestion will queue until provisioning"
            );
        }
        Ok(PublicNode {
            config,
            _lock: lock,
            wire,
            key,
            outbox,
            sense,
            derived,
            ledger,
            gateway,
            last_heartbeat,
            stop,
            threads,
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn gateway(&self) -> Arc<Gateway> {
        self.gateway.clone()
    }

    pub fn link(&self) -> &Arc<dyn Link> {
        self.wire.link()
    }

    pub fn sense_store(&self) -> &Arc<SenseStore> {
        &self.sense
    }

    pub fn derived_store(&self) -> &Arc<DerivedStore> {
        &self.derived
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn announced_key(&self) -> Option<PublicKey> {
        self.key.get()
    }

    pub fn pending_forwards(&self) -> usize {
        self.outbox.pending()
    }

    pub fn flush_outbox(&self) -> Result<Option<String>, NodeError> {
        Ok(self.outbox.flush()?)
    }

    /// Milliseconds timestamp of the last heartbeat from the private node.
    pub fn last_heartbeat(&self) -> i64 {
        self.last_heartbeat.load(Ordering::Relaxed)
    }

    /// Ask the private node for its key and wait for the announcement.
    pub fn provision(&self, timeout: Duration) -> Result<PublicKey, NodeError> {
        if self.link().mode() == ChannelMode::Diode {
            return Err(NodeError::Locked);
        }
        let deadline = Instant::now() + timeout;
        let seen = self.key.announcements();
        loop {
            if let Err(e) = self.wire.send(MsgType::QueryRequest, b"key".to_vec()) {
                log::debug!("key request not sent: {e}");
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if let Some(k) = self.key.wait_announcement(seen, left.min(Duration::from_millis(500))) {
                let _ = self.outbox.flush();
                return Ok(k);
            }
            if Instant::now() >= deadline {
                return Err(NodeError::ChannelHandshakeTimeout(timeout));
            }
        }
    }

    /// Switch the channel mode and record it for restarts.
    pub fn set_mode(&self, mode: ChannelMode) -> Result<(), NodeError> {
        state::write_mode(&self.config.data_dir, mode)?;
        self.link().set_mode(mode);
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
        let _ = self.sense.sync();
        let _ = self.derived.sync();
    }
}

impl Drop for PublicNode {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn spawn_maintenance(
    dir: std::path::PathBuf,
    wire: Arc<Wire>,
    key: Arc<KeyCell>,
    outbox: Arc<Outbox>,
    stop: Arc<AtomicBool>,
) -> JoinHandle<()> {
    thread::Builder::new()
        .name("public-maint".into())
        .spawn(move || {
            let mut last_beat = Instant::now() - HEARTBEAT_EVERY;
            let mut provisioning = None;
            let mut mode_file = state::read_mode(&dir);
            while !stop.load(Ordering::Relaxed) {
                thread::sleep(TICK);
                follow_mode_file(&dir, wire.link().as_ref(), &mut mode_file);
                handle_provision_request(&dir, &wire, &key, &mut provisioning);
                if last_beat.elapsed() >= HEARTBEAT_EVERY {
                    last_beat = Instant::now();
                    let _ = wire.send(MsgType::Heartbeat, now_millis().to_be_bytes().to_vec());
                    if outbox.pending() > 0 {
                        if let Err(e) = outbox.flush() {
                            log::error!("outbox: {e}");
                        }
                    }
                }
            }
        })
        .expect("spawn maintenance thread")
}

/// Apply the operator's mode file when it changes. Reacting to changes
/// rather than to differences keeps two nodes sharing one in-process
/// channel from undoing each other's setting.
pub(super) fn follow_mode_file(dir: &Path, link: &dyn Link, last_seen: &mut Option<ChannelMode>) {
    let current = state::read_mode(dir);
    if current != *last_seen {
        *last_seen = current;
        if let Some(mode) = current {
            if mode != link.mode() {
                log::info!("channel mode -> {}", mode.as_str());
                link.set_mode(mode);
            }
        }
    }
}

/// A `provision.request` file asks the running node to obtain the private
/// node's key; the file is removed once an announcement arrives.
fn handle_provision_request(dir: &Path, wire: &Wire, key: &KeyCell, pending: &mut Option<(u64, Instant)>) {
    let request = dir.join(PROVISION_REQUEST_FILE);
    if !request.exists() {
        *pending = None;
        return;
    }
    let (seen_at_request, last_sent) = pending.get_or_insert((key.announcements(), Instant::now() - HEARTBEAT_EVERY));
    if key.announcements() > *seen_at_request {
        if let Some(k) = key.get() {
            log::info!("provisioning complete: key {}", k.key_id());
        }
        let _ = std::fs::remove_file(&request);
        *pending = None;
        return;
    }
    if wire.link().mode() == ChannelMode::Diode {
        return;
    }
    if last_sent.elapsed() >= Duration::from_millis(500) {
        *last_sent = Instant::now();
        let _ = wire.send(MsgType::QueryRequest, b"key".to_vec());
    }
}
