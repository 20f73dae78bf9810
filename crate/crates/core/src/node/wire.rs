//! Packets on the link: framing, sending and the receive loop.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::callosum::{
    decode_stream, encode_frame, CallosumPacket, ChannelError, Link, MsgType, RouteError, Router, FecConfig,
};
use crate::datastore::SenseRecord;
use crate::sealed::SealedEnvelope;

pub struct Wire {
    link: Arc<dyn Link>,
    fec: FecConfig,
    next_id: AtomicU64,
    frame_errors: AtomicU64,
}

impl Wire {
    pub fn new(link: Arc<dyn Link>, fec: FecConfig) -> Arc<Wire> {
        Arc::new(Wire {
            link,
            fec,
            next_id: AtomicU64::new(1),
            frame_errors: AtomicU64::new(0),
        })
    }

    pub fn link(&self) -> &Arc<dyn Link> {
        &self.link
    }

    pub fn send(&self, msg_type: MsgType, payload: Vec<u8>) -> Result<u64, ChannelError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let packet = CallosumPacket::new(msg_type, id, payload);
        let frame = encode_frame(&packet, &self.fec).map_err(|e| ChannelError::LinkDown(e.to_string()))?;
        self.link.send(&frame)?;
        Ok(id)
    }

    pub fn frame_errors(&self) -> u64 {
        self.frame_errors.load(Ordering::Relaxed)
    }

    /// Decode every chunk arriving on the link and route its packets until
    /// `stop` is set.
    pub fn spawn_receiver(self: &Arc<Self>, router: Router, stop: Arc<AtomicBool>, name: &str) -> JoinHandle<()> {
        let wire = self.clone();
        thread::Builder::new()
            .name(name.to_string())
            .spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let Some(chunk) = wire.link.recv_timeout(Duration::from_millis(50)) else {
                        continue;
                    };
                    for item in decode_stream(&chunk, &wire.fec) {
                        match item {
                            Ok(packet) => match router.route(&packet) {
                                Ok(()) => {}
                                Err(RouteError::NoHandlerRegistered(t)) => {
                                    log::warn!("dropping {t} packet: no handler registered")
                                }
                                Err(e) => log::error!("{e}"),
                            },
                            Err(e) => {
                                wire.frame_errors.fetch_add(1, Ordering::Relaxed);
                                log::warn!("frame error: {e}");
                            }
                        }
                    }
                }
            })
            .expect("spawn receiver thread")
    }
}

/// SenseForward payload: u32 BE metadata length, the record's metadata as
/// JSON (its stub form), then the serialized envelope.
pub fn encode_forward(record: &SenseRecord) -> Option<Vec<u8>> {
    let envelope = record.sealed_payload.as_ref()?;
    let meta = crate::canonical::to_canonical(&record.sealed_stub()).ok()?;
    let env = envelope.to_bytes();
    let mut out = Vec::with_capacity(4 + meta.len() + env.len());
    out.extend_from_slice(&(meta.len() as u32).to_be_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&env);
    Some(out)
}

pub fn decode_forward(payload: &[u8]) -> Result<SenseRecord, String> {
    let len_bytes: [u8; 4] = payload
        .get(..4)
        .and_then(|b| b.try_into().ok())
        .ok_or("forward payload too short")?;
    let meta_len = u32::from_be_bytes(len_bytes) as usize;
    let meta = payload.get(4..4 + meta_len).ok_or("forward metadata truncated")?;
    let mut record: SenseRecord = serde_json::from_slice(meta).map_err(|e| e.to_string())?;
    let envelope = SealedEnvelope::from_bytes(&payload[4 + meta_len..]).map_err(|e| e.to_string())?;
    record.sealed_payload = Some(envelope);
    Ok(record)
}
