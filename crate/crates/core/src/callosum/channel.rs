//! The inter-node link with software-enforced directionality.
//!
//! In `Diode` mode only the public node may transmit; a send from the
//! private side fails with `DirectionViolation` before a single byte is
//! counted or queued. Transmissions are delivered as whole chunks, with the
//! configured error model applied to their bytes.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Diode,
    Duplex,
}

impl ChannelMode {
    pub fn parse(text: &str) -> Option<ChannelMode> {
        match text.trim().to_ascii_lowercase().as_str() {
            "diode" => Some(ChannelMode::Diode),
            "duplex" => Some(ChannelMode::Duplex),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Diode => "diode",
            ChannelMode::Duplex => "duplex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Public,
    Private,
}

impl Side {
    /// Direction of bytes sent from this side.
    pub fn outbound(self) -> Direction {
        match self {
            Side::Public => Direction::PublicToPrivate,
            Side::Private => Direction::PrivateToPublic,
        }
    }

    pub fn inbound(self) -> Direction {
        match self {
            Side::Public => Direction::PrivateToPublic,
            Side::Private => Direction::PublicToPrivate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    PublicToPrivate,
    PrivateToPublic,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::PublicToPrivate => 0,
            Direction::PrivateToPublic => 1,
        }
    }

    pub fn permitted(self, mode: ChannelMode) -> bool {
        mode == ChannelMode::Duplex || self == Direction::PublicToPrivate
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("direction private->public is blocked in diode mode")]
    DirectionViolation,
    #[error("channel closed")]
    ChannelClosed,
    #[error("link is down: {0}")]
    LinkDown(String),
}

/// Per-byte corruption and per-transmission drop probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub corruption_probability: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::lossless()
    }
}

impl ErrorModel {
    pub fn lossless() -> Self {
        Self {
            corruption_probability: 0.0,
            drop_probability: 0.0,
            seed: 0,
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.corruption_probability <= 0.0 && self.drop_probability <= 0.0
    }
}

/// Deterministic noise source driven by an [`ErrorModel`].
#[derive(Debug, Clone)]
pub struct Impairment {
    model: ErrorModel,
    rng: ChaCha8Rng,
}

impl Impairment {
    pub fn new(model: ErrorModel) -> Self {
        let clamp = |p: f64| if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        let model = ErrorModel {
            corruption_probability: clamp(model.corruption_probability),
            drop_probability: clamp(model.drop_probability),
            seed: model.seed,
        };
        Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
        }
    }

    /// Returns `None` when the whole transmission is dropped.
    pub fn apply(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        if self.model.is_lossless() {
            return Some(bytes.to_vec());
        }
        if self.model.drop_probability > 0.0 && self.rng.gen_bool(self.model.drop_probability) {
            return None;
        }
        let mut out = bytes.to_vec();
        let p = self.model.corruption_probability;
        if p > 0.0 {
            for b in out.iter_mut() {
                if self.rng.gen_bool(p) {
                    *b ^= self.rng.gen_range(1..=255u8);
                }
            }
        }
        Some(out)
    }
}

/// Bytes written onto the wire in each direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WireCounters {
    pub public_to_private: u64,
    pub private_to_public: u64,
}

impl WireCounters {
    pub fn get(&self, direction: Direction) -> u64 {
        match direction {
            Direction::PublicToPrivate => self.public_to_private,
            Direction::PrivateToPublic => self.private_to_public,
        }
    }

    fn add(&mut self, direction: Direction, n: u64) {
        match direction {
            Direction::PublicToPrivate => self.public_to_private += n,
            Direction::PrivateToPublic => self.private_to_public += n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendReport {
    pub bytes_written: usize,
    pub delivered: bool,
}

/// What every transport offers to a node.
pub trait Link: Send + Sync {
    fn side(&self) -> Side;
    fn send(&self, bytes: &[u8]) -> Result<SendReport, ChannelError>;
    fn recv_timeout(&self, timeout: Duration) -> Option<Vec<u8>>;
    fn mode(&self) -> ChannelMode;
    fn set_mode(&self, mode: ChannelMode);
    fn counters(&self) -> WireCounters;
}

#[derive(Debug)]
struct State {
    mode: ChannelMode,
    closed: bool,
    impairment: Impairment,
    queues: [VecDeque<Vec<u8>>; 2],
    counters: WireCounters,
}

/// In-process channel joining a public and a private endpoint.
#[derive(Debug, Clone)]
pub struct Channel {
    state: Arc<(Mutex<State>, Condvar)>,
}

/// Build a channel whose error model is driven by `model`.
pub fn simulate_channel(model: ErrorModel, mode: ChannelMode) -> Channel {
    Channel::with_model(mode, model)
}

impl Channel {
    pub fn new(mode: ChannelMode) -> Self {
        Self::with_model(mode, ErrorModel::lossless())
    }

    pub fn with_model(mode: ChannelMode, model: ErrorModel) -> Self {
        Self {
            state: Arc::new((
                Mutex::new(State {
                    mode,
                    closed: false,
                    impairment: Impairment::new(model),
                    queues: [VecDeque::new(), VecDeque::new()],
                    counters: WireCounters::default(),
                }),
                Condvar::new(),
            )),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn send(&self, direction: Direction, bytes: &[u8]) -> Result<SendReport, ChannelError> {
        let mut st = self.lock();
        if st.closed {
            return Err(ChannelError::ChannelClosed);
        }
        if !direction.permitted(st.mode) {
            return Err(ChannelError::DirectionViolation);
        }
        st.counters.add(direction, bytes.len() as u64);
        let delivered = match st.impairment.apply(bytes) {
            Some(out) => {
                st.queues[direction.index()].push_back(out);
                true
            }
            None => false,
        };
        drop(st);
        self.state.1.notify_all();
        Ok(SendReport {
            bytes_written: bytes.len(),
            delivered,
        })
    }

    /// Next chunk that travelled in `direction`, if any.
    pub fn try_recv(&self, direction: Direction) -> Option<Vec<u8>> {
        self.lock().queues[direction.index()].pop_front()
    }

    pub fn recv_timeout(&self, direction: Direction, timeout: Duration) -> Option<Vec<u8>> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if let Some(chunk) = st.queues[direction.index()].pop_front() {
                return Some(chunk);
            }
            if st.closed {
                return None;
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            st = self
                .state
                .1
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn mode(&self) -> ChannelMode {
        self.lock().mode
    }

    pub fn set_mode(&self, mode: ChannelMode) {
        self.lock().mode = mode;
    }

    pub fn close(&self) {
        self.lock().closed = true;
        self.state.1.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    pub fn counters(&self) -> WireCounters {
        self.lock().counters
    }

    pub fn endpoint(&self, side: Side) -> ChannelEndpoint {
        ChannelEndpoint {
            channel: self.clone(),
            side,
        }
    }
}

/// One side of an in-process [`Channel`].
#[derive(Debug, Clone)]
pub struct ChannelEndpoint {
    channel: Channel,
    side: Side,
}

impl ChannelEndpoint {
    pub fn channel(&self) -> &Channel {
        &self.channel
    }
}

impl Link for ChannelEndpoint {
    fn side(&self) -> Side {
        self.side
    }

    fn send(&self, bytes: &[u8]) -> Result<SendReport, ChannelError> {
        self.channel.send(self.side.outbound(), bytes)
    }

    fn recv_timeout(&self, timeout: Duration) -> Option<Vec<u8>> {
        self.channel.recv_timeout(self.side.inbound(), timeout)
    }

    fn mode(&self) -> ChannelMode {
        self.channel.mode()
    }

    fn set_mode(&self, mode: ChannelMode) {
        self.channel.set_mode(mode)
    }

    fn counters(&self) -> WireCounters {
        self.channel.counters()
    }
}
