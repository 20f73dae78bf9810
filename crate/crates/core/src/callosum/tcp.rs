//! Loopback TCP stand-in for the serial wire between the two nodes.
//!
//! Each transmission travels as a 4-byte big-endian length followed by the
//! (possibly impaired) bytes, so chunk boundaries survive like they do on
//! the in-process channel. The private side refuses to write in diode mode
//! and the public side discards anything it reads while in diode mode.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::channel::{ChannelError, ChannelMode, ErrorModel, Impairment, Link, SendReport, Side, WireCounters};

const MAX_CHUNK: usize = 8 * 1024 * 1024;
const POLL: Duration = Duration::from_millis(50);

struct Shared {
    side: Side,
    mode: RwLock<ChannelMode>,
    writer: Mutex<Option<TcpStream>>,
    shutdown: AtomicBool,
}

pub struct TcpLink {
    shared: Arc<Shared>,
    inbox: Mutex<Receiver<Vec<u8>>>,
    impairment: Mutex<Impairment>,
    counters: Mutex<WireCounters>,
    local_addr: Option<SocketAddr>,
    worker: Option<JoinHandle<()>>,
}

impl TcpLink {
    /// Accept connections from the peer on `addr`; the latest connection wins.
    pub fn listen(addr: &str, side: Side, mode: ChannelMode, model: ErrorModel) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr().ok();
        let (tx, rx) = mpsc::channel();
        let shared = Self::shared(side, mode);
        let accept_shared = shared.clone();
        let worker = thread::spawn(move || {
            while !accept_shared.shutdown.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let _ = stream.set_nonblocking(false);
                        let _ = stream.set_nodelay(true);
                        attach(&accept_shared, stream, tx.clone());
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(_) => thread::sleep(POLL),
                }
            }
        });
        Ok(Self::build(shared, rx, model, local_addr, worker))
    }

    /// Keep a connection to `addr` open, reconnecting when it drops.
    pub fn connect(addr: &str, side: Side, mode: ChannelMode, model: ErrorModel) -> Self {
        let (tx, rx) = mpsc::channel();
        let shared = Self::shared(side, mode);
        let conn_shared = shared.clone();
        let addr = addr.to_string();
        let worker = thread::spawn(move || {
            while !conn_shared.shutdown.load(Ordering::Relaxed) {
                let connected = conn_shared
                    .writer
                    .lock()
                    .map(|w| w.is_some())
                    .unwrap_or(false);
                if !connected {
                    if let Ok(stream) = TcpStream::connect(&addr) {
                        let _ = stream.set_nodelay(true);
                        attach(&conn_shared, stream, tx.clone());
                    }
                }
                thread::sleep(POLL * 2);
            }
        });
        Self::build(shared, rx, model, None, worker)
    }

    fn shared(side: Side, mode: ChannelMode) -> Arc<Shared> {
        Arc::new(Shared {
            side,
            mode: RwLock::new(mode),
            writer: Mutex::new(None),
            shutdown: AtomicBool::new(false),
        })
    }

    fn build(
        shared: Arc<Shared>,
        inbox: Receiver<Vec<u8>>,
        model: ErrorModel,
        local_addr: Option<SocketAddr>,
        worker: JoinHandle<()>,
    ) -> Self {
        Self {
            shared,
            inbox: Mutex::new(inbox),
            impairment: Mutex::new(Impairment::new(model)),
            counters: Mutex::new(WireCounters::default()),
            local_addr,
            worker: Some(worker),
        }
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.local_addr
    }

    pub fn is_connected(&self) -> bool {
        self.shared
            .writer
            .lock()
            .map(|w| w.is_some())
            .unwrap_or(false)
    }
}

fn attach(shared: &Arc<Shared>, stream: TcpStream, tx: Sender<Vec<u8>>) {
    let Ok(reader) = stream.try_clone() else {
        return;
    };
    if let Ok(mut w) = shared.writer.lock() {
        if let Some(old) = w.replace(stream) {
            let _ = old.shutdown(Shutdown::Both);
        }
    }
    let shared = shared.clone();
    thread::spawn(move || read_loop(shared, reader, tx));
}

fn read_loop(shared: Arc<Shared>, mut stream: TcpStream, tx: Sender<Vec<u8>>) {
    let mut len_buf = [0u8; 4];
    loop {
        if stream.read_exact(&mut len_buf).is_err() {
            break;
        }
        let len = u32::from_be_bytes(len_buf) as usize;
        if len > MAX_CHUNK {
            break;
        }
        let mut chunk = vec![0u8; len];
        if stream.read_exact(&mut chunk).is_err() {
            break;
        }
        let mode = *shared.mode.read().unwrap_or_else(|e| e.into_inner());
        if !shared.side.inbound().permitted(mode) {
            continue;
        }
        if tx.send(chunk).is_err() {
            break;
        }
    }
    if let Ok(mut w) = shared.writer.lock() {
        let same = w
            .as_ref()
            .and_then(|s| s.peer_addr().ok())
            .zip(stream.peer_addr().ok())
            .is_some_and(|(a, b)| a == b);
        if same {
            *w = None;
        }
    }
}

impl Link for TcpLink {
    fn side(&self) -> Side {
        self.shared.side
    }

    fn send(&self, bytes: &[u8]) -> Result<SendReport, ChannelError> {
        if self.shared.shutdown.load(Ordering::Relaxed) {
            return Err(ChannelError::ChannelClosed);
        }
        if !self.shared.side.outbound().permitted(self.mode()) {
            return Err(ChannelError::DirectionViolation);
        }
        let mut writer = self.shared.writer.lock().unwrap_or_else(|e| e.into_inner());
        let Some(stream) = writer.as_mut() else {
            return Err(ChannelError::LinkDown("peer not connected".into()));
        };
        let impaired = self
            .impairment
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .apply(bytes);
        let delivered = impaired.is_some();
        let payload = impaired.unwrap_or_default();
        let mut frame = Vec::with_capacity(4 + payload.len());
        frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        frame.extend_from_slice(&payload);
        if delivered {
            if let Err(e) = stream.write_all(&frame).and_then(|_| stream.flush()) {
                *writer = None;
                return Err(ChannelError::LinkDown(e.to_string()));
            }
        }
        let mut counters = self.counters.lock().unwrap_or_else(|e| e.into_inner());
        match self.shared.side {
            Side::Public => counters.public_to_private += bytes.len() as u64,
            Side::Private => counters.private_to_public += bytes.len() as u64,
        }
        Ok(SendReport {
            bytes_written: bytes.len(),
            delivered,
        })
    }

    fn recv_timeout(&self, timeout: Duration) -> Option<Vec<u8>> {
        self.inbox
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .recv_timeout(timeout)
            .ok()
    }

    fn mode(&self) -> ChannelMode {
        *self.shared.mode.read().unwrap_or_else(|e| e.into_inner())
    }

    fn set_mode(&self, mode: ChannelMode) {
        *self.shared.mode.write().unwrap_or_else(|e| e.into_inner()) = mode;
    }

    fn counters(&self) -> WireCounters {
        *self.counters.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::Relaxed);
        if let Ok(mut w) = self.shared.writer.lock() {
            if let Some(s) = w.take() {
                let _ = s.shutdown(Shutdown::Both);
            }
        }
        // Wait for the accept/connect loop so the listening socket is closed
        // (and no reconnect is in flight) once the link is gone.
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
        if let Ok(mut w) = self.shared.writer.lock() {
            if let Some(s) = w.take() {
                let _ = s.shutdown(Shutdown::Both);
            }
        }
    }
}
