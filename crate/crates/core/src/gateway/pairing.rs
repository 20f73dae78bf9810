//! Explicit client pairing: a single-use setup code exchanged for a bearer
//! token. Issued tokens are stored only as SHA-256 digests.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rand::rngs::OsRng;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use super::GatewayError;
use crate::datastore::{now_millis, AppendLog, StoreError, SyncPolicy};

pub const PAIRING_STATE_FILE: &str = "pairing.json";
pub const CREDENTIALS_FILE: &str = "credentials.ndjson";
const CODE_ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
const CODE_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCredential {
    pub client_id: String,
    pub token: String,
    pub created_at: i64,
    pub revoked: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairingState {
    code: String,
    issued_at: i64,
    /// Digests of codes already exchanged.
    consumed: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CredentialEvent {
    Issued {
        client_id: String,
        token_sha256: String,
        created_at: i64,
    },
    Revoked {
        client_id: String,
    },
}

struct Client {
    token_sha256: String,
    created_at: i64,
    revoked: bool,
}

struct Credentials {
    log: AppendLog,
    clients: HashMap<String, Client>,
    by_token: HashMap<String, String>,
}

pub struct Pairing {
    state_path: PathBuf,
    state: Mutex<PairingState>,
    ttl: Option<Duration>,
    credentials: Mutex<Credentials>,
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A fresh random pairing code.
pub fn random_code() -> String {
    let mut rng = OsRng;
    (0..CODE_LEN)
        .map(|_| CODE_ALPHABET[rng.gen_range(0..CODE_ALPHABET.len())] as char)
        .collect()
}

fn random_token() -> String {
    let mut bytes = [0u8; 32];
    OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn load_state(path: &Path) -> Option<PairingState> {
    let text = fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("{}: ignoring unreadable pairing state: {e}", path.display());
            None
        }
    }
}

/// The code currently accepted by the node owning `data_dir`, without
/// modifying anything.
pub fn current_code(data_dir: &Path, configured: &str) -> String {
    match load_state(&data_dir.join(PAIRING_STATE_FILE)) {
        Some(s) if s.consumed.contains(&digest(configured)) || s.code == configured => s.code,
        _ => configured.to_string(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

impl Pairing {
    /// `configured` is the operator's code from the config file; it is used
    /// until exchanged, after which a random successor is generated.
    pub fn open(data_dir: &Path, configured: &str, ttl: Option<Duration>) -> Result<Self, StoreError> {
        let state_path = data_dir.join(PAIRING_STATE_FILE);
        let state = match load_state(&state_path) {
            Some(s) if s.consumed.contains(&digest(configured)) || s.code == configured => s,
            Some(mut s) => {
                // Operator changed the configured code.
                s.code = configured.to_string();
                s.issued_at = now_millis();
                s
            }
            None => PairingState {
                code: configured.to_string(),
                issued_at: now_millis(),
                consumed: Vec::new(),
            },
        };
        let bytes = serde_json::to_vec(&state).map_err(|e| StoreError::Io(e.to_string()))?;
        write_atomic(&state_path, &bytes)?;

        let (log, events) = AppendLog::open::<CredentialEvent>(
            &data_dir.join(CREDENTIALS_FILE),
            SyncPolicy::EveryAppend,
            None,
        )?;
        let mut clients = HashMap::new();
        let mut by_token = HashMap::new();
        for event in events {
            match event {
                CredentialEvent::Issued {
                    client_id,
                    token_sha256,
                    created_at,
                } => {
                    by_token.insert(token_sha256.clone(), client_id.clone());
                    clients.insert(
                        client_id,
                        Client {
                            token_sha256,
                            created_at,
                            revoked: false,
                        },
                    );
                }
                CredentialEvent::Revoked { client_id } => {
                    if let Some(c) = clients.get_mut(&client_id) {
                        c.revoked = true;
                    }
                }
            }
        }
        Ok(Self {
            state_path,
            state: Mutex::new(state),
            ttl,
            credentials: Mutex::new(Credentials {
                log,
                clients,
                by_token,
            }),
        })
    }

    pub fn current_code(&self) -> String {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).code.clone()
    }

    /// Exchange the setup code for a credential. The code is consumed and
    /// replaced by a new random one.
    pub fn pair(&self, code: &str) -> Result<ClientCredential, GatewayError> {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let presented = digest(code);
        let expired = self
            .ttl
            .is_some_and(|ttl| now_millis() - state.issued_at > ttl.as_millis() as i64);
        if presented != digest(&state.code) || state.consumed.contains(&presented) || expired {
            return Err(GatewayError::PairingRejected);
        }

        let credential = ClientCredential {
            client_id: Uuid::new_v4().to_string(),
            token: random_token(),
            created_at: now_millis(),
            revoked: false,
        };
        let mut next = state.clone();
        next.consumed.push(presented);
        next.code = random_code();
        next.issued_at = now_millis();
        let bytes = serde_json::to_vec(&next).map_err(|e| StoreError::Io(e.to_string()))?;
        write_atomic(&self.state_path, &bytes).map_err(StoreError::from)?;
        *state = next;

        let token_sha256 = digest(&credential.token);
        let mut creds = self.credentials.lock().unwrap_or_else(|p| p.into_inner());
        creds.log.append(&CredentialEvent::Issued {
            client_id: credential.client_id.clone(),
            token_sha256: token_sha256.clone(),
            created_at: credential.created_at,
        })?;
        creds.by_token.insert(token_sha256.clone(), credential.client_id.clone());
        creds.clients.insert(
            credential.client_id.clone(),
            Client {
                token_sha256,
                created_at: credential.created_at,
                revoked: false,
            },
        );
        log::info!("paired client {}", credential.client_id);
        Ok(credential)
    }

    /// The client id owning `token`, if it is valid and not revoked.
    pub fn authenticate(&self, token: Option<&str>) -> Result<String, GatewayError> {
        let token = token.ok_or(GatewayError::Unauthenticated)?;
        let creds = self.credentials.lock().unwrap_or_else(|p| p.into_inner());
        let client_id = creds
            .by_token
            .get(&digest(token))
            .ok_or(GatewayError::Unauthenticated)?;
        match creds.clients.get(client_id) {
            Some(c) if !c.revoked => Ok(client_id.clone()),
            _ => Err(GatewayError::Unauthenticated),
        }
    }

    pub fn revoke(&self, client_id: &str) -> Result<(), GatewayError> {
        let mut creds = self.credentials.lock().unwrap_or_else(|p| p.into_inner());
        if !creds.clients.contains_key(client_id) {
            return Err(GatewayError::UnknownClient(client_id.to_string()));
        }
        creds.log.append(&CredentialEvent::Revoked {
            client_id: client_id.to_string(),
        })?;
        if let Some(c) = creds.clients.get_mut(client_id) {
            c.revoked = true;
        }
        Ok(())
    }

    /// Issued credentials without their tokens.
    pub fn clients(&self) -> Vec<(String, i64, bool)> {
        let creds = self.credentials.lock().unwrap_or_else(|p| p.into_inner());
        let mut out: Vec<_> = creds
            .clients
            .iter()
            .map(|(id, c)| {
                debug_assert_eq!(creds.by_token.get(&c.token_sha256), Some(id));
                (id.clone(), c.created_at, c.revoked)
            })
            .collect();
        out.sort_by_key(|c| c.1);
        out
    }
}
