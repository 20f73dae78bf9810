//! Public-node API surface: pairing, Sense ingestion, the Act device
//! registry and the Mind endpoints, plus their HTTP binding.

mod devices;
mod http;
mod pairing;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use devices::{
    CommandState, ControlCommand, ControlKind, ControlSchema, ControlValue, DeviceDescriptor,
    DeviceRegistry, NewDevice,
};
pub use http::{router, MAX_BODY_BYTES};
pub use pairing::{current_code, random_code, ClientCredential, Pairing, CREDENTIALS_FILE, PAIRING_STATE_FILE};

use crate::datastore::{LedgerEntry, NewRecord, Privacy, RecordId, SenseRecord, SenseStore, StoreError};
use crate::mind::{Insight, MindEngine, MindError, MindQuery};
use crate::sealed::PublicKey;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing, invalid or revoked token")]
    Unauthenticated,
    #[error("pairing code rejected")]
    PairingRejected,
    #[error("unknown client {0}")]
    UnknownClient(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("unknown control {0}")]
    UnknownControl(String),
    #[error("value {value} is outside the domain of control {control}")]
    ValueOutOfDomain { control: String, value: String },
    #[error("channel to the private node is down, record {record_id} queued: {reason}")]
    ChannelDown { record_id: RecordId, reason: String },
    #[error("the private node has not announced its key yet")]
    NotProvisioned,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Mind(#[from] MindError),
}

/// Outcome of handing a sealed record to the channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    Forwarded,
    /// Durably queued; will be retried.
    Deferred(String),
}

/// Where sealed records go: a durable queue in front of the channel.
pub trait SealedSink: Send + Sync {
    fn submit(&self, record: SenseRecord) -> Result<Delivery, StoreError>;
    /// The private node's key, once announced.
    fn announced_key(&self) -> Option<PublicKey>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub key_id: String,
    pub public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettleRequest {
    pub query_ref: String,
    pub fee: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementSummary {
    pub query_ref: String,
    pub fee: u64,
    pub distributed: u64,
    pub retained: u64,
    pub entries: Vec<LedgerEntry>,
}

pub struct Gateway {
    pairing: Pairing,
    devices: DeviceRegistry,
    sense: Arc<SenseStore>,
    sealed: Arc<dyn SealedSink>,
    mind: Arc<MindEngine>,
}

impl Gateway {
    pub fn new(
        pairing: Pairing,
        sense: Arc<SenseStore>,
        sealed: Arc<dyn SealedSink>,
        mind: Arc<MindEngine>,
    ) -> Self {
        Self {
            pairing,
            devices: DeviceRegistry::new(),
            sense,
            sealed,
            mind,
        }
    }

    pub fn pairing(&self) -> &Pairing {
        &self.pairing
    }

    pub fn mind(&self) -> &MindEngine {
        &self.mind
    }

    pub fn pair(&self, code: &str) -> Result<ClientCredential, GatewayError> {
        self.pairing.pair(code)
    }

    pub fn authenticate(&self, token: Option<&str>) -> Result<String, GatewayError> {
        self.pairing.authenticate(token)
    }

    pub fn revoke_self(&self, token: Option<&str>) -> Result<String, GatewayError> {
        let client = self.authenticate(token)?;
        self.pairing.revoke(&client)?;
        Ok(client)
    }

    /// Store a Public/Private record, or forward a sealed one to the
    /// private node and keep only its metadata here.
    pub fn ingest(&self, token: Option<&str>, new: NewRecord) -> Result<RecordId, GatewayError> {
        self.authenticate(token)?;
        let record = new.with_id(RecordId::random());
        record.validate().map_err(GatewayError::SchemaViolation)?;
        if record.privacy != Privacy::Sealed {
            return Ok(self.sense.append(record)?);
        }

        if let (Some(key), Some(env)) = (self.sealed.announced_key(), &record.sealed_payload) {
            if env.key_id != key.key_id() {
                return Err(GatewayError::SchemaViolation(format!(
                    "envelope sealed to key {}, expected {}",
                    env.key_id,
                    key.key_id()
                )));
            }
        }
        let id = record.record_id;
        let stub = record.sealed_stub();
        let delivery = self.sealed.submit(record)?;
        self.sense.append(stub)?;
        match delivery {
            Delivery::Forwarded => Ok(id),
            Delivery::Deferred(reason) => Err(GatewayError::ChannelDown { record_id: id, reason }),
        }
    }

    pub fn sealing_key(&self, token: Option<&str>) -> Result<KeyInfo, GatewayError> {
        self.authenticate(token)?;
        let key = self.sealed.announced_key().ok_or(GatewayError::NotProvisioned)?;
        Ok(KeyInfo {
            key_id: key.key_id().to_hex(),
            public_key: key.to_hex(),
        })
    }

    pub fn register_device(&self, token: Option<&str>, device: NewDevice) -> Result<String, GatewayError> {
        self.authenticate(token)?;
        self.devices.register(device)
    }

    pub fn device(&self, token: Option<&str>, device_id: &str) -> Result<DeviceDescriptor, GatewayError> {
        self.authenticate(token)?;
        self.devices.descriptor(device_id)
    }

    pub fn set_control(
        &self,
        token: Option<&str>,
        device_id: &str,
        control: &str,
        value: ControlValue,
    ) -> Result<String, GatewayError> {
        self.authenticate(token)?;
        self.devices.set_control(device_id, control, value)
    }

    pub fn poll_commands(&self, token: Option<&str>, device_id: &str) -> Result<Vec<ControlCommand>, GatewayError> {
        self.authenticate(token)?;
        self.devices.poll(device_id)
    }

    pub fn query(&self, token: Option<&str>, query: &MindQuery) -> Result<Insight, GatewayError> {
        self.authenticate(token)?;
        Ok(self.mind.execute_query(query)?)
    }

    pub fn settle(&self, token: Option<&str>, request: &SettleRequest) -> Result<SettlementSummary, GatewayError> {
        self.authenticate(token)?;
        let entries = self.mind.settle_ref(&request.query_ref, request.fee)?;
        let report = crate::datastore::conservation_of(&entries);
        Ok(SettlementSummary {
            query_ref: request.query_ref.clone(),
            fee: report.fee,
            distributed: report.distributed,
            retained: report.retained,
            entries,
        })
    }
}

/// Default validity of a pairing code.
pub const DEFAULT_PAIRING_TTL: Duration = Duration::from_secs(24 * 3600);
