use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

use crate::sealed::SealedEnvelope;
use crate::vdp::{document_from_value, document_to_value, CryptoAddress, VdpDocument, VdpNode};

/// 128-bit record identifier, rendered as a hyphenated UUID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub Uuid);

impl RecordId {
    pub fn random() -> Self {
        RecordId(Uuid::new_v4())
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl FromStr for RecordId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(RecordId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privacy {
    Public,
    Private,
    Sealed,
}

/// A numeric or text field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Number(f64),
    Text(String),
}

impl FieldValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FieldValue::Number(n) => Some(*n),
            FieldValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(t) => Some(t),
            FieldValue::Number(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FieldValue::Number(_) => "number",
            FieldValue::Text(_) => "text",
        }
    }
}

impl From<f64> for FieldValue {
    fn from(v: f64) -> Self {
        FieldValue::Number(v)
    }
}

impl From<i64> for FieldValue {
    fn from(v: i64) -> Self {
        FieldValue::Number(v as f64)
    }
}

impl From<&str> for FieldValue {
    fn from(v: &str) -> Self {
        FieldValue::Text(v.to_string())
    }
}

impl From<String> for FieldValue {
    fn from(v: String) -> Self {
        FieldValue::Text(v)
    }
}

/// Where a record's payees are described: inline or at a URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceVdp {
    Inline(VdpDocument),
    Url(String),
}

impl SourceVdp {
    /// The node to place under this source in an attribution document.
    pub fn payee_node(&self) -> VdpNode {
        match self {
            SourceVdp::Inline(doc) => doc.root.clone(),
            SourceVdp::Url(url) => VdpNode::ExternalRef(url.clone()),
        }
    }
}

impl Serialize for SourceVdp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SourceVdp::Inline(doc) => document_to_value(doc).serialize(serializer),
            SourceVdp::Url(url) => serializer.serialize_str(url),
        }
    }
}

impl<'de> Deserialize<'de> for SourceVdp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = serde_json::Value::deserialize(deserializer)?;
        match &value {
            serde_json::Value::String(s) => {
                url::Url::parse(s).map_err(|e| D::Error::custom(format!("source_vdp url: {e}")))?;
                Ok(SourceVdp::Url(s.clone()))
            }
            serde_json::Value::Object(_) => document_from_value(&value)
                .map(SourceVdp::Inline)
                .map_err(|e| D::Error::custom(format!("source_vdp: {e}"))),
            _ => Err(D::Error::custom("source_vdp must be a VDP document or a URL")),
        }
    }
}

mod envelope_b64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<SealedEnvelope>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(env) => s.serialize_some(&BASE64.encode(env.to_bytes())),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<SealedEnvelope>, D::Error> {
        use serde::de::Error;
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let bytes = BASE64.decode(text.as_bytes()).map_err(D::Error::custom)?;
        SealedEnvelope::from_bytes(&bytes)
            .map(Some)
            .map_err(D::Error::custom)
    }
}

/// A record as submitted through the Sense API, before an id is assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewRecord {
    pub source_id: String,
    pub source_vdp: SourceVdp,
    pub timestamp: i64,
    pub record_type: String,
    pub privacy: Privacy,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldValue>,
    #[serde(default, with = "envelope_b64", skip_serializing_if = "Option::is_none")]
    pub sealed_payload: Option<SealedEnvelope>,
}

impl NewRecord {
    pub fn with_id(self, record_id: RecordId) -> SenseRecord {
        SenseRecord {
            record_id,
            source_id: self.source_id,
            source_vdp: self.source_vdp,
            timestamp: self.timestamp,
            record_type: self.record_type,
            privacy: self.privacy,
            fields: self.fields,
            sealed_payload: self.sealed_payload,
        }
    }
}

/// One unit of ingested personal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseRecord {
    pub record_id: RecordId,
    pub source_id: String,
    pub source_vdp: SourceVdp,
    /// UTC milliseconds.
    pub timestamp: i64,
    pub record_type: String,
    pub privacy: Privacy,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldValue>,
    #[serde(default, with = "envelope_b64", skip_serializing_if = "Option::is_none")]
    pub sealed_payload: Option<SealedEnvelope>,
}

impl SenseRecord {
    /// Record-level invariants, independent of which store holds it.
    pub fn validate(&self) -> Result<(), String> {
        validate_common(
            &self.source_id,
            &self.record_type,
            self.timestamp,
            &self.fields,
        )?;
        match (self.privacy, self.sealed_payload.is_some()) {
            (Privacy::Sealed, false) => Err("sealed record without sealed_payload".into()),
            (Privacy::Sealed, true) if !self.fields.is_empty() => {
                Err("sealed record must not carry fields".into())
            }
            (Privacy::Public | Privacy::Private, true) => {
                Err("sealed_payload is only allowed on sealed records".into())
            }
            _ => Ok(()),
        }
    }

    /// The metadata-only copy kept by the public node for a sealed record.
    pub fn sealed_stub(&self) -> SenseRecord {
        SenseRecord {
            fields: BTreeMap::new(),
            sealed_payload: None,
            ..self.clone()
        }
    }

    pub fn is_sealed_stub(&self) -> bool {
        self.privacy == Privacy::Sealed && self.sealed_payload.is_none() && self.fields.is_empty()
    }
}

pub(crate) fn validate_common(
    source_id: &str,
    record_type: &str,
    timestamp: i64,
    fields: &BTreeMap<String, FieldValue>,
) -> Result<(), String> {
    if source_id.is_empty() {
        return Err("source_id must not be empty".into());
    }
    if record_type.is_empty() {
        return Err("record_type must not be empty".into());
    }
    if timestamp <= 0 {
        return Err("timestamp must be positive".into());
    }
    for (name, value) in fields {
        if name.is_empty() {
            return Err("field names must not be empty".into());
        }
        if let FieldValue::Number(n) = value {
            if !n.is_finite() {
                return Err(format!("field {name:?} is not a finite number"));
            }
        }
    }
    Ok(())
}

/// A feature extracted on the private node from a sealed record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedRecord {
    pub record_id: RecordId,
    pub origin_record_id: RecordId,
    /// Carried over from the origin record so insights can attribute it.
    pub source_id: String,
    pub source_vdp: SourceVdp,
    pub feature_name: String,
    pub feature_value: FieldValue,
    pub timestamp: i64,
}

/// Feature names allowed to leave the private node.
pub const EXPORT_WHITELIST: [&str; 2] = ["byte_length", "content_digest"];

impl DerivedRecord {
    pub fn validate(&self) -> Result<(), String> {
        let mut fields = BTreeMap::new();
        fields.insert(self.feature_name.clone(), self.feature_value.clone());
        validate_common(&self.source_id, &self.feature_name, self.timestamp, &fields)
    }

    pub fn exportable(&self) -> bool {
        EXPORT_WHITELIST.contains(&self.feature_name.as_str())
    }

    /// Queryable form: record type `derived.<feature>`, a single `value` field.
    pub fn as_sense_record(&self) -> SenseRecord {
        let mut fields = BTreeMap::new();
        fields.insert("value".to_string(), self.feature_value.clone());
        SenseRecord {
            record_id: self.record_id,
            source_id: self.source_id.clone(),
            source_vdp: self.source_vdp.clone(),
            timestamp: self.timestamp,
            record_type: format!("derived.{}", self.feature_name),
            privacy: Privacy::Private,
            fields,
            sealed_payload: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerKind {
    FeeReceived,
    PaymentInstruction,
    Retention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub tx_id: Uuid,
    pub timestamp: i64,
    pub kind: LedgerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterparty_address: Option<CryptoAddress>,
    /// Integer atomic units.
    pub amount: u64,
    pub query_ref: String,
    /// Branch path of a payment instruction, e.g. `/A/contributors/ktorn`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl LedgerEntry {
    pub fn new(kind: LedgerKind, query_ref: &str, amount: u64, timestamp: i64) -> Self {
        Self {
            tx_id: Uuid::new_v4(),
            timestamp,
            kind,
            counterparty_address: None,
            amount,
            query_ref: query_ref.to_string(),
            path: None,
        }
    }
}

pub fn now_millis() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(1)
}
