use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::datastore::{DerivedRecord, FieldValue, RecordId, SenseRecord};
use crate::sealed::{open, KeyPair, SealError, SealedEnvelope};

/// Open `envelope` and compute the exportable stub features of its
/// plaintext. The plaintext is wiped before returning.
///
/// Derived record ids are a deterministic function of the origin id and the
/// feature name, so re-extraction after a restart is idempotent.
pub fn extract_features(
    keypair: &KeyPair,
    envelope: &SealedEnvelope,
    origin: &SenseRecord,
    now: i64,
) -> Result<Vec<DerivedRecord>, SealError> {
    let mut plaintext = open(keypair, envelope)?;
    let length = plaintext.len();
    let digest = hex::encode(Sha256::digest(&plaintext));
    plaintext.fill(0);
    std::hint::black_box(&plaintext);
    drop(plaintext);

    let make = |name: &str, value: FieldValue| DerivedRecord {
        record_id: derived_id(origin.record_id, name),
        origin_record_id: origin.record_id,
        source_id: origin.source_id.clone(),
        source_vdp: origin.source_vdp.clone(),
        feature_name: name.to_string(),
        feature_value: value,
        timestamp: now,
    };
    Ok(vec![
        make("byte_length", FieldValue::Number(length as f64)),
        make("content_digest", FieldValue::Text(digest)),
    ])
}

pub fn derived_id(origin: RecordId, feature: &str) -> RecordId {
    RecordId(Uuid::new_v5(&origin.0, feature.as_bytes()))
}
