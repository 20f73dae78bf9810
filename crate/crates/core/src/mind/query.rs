use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datastore::{FieldPredicate, RecordFilter, StoreError};
use crate::vdp::{document_from_value, document_to_value, CryptoAddress, VdpDocument};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Aggregate {
    Count,
    Sum { field: String },
    Mean { field: String },
    Min { field: String },
    Max { field: String },
}

impl Aggregate {
    pub fn field(&self) -> Option<&str> {
        match self {
            Aggregate::Count => None,
            Aggregate::Sum { field }
            | Aggregate::Mean { field }
            | Aggregate::Min { field }
            | Aggregate::Max { field } => Some(field),
        }
    }
}

/// A declarative aggregate query in the Mind query language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MindQuery {
    pub record_types: BTreeSet<String>,
    /// Inclusive `[start, end]`, UTC milliseconds.
    pub time_range: (i64, i64),
    #[serde(default)]
    pub predicates: Vec<FieldPredicate>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    pub offered_fee: u64,
    pub enterprise_payout_address: CryptoAddress,
}

impl MindQuery {
    pub fn filter(&self) -> RecordFilter {
        RecordFilter {
            record_types: self.record_types.clone(),
            time_range: Some(self.time_range),
            predicates: self.predicates.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if matches!(self.aggregate.field(), Some("")) {
            return Err(StoreError::BadPredicate("aggregate field is empty".into()));
        }
        if matches!(self.group_by.as_deref(), Some("")) {
            return Err(StoreError::BadPredicate("group_by field is empty".into()));
        }
        self.filter().check()
    }
}

/// An aggregate value: integer for counts, real otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Integer(u64),
    Real(f64),
}

impl Scalar {
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Integer(n) => n as f64,
            Scalar::Real(x) => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryResult {
    Scalar(Scalar),
    Groups(BTreeMap<String, Scalar>),
}

/// The answer to a query. Never carries record-level data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Insight {
    pub result: QueryResult,
    pub matched_count: u64,
    #[serde(with = "inline_vdp")]
    pub attribution: VdpDocument,
    pub fee_charged: u64,
    pub query_ref: String,
}

mod inline_vdp {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::*;

    pub fn serialize<S: Serializer>(doc: &VdpDocument, s: S) -> Result<S::Ok, S::Error> {
        document_to_value(doc).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<VdpDocument, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        document_from_value(&v).map_err(serde::de::Error::custom)
    }
}
