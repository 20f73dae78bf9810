use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::record::{DerivedRecord, FieldValue, SenseRecord};
use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl Comparator {
    pub const ALL: [Comparator; 6] = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Eq,
        Comparator::Ge,
        Comparator::Gt,
        Comparator::Ne,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::Ne => "!=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }

    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparator::Lt => ord == Less,
            Comparator::Le => ord != Greater,
            Comparator::Eq => ord == Equal,
            Comparator::Ge => ord != Less,
            Comparator::Gt => ord == Greater,
            Comparator::Ne => ord != Equal,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "<" | "lt" => Comparator::Lt,
            "<=" | "≤" | "le" => Comparator::Le,
            "=" | "==" | "eq" => Comparator::Eq,
            ">=" | "≥" | "ge" => Comparator::Ge,
            ">" | "gt" => Comparator::Gt,
            "!=" | "≠" | "<>" | "ne" => Comparator::Ne,
            other => return Err(format!("unknown comparator {other:?}")),
        })
    }
}

impl Serialize for Comparator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Comparator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPredicate {
    pub field: String,
    pub op: Comparator,
    pub value: FieldValue,
}

impl FieldPredicate {
    pub fn new(field: impl Into<String>, op: Comparator, value: impl Into<FieldValue>) -> Self {
        Self {
            field: field.into(),
            op,
            value: value.into(),
        }
    }

    /// Checks that do not depend on stored data.
    pub fn check(&self) -> Result<(), StoreError> {
        if self.field.is_empty() {
            return Err(StoreError::BadPredicate("empty field name".into()));
        }
        match &self.value {
            FieldValue::Text(_) if self.op.is_ordering() => Err(StoreError::BadPredicate(format!(
                "comparator {} is not defined on text field {:?}",
                self.op, self.field
            ))),
            FieldValue::Number(n) if !n.is_finite() => Err(StoreError::BadPredicate(format!(
                "constant for {:?} is not finite",
                self.field
            ))),
            _ => Ok(()),
        }
    }

    /// A record lacking the field does not match. A value of the other kind
    /// is a type error.
    pub fn eval(&self, value: Option<&FieldValue>) -> Result<bool, StoreError> {
        let Some(value) = value else { return Ok(false) };
        let ord = match (value, &self.value) {
            (FieldValue::Number(a), FieldValue::Number(b)) => a.total_cmp(b),
            (FieldValue::Text(a), FieldValue::Text(b)) if !self.op.is_ordering() => a.cmp(b),
            _ => {
                return Err(StoreError::BadPredicate(format!(
                    "field {:?} holds {} but predicate compares {} with {}",
                    self.field,
                    value.kind(),
                    self.value.kind(),
                    self.op
                )))
            }
        };
        Ok(self.op.holds(ord))
    }
}

/// Conjunction of record-type membership, an inclusive time range, and
/// field predicates. Empty type set means any type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFilter {
    #[serde(default)]
    pub record_types: BTreeSet<String>,
    #[serde(default)]
    pub time_range: Option<(i64, i64)>,
    #[serde(default)]
    pub predicates: Vec<FieldPredicate>,
}

impl RecordFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn record_type(mut self, t: impl Into<String>) -> Self {
        self.record_types.insert(t.into());
        self
    }

    pub fn between(mut self, start: i64, end: i64) -> Self {
        self.time_range = Some((start, end));
        self
    }

    pub fn predicate(mut self, p: FieldPredicate) -> Self {
        self.predicates.push(p);
        self
    }

    pub fn check(&self) -> Result<(), StoreError> {
        if let Some((start, end)) = self.time_range {
            if start > end {
                return Err(StoreError::BadPredicate(format!(
                    "time range start {start} is after end {end}"
                )));
            }
        }
        self.predicates.iter().try_for_each(FieldPredicate::check)
    }

    pub fn matches<R: Filterable + ?Sized>(&self, record: &R) -> Result<bool, StoreError> {
        if !self.record_types.is_empty() && !self.record_types.contains(record.record_type().as_ref()) {
            return Ok(false);
        }
        if let Some((start, end)) = self.time_range {
            let t = record.timestamp();
            if t < start || t > end {
                return Ok(false);
            }
        }
        for p in &self.predicates {
            if !p.eval(record.field(&p.field))? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// What a filter needs to see of a stored record.
pub trait Filterable {
    fn record_type(&self) -> Cow<'_, str>;
    fn timestamp(&self) -> i64;
    fn field(&self, name: &str) -> Option<&FieldValue>;
}

impl Filterable for SenseRecord {
    fn record_type(&self) -> Cow<'_, str> {
        Cow::Borrowed(&self.record_type)
    }

    fn timestamp(&self) -> i64 {
        self.timestamp
    }

    fn field(&self, name: &str) -> Option<&FieldValue> {
        self.fields.get(name)
    }
}

impl Filterable for DerivedRecord {
    fn record_type(&self) -> Cow<'_, str> {
        Cow::Owned(format!("derived.{}", self.feature_name))
    }

    fn timestamp(&self) -> i64 {
        self.timestamp
    }

    fn field(&self, name: &str) -> Option<&FieldValue> {
        (name == "value").then_some(&self.feature_value)
    }
}
