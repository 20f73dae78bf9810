use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use thiserror::Error;
use uuid::Uuid;

use super::fsum::ExactSum;
use super::query::{Aggregate, Insight, MindQuery, QueryResult, Scalar};
use crate::datastore::{
    conservation_of, now_millis, DerivedStore, FieldValue, Filterable, Ledger, LedgerEntry,
    LedgerKind, Privacy, SenseRecord, SenseStore, SourceVdp, StoreError,
};
use crate::vdp::{
    build_attribution_vdp, distribute, Contribution, CryptoAddress, ResolutionLimits, Resolver,
    VdpError, VdpFetcher,
};

pub const DEFAULT_K_MIN: u64 = 5;
pub const BASIS_POINTS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MindPolicy {
    /// Minimum number of contributing records before any value is revealed.
    pub k_min: u64,
    pub min_fee: u64,
    /// Share of each fee kept by the node, in basis points.
    pub retention_bp: u32,
    pub limits: ResolutionLimits,
}

impl Default for MindPolicy {
    fn default() -> Self {
        Self {
            k_min: DEFAULT_K_MIN,
            min_fee: 0,
            retention_bp: 0,
            limits: ResolutionLimits::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum MindError {
    #[error("insufficient data: {matched} matching records, at least {k_min} required")]
    InsufficientData { matched: u64, k_min: u64 },
    #[error("offered fee {offered} is below the minimum {minimum}")]
    FeeTooLow { offered: u64, minimum: u64 },
    #[error("fee {offered} does not match the charged fee {expected}")]
    FeeMismatch { expected: u64, offered: u64 },
    #[error("bad predicate: {0}")]
    BadPredicate(String),
    #[error("unknown query_ref {0}")]
    UnknownQueryRef(String),
    #[error("query_ref {0} is already settled")]
    AlreadySettled(String),
    #[error("attribution resolution failed: {0}")]
    ResolutionFailed(VdpError),
    #[error("settlement failed: {0}")]
    Distribution(VdpError),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for MindError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::BadPredicate(m) => MindError::BadPredicate(m),
            other => MindError::Store(other),
        }
    }
}

#[derive(Default)]
struct Group {
    count: u64,
    sum: ExactSum,
    min: Option<f64>,
    max: Option<f64>,
}

impl Group {
    fn add(&mut self, value: Option<f64>) {
        self.count += 1;
        if let Some(v) = value {
            self.sum.add(v);
            self.min = Some(self.min.map_or(v, |m| m.min(v)));
            self.max = Some(self.max.map_or(v, |m| m.max(v)));
        }
    }

    fn value(&self, aggregate: &Aggregate) -> Scalar {
        match aggregate {
            Aggregate::Count => Scalar::Integer(self.count),
            Aggregate::Sum { .. } => Scalar::Real(self.sum.value()),
            Aggregate::Mean { .. } => Scalar::Real(self.sum.value() / self.count as f64),
            Aggregate::Min { .. } => Scalar::Real(self.min.unwrap_or(f64::NAN)),
            Aggregate::Max { .. } => Scalar::Real(self.max.unwrap_or(f64::NAN)),
        }
    }
}

/// Outcome of aggregating already-filtered records.
#[derive(Debug, Clone, PartialEq)]
pub struct Computed {
    pub result: QueryResult,
    pub matched_count: u64,
    /// Per source id: contributing record count and the payee description
    /// of its most recent contributing record.
    pub contributions: BTreeMap<String, (u64, SourceVdp)>,
}

/// Aggregate `records` (already filtered and in timestamp order).
///
/// Records lacking the aggregate field, or the `group_by` field, do not
/// contribute. Groups smaller than `k_min` are suppressed; if nothing is
/// left the query yields no data at all.
pub fn compute(records: &[SenseRecord], query: &MindQuery, k_min: u64) -> Result<Computed, MindError> {
    let k_min = k_min.max(1);
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    let mut contributing: Vec<(&SenseRecord, String)> = Vec::new();
    for record in records {
        let value = match query.aggregate.field() {
            None => None,
            Some(field) => match record.field(field) {
                None => continue,
                Some(FieldValue::Number(n)) => Some(*n),
                Some(FieldValue::Text(_)) => {
                    return Err(MindError::BadPredicate(format!(
                        "aggregate field {field:?} holds text"
                    )))
                }
            },
        };
        let key = match &query.group_by {
            None => String::new(),
            Some(g) => match record.field(g) {
                None => continue,
                Some(FieldValue::Text(t)) => t.clone(),
                Some(FieldValue::Number(n)) => serde_json::Value::from(*n).to_string(),
            },
        };
        groups.entry(key.clone()).or_default().add(value);
        contributing.push((record, key));
    }

    groups.retain(|_, g| g.count >= k_min);
    if groups.is_empty() {
        return Err(MindError::InsufficientData {
            matched: contributing.len() as u64,
            k_min,
        });
    }

    let mut contributions: BTreeMap<String, (u64, SourceVdp)> = BTreeMap::new();
    let mut matched_count = 0;
    for (record, key) in contributing {
        if !groups.contains_key(&key) {
            continue;
        }
        matched_count += 1;
        let slot = contributions
            .entry(record.source_id.clone())
            .or_insert_with(|| (0, record.source_vdp.clone()));
        slot.0 += 1;
        if slot.1 != record.source_vdp {
            slot.1 = record.source_vdp.clone();
        }
    }

    let result = match &query.group_by {
        None => QueryResult::Scalar(groups[""].value(&query.aggregate)),
        Some(_) => QueryResult::Groups(
            groups
                .iter()
                .map(|(k, g)| (k.clone(), g.value(&query.aggregate)))
                .collect(),
        ),
    };
    Ok(Computed {
        result,
        matched_count,
        contributions,
    })
}

/// Fee split for a retention rate: (distributable, retained).
pub fn split_fee(fee: u64, retention_bp: u32) -> (u64, u64) {
    let bp = retention_bp.min(BASIS_POINTS) as u128;
    let distributable = (fee as u128 * (BASIS_POINTS as u128 - bp) / BASIS_POINTS as u128) as u64;
    (distributable, fee - distributable)
}

/// Ledger entries settling `fee` for `insight`, computed without writing.
pub fn settlement_entries<F: VdpFetcher + ?Sized>(
    insight: &Insight,
    fee: u64,
    payer: Option<&CryptoAddress>,
    policy: &MindPolicy,
    fetcher: &F,
    now: i64,
) -> Result<Vec<LedgerEntry>, MindError> {
    if fee != insight.fee_charged {
        return Err(MindError::FeeMismatch {
            expected: insight.fee_charged,
            offered: fee,
        });
    }
    let resolved = Resolver::new(fetcher, policy.limits)
        .resolve(&insight.attribution)
        .map_err(MindError::ResolutionFailed)?;
    let (distributable, retained) = split_fee(fee, policy.retention_bp);
    let instructions = distribute(&resolved.document, distributable).map_err(MindError::Distribution)?;

    let query_ref = insight.query_ref.as_str();
    let mut entries = Vec::with_capacity(instructions.len() + 2);
    let mut received = LedgerEntry::new(LedgerKind::FeeReceived, query_ref, fee, now);
    received.counterparty_address = payer.cloned();
    entries.push(received);
    for instruction in &instructions {
        let mut e = LedgerEntry::new(LedgerKind::PaymentInstruction, query_ref, instruction.amount, now);
        e.counterparty_address = Some(instruction.address.clone());
        e.path = Some(instruction.path_string());
        entries.push(e);
    }
    if retained > 0 {
        entries.push(LedgerEntry::new(LedgerKind::Retention, query_ref, retained, now));
    }
    let report = conservation_of(&entries);
    assert!(report.holds(), "settlement does not conserve value: {report:?}");
    Ok(entries)
}

struct Issued {
    insight: Insight,
    payer: CryptoAddress,
}

/// Query execution and settlement over one node's stores.
pub struct MindEngine {
    sense: Arc<SenseStore>,
    derived: Arc<DerivedStore>,
    ledger: Arc<Ledger>,
    policy: MindPolicy,
    fetcher: Arc<dyn VdpFetcher + Send + Sync>,
    issued: Mutex<HashMap<String, Issued>>,
    settle_lock: Mutex<()>,
}

impl MindEngine {
    pub fn new(
        sense: Arc<SenseStore>,
        derived: Arc<DerivedStore>,
        ledger: Arc<Ledger>,
        policy: MindPolicy,
        fetcher: Arc<dyn VdpFetcher + Send + Sync>,
    ) -> Self {
        Self {
            sense,
            derived,
            ledger,
            policy,
            fetcher,
            issued: Mutex::new(HashMap::new()),
            settle_lock: Mutex::new(()),
        }
    }

    pub fn policy(&self) -> &MindPolicy {
        &self.policy
    }

    /// Public and Private records plus imported derived features matching
    /// the query's filter, in timestamp order. Sealed stubs are never seen.
    pub fn matching_records(&self, query: &MindQuery) -> Result<Vec<SenseRecord>, MindError> {
        let filter = query.filter();
        let mut records: Vec<SenseRecord> = self
            .sense
            .query(&filter)?
            .into_iter()
            .filter(|r| r.privacy != Privacy::Sealed)
            .collect();
        records.extend(self.derived.query(&filter)?.iter().map(|d| d.as_sense_record()));
        records.sort_by_key(|r| r.timestamp);
        Ok(records)
    }

    pub fn execute_query(&self, query: &MindQuery) -> Result<Insight, MindError> {
        query.validate()?;
        if query.offered_fee < self.policy.min_fee {
            return Err(MindError::FeeTooLow {
                offered: query.offered_fee,
                minimum: self.policy.min_fee,
            });
        }
        let records = self.matching_records(query)?;
        let computed = compute(&records, query, self.policy.k_min)?;
        let contributions: BTreeMap<String, Contribution> = computed
            .contributions
            .iter()
            .map(|(source, (weight, vdp))| {
                (
                    source.clone(),
                    Contribution {
                        weight: *weight,
                        payee: vdp.payee_node(),
                    },
                )
            })
            .collect();
        let attribution = build_attribution_vdp(&contributions).map_err(MindError::Distribution)?;
        let insight = Insight {
            result: computed.result,
            matched_count: computed.matched_count,
            attribution,
            fee_charged: query.offered_fee,
            query_ref: Uuid::new_v4().to_string(),
        };
        self.issued.lock().unwrap_or_else(|p| p.into_inner()).insert(
            insight.query_ref.clone(),
            Issued {
                insight: insight.clone(),
                payer: query.enterprise_payout_address.clone(),
            },
        );
        Ok(insight)
    }

    pub fn insight(&self, query_ref: &str) -> Option<Insight> {
        let issued = self.issued.lock().unwrap_or_else(|p| p.into_inner());
        issued.get(query_ref).map(|i| i.insight.clone())
    }

    /// Settle an issued insight by reference.
    pub fn settle_ref(&self, query_ref: &str, fee: u64) -> Result<Vec<LedgerEntry>, MindError> {
        let (insight, payer) = {
            let issued = self.issued.lock().unwrap_or_else(|p| p.into_inner());
            let i = issued
                .get(query_ref)
                .ok_or_else(|| MindError::UnknownQueryRef(query_ref.to_string()))?;
            (i.insight.clone(), i.payer.clone())
        };
        self.settle_with_payer(&insight, fee, Some(&payer))
    }

    pub fn settle(&self, insight: &Insight, fee: u64) -> Result<Vec<LedgerEntry>, MindError> {
        self.settle_with_payer(insight, fee, None)
    }

    /// Resolve, distribute and record one settlement. Either every entry is
    /// written or none is.
    fn settle_with_payer(
        &self,
        insight: &Insight,
        fee: u64,
        payer: Option<&CryptoAddress>,
    ) -> Result<Vec<LedgerEntry>, MindError> {
        let _serial = self.settle_lock.lock().unwrap_or_else(|p| p.into_inner());
        if self.ledger.has_fee(&insight.query_ref) {
            return Err(MindError::AlreadySettled(insight.query_ref.clone()));
        }
        let entries = settlement_entries(insight, fee, payer, &self.policy, &*self.fetcher, now_millis())?;
        self.ledger.append_batch(entries.clone())?;
        let report = self.ledger.conservation(&insight.query_ref);
        assert!(report.holds(), "ledger conservation violated: {report:?}");
        Ok(entries)
    }
}
