//! Safe-answer policy: k-threshold suppression and the differencing guard.

use crate::canonical::normalize_decimal;
use crate::dsl::{AggValue, AggregateRow, AggregateTable, RowId};
use crate::signing::PrincipalId;
use rust_decimal::Decimal;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use thiserror::Error;
use uuid::Uuid;

/// The fixed wire token replacing suppressed values.
pub const SUPPRESSION_MARKER: &str = "SUPPRESSED";

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("k_min must be at least 2, got {0}")]
    KMinTooSmall(usize),
    #[error("differencing_window must be positive")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct PolicyConfig {
    k_min: usize,
    differencing_window: usize,
}

#[derive(Deserialize)]
struct RawPolicy {
    #[serde(default = "default_k")]
    k_min: usize,
    #[serde(default = "default_window")]
    differencing_window: usize,
}

fn default_k() -> usize {
    10
}

fn default_window() -> usize {
    100
}

impl TryFrom<RawPolicy> for PolicyConfig {
    type Error = PolicyError;

    fn try_from(r: RawPolicy) -> Result<Self, Self::Error> {
        PolicyConfig::new(r.k_min, r.differencing_window)
    }
}

impl PolicyConfig {
    pub fn new(k_min: usize, differencing_window: usize) -> Result<Self, PolicyError> {
        if k_min < 2 {
            return Err(PolicyError::KMinTooSmall(k_min));
        }
        if differencing_window == 0 {
            return Err(PolicyError::EmptyWindow);
        }
        Ok(PolicyConfig { k_min, differencing_window })
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn differencing_window(&self) -> usize {
        self.differencing_window
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { k_min: default_k(), differencing_window: default_window() }
    }
}

/// A releasable cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    Number(Decimal),
    Histogram(BTreeMap<String, u64>),
    Suppressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohortSize {
    Count(u64),
    Suppressed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeRow {
    pub key: Vec<String>,
    pub cells: BTreeMap<String, Cell>,
    pub cohort_size: CohortSize,
}

impl SafeRow {
    pub fn is_suppressed(&self) -> bool {
        self.cohort_size == CohortSize::Suppressed
    }
}

/// The only result form that ever leaves a provider. Carries no row identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeTable {
    pub group_key_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<SafeRow>,
}

impl SafeTable {
    /// Re-expresses a released table as an evaluation table. Cohort identifiers
    /// are synthetic: released rows get `0..size`, suppressed rows an empty cohort.
    pub fn to_aggregate_form(&self) -> AggregateTable {
        let rows = self
            .rows
            .iter()
            .map(|r| AggregateRow {
                key: r.key.clone(),
                values: r
                    .cells
                    .iter()
                    .map(|(k, c)| {
                        let v = match c {
                            Cell::Number(d) => AggValue::Number(*d),
                            Cell::Histogram(h) => AggValue::Histogram(h.clone()),
                            Cell::Suppressed => AggValue::Number(Decimal::ZERO),
                        };
                        (k.clone(), v)
                    })
                    .collect(),
                cohort: match r.cohort_size {
                    CohortSize::Count(n) => (0..n as RowId).collect(),
                    CohortSize::Suppressed => Vec::new(),
                },
            })
            .collect();
        AggregateTable {
            group_key_columns: self.group_key_columns.clone(),
            value_columns: self.value_columns.clone(),
            rows,
        }
    }
}

/// Suppresses every group whose cohort is smaller than `k_min`; larger groups
/// pass through unchanged. Row identifiers are dropped.
pub fn apply_policy(table: &AggregateTable, config: &PolicyConfig) -> SafeTable {
    let rows = table
        .rows
        .iter()
        .map(|row| {
            if row.cohort_size() < config.k_min {
                SafeRow {
                    key: row.key.clone(),
                    cells: row.values.keys().map(|k| (k.clone(), Cell::Suppressed)).collect(),
                    cohort_size: CohortSize::Suppressed,
                }
            } else {
                SafeRow {
                    key: row.key.clone(),
                    cells: row
                        .values
                        .iter()
                        .map(|(k, v)| {
                            let c = match v {
                                AggValue::Number(d) => Cell::Number(*d),
                                AggValue::Histogram(h) => Cell::Histogram(h.clone()),
                            };
                            (k.clone(), c)
                        })
                        .collect(),
                    cohort_size: CohortSize::Count(row.cohort_size() as u64),
                }
            }
        })
        .collect();
    SafeTable {
        group_key_columns: table.group_key_columns.clone(),
        value_columns: table.value_columns.clone(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub contract_id: Uuid,
    pub cohorts: Vec<Vec<RowId>>,
}

type HistoryKey = (PrincipalId, Uuid);

/// Remembered cohorts per (querier, dataset), bounded by the differencing window.
#[derive(Debug, Default)]
pub struct QueryHistory {
    buffers: Mutex<HashMap<HistoryKey, Arc<Mutex<VecDeque<HistoryEntry>>>>>,
}

impl QueryHistory {
    pub fn new() -> Self {
        Self::default()
    }

    fn buffer(&self, key: HistoryKey) -> Arc<Mutex<VecDeque<HistoryEntry>>> {
        self.buffers.lock().unwrap().entry(key).or_default().clone()
    }

    pub fn len(&self, querier: &PrincipalId, dataset: Uuid) -> usize {
        self.buffers
            .lock()
            .unwrap()
            .get(&(querier.clone(), dataset))
            .map_or(0, |b| b.lock().unwrap().len())
    }

    pub fn entries(&self, querier: &PrincipalId, dataset: Uuid) -> Vec<HistoryEntry> {
        self.buffers
            .lock()
            .unwrap()
            .get(&(querier.clone(), dataset))
            .map_or_else(Vec::new, |b| b.lock().unwrap().iter().cloned().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Allow,
    RelatedQueryDetected,
}

/// Declines when any new cohort differs from any remembered cohort of the same
/// querier and dataset by between 1 and `k_min - 1` rows. Identical cohorts are
/// allowed. On allow the new cohorts are recorded; check and record are atomic
/// per (querier, dataset).
pub fn differencing_guard(
    history: &QueryHistory,
    querier: &PrincipalId,
    dataset: Uuid,
    contract_id: Uuid,
    new_cohorts: &[Vec<RowId>],
    config: &PolicyConfig,
) -> GuardDecision {
    let buffer = history.buffer((querier.clone(), dataset));
    let mut buffer = buffer.lock().unwrap();
    for entry in buffer.iter() {
        for old in &entry.cohorts {
            for new in new_cohorts {
                let d = symmetric_difference_capped(old, new, config.k_min);
                if d > 0 && d < config.k_min {
                    return GuardDecision::RelatedQueryDetected;
                }
            }
        }
    }
    buffer.push_back(HistoryEntry { contract_id, cohorts: new_cohorts.to_vec() });
    while buffer.len() > config.differencing_window {
        buffer.pop_front();
    }
    GuardDecision::Allow
}

/// |a △ b| for sorted slices, stopping early once `cap` is reached.
fn symmetric_difference_capped(a: &[RowId], b: &[RowId], cap: usize) -> usize {
    // Sizes alone can already settle it.
    if a.len().abs_diff(b.len()) >= cap {
        return cap;
    }
    let (mut i, mut j, mut d) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                d += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                d += 1;
                j += 1;
            }
        }
        if d >= cap {
            return cap;
        }
    }
    (d + (a.len() - i) + (b.len() - j)).min(cap)
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Number(d) => s.serialize_str(&normalize_decimal(*d)),
            Cell::Histogram(h) => h.serialize(s),
            Cell::Suppressed => s.serialize_str(SUPPRESSION_MARKER),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct CellVisitor;

        impl<'de> Visitor<'de> for CellVisitor {
            type Value = Cell;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a decimal string, \"{SUPPRESSION_MARKER}\", or a histogram object")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Cell, E> {
                if v == SUPPRESSION_MARKER {
                    Ok(Cell::Suppressed)
                } else {
                    Decimal::from_str(v).map(Cell::Number).map_err(E::custom)
                }
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Cell, A::Error> {
                let mut h = BTreeMap::new();
                while let Some((k, v)) = map.next_entry::<String, u64>()? {
                    h.insert(k, v);
                }
                Ok(Cell::Histogram(h))
            }
        }

        d.deserialize_any(CellVisitor)
    }
}

impl Serialize for CohortSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CohortSize::Count(n) => s.serialize_u64(*n),
            CohortSize::Suppressed => s.serialize_str(SUPPRESSION_MARKER),
        }
    }
}

impl<'de> Deserialize<'de> for CohortSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(CohortSize::Count(n)),
            Raw::Marker(m) if m == SUPPRESSION_MARKER => Ok(CohortSize::Suppressed),
            Raw::Marker(m) => Err(de::Error::custom(format!("unexpected cohort size `{m}`"))),
        }
    }
}
