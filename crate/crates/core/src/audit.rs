//! Hash-chained, append-only audit log.
//!
//! Records carry digests only. Each record's `this_hash` is
//! `sha256(prev_hash ‖ canonical(record without this_hash))`, and the first
//! record chains from the all-zero digest.

use crate::canonical::{canonicalize, CanonicalError, Digest, Value};
use crate::store::LineFile;
use crate::time::{Clock, Timestamp};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::{Arc, Mutex};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    ContractReceived,
    TokenVerified,
    ResponseIssued,
    DeclineIssued,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sequence: u64,
    pub recorded_at: Timestamp,
    pub kind: AuditKind,
    pub contract_id: Uuid,
    /// The dataset the contract resolved to, when known. Used for subject transparency.
    pub dataset_id: Option<Uuid>,
    pub payload_digest: Digest,
    pub prev_hash: Digest,
    pub this_hash: Digest,
}

impl AuditRecord {
    /// Recomputes the chain hash from the record's other fields.
    pub fn compute_hash(&self) -> Result<Digest, CanonicalError> {
        let body = Value::from_serialize(self)?.without_keys(&["this_hash"]);
        Ok(Digest::of_parts(&[&self.prev_hash.0, &canonicalize(&body)?]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Ok,
    /// First sequence position at which genesis, gaplessness or the hash recurrence fails.
    BrokenAt(u64),
    /// The chain is internally consistent but does not contain the expected head.
    HeadMismatch,
}

/// Checks genesis, gaplessness and the hash recurrence; optionally that
/// `expected_head` is one of the record hashes (or the empty-log zero digest).
pub fn verify_chain(records: &[AuditRecord], expected_head: Option<Digest>) -> ChainStatus {
    let mut prev = Digest::ZERO;
    for (i, r) in records.iter().enumerate() {
        let i = i as u64;
        let hash_ok = r.compute_hash().is_ok_and(|h| h == r.this_hash);
        if r.sequence != i || r.prev_hash != prev || !hash_ok {
            return ChainStatus::BrokenAt(i);
        }
        prev = r.this_hash;
    }
    match expected_head {
        Some(head) if head != Digest::ZERO && !records.iter().any(|r| r.this_hash == head) => ChainStatus::HeadMismatch,
        _ => ChainStatus::Ok,
    }
}

/// Reads and checks a log file. An unparsable line counts as broken at its position.
pub fn verify_file(path: &Path, expected_head: Option<Digest>) -> std::io::Result<ChainStatus> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.is_empty()).enumerate() {
        match serde_json::from_str::<AuditRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) => {
                return Ok(match verify_chain(&records, None) {
                    ChainStatus::Ok => ChainStatus::BrokenAt(i as u64),
                    broken => broken,
                })
            }
        }
    }
    Ok(verify_chain(&records, expected_head))
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("existing audit log is broken at sequence {0}")]
    Broken(u64),
    #[error("existing audit log line {0} is unreadable")]
    Unreadable(usize),
}

struct Inner {
    file: Option<LineFile>,
    records: Vec<AuditRecord>,
}

/// The log. Appends are serialized; each is durable before `append` returns.
pub struct AuditLog {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
}

impl AuditLog {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        AuditLog { inner: Mutex::new(Inner { file: None, records: Vec::new() }), clock }
    }

    /// Opens or creates a log file. Refuses to continue a broken chain.
    pub fn open(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, AuditError> {
        let (file, lines) = LineFile::open(path)?;
        let records = lines
            .iter()
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|_| AuditError::Unreadable(i + 1)))
            .collect::<Result<Vec<AuditRecord>, _>>()?;
        if let ChainStatus::BrokenAt(seq) = verify_chain(&records, None) {
            return Err(AuditError::Broken(seq));
        }
        Ok(AuditLog { inner: Mutex::new(Inner { file: Some(file), records }), clock })
    }

    /// Chains a record for a document with the given canonical digest.
    pub fn append(
        &self,
        kind: AuditKind,
        contract_id: Uuid,
        dataset_id: Option<Uuid>,
        payload_digest: Digest,
    ) -> Result<AuditRecord, AuditError> {
        let mut inner = self.inner.lock().unwrap();
        let prev_hash = inner.records.last().map_or(Digest::ZERO, |r| r.this_hash);
        let mut record = AuditRecord {
            sequence: inner.records.len() as u64,
            recorded_at: self.clock.now(),
            kind,
            contract_id,
            dataset_id,
            payload_digest,
            prev_hash,
            this_hash: Digest::ZERO,
        };
        record.this_hash = record.compute_hash()?;
        if let Some(file) = inner.file.as_mut() {
            file.append(&canonicalize(&Value::from_serialize(&record)?)?)?;
        }
        inner.records.push(record.clone());
        Ok(record)
    }

    pub fn head(&self) -> Digest {
        self.inner.lock().unwrap().records.last().map_or(Digest::ZERO, |r| r.this_hash)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.inner.lock().unwrap().records.clone()
    }

    /// Records about datasets that hold rows for the subject, in sequence order.
    pub fn query_by_subject(&self, dataset_holds_subject: impl Fn(Uuid) -> bool) -> Vec<AuditRecord> {
        self.inner
            .lock()
            .unwrap()
            .records
            .iter()
            .filter(|r| r.dataset_id.is_some_and(&dataset_holds_subject))
            .cloned()
            .collect()
    }

    pub fn verify(&self) -> ChainStatus {
        verify_chain(&self.inner.lock().unwrap().records, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ManualClock;

    fn clock() -> Arc<ManualClock> {
        Arc::new(ManualClock::new(Timestamp::from_unix(1_700_000_000)))
    }

    fn filled(n: usize) -> AuditLog {
        let log = AuditLog::in_memory(clock());
        for i in 0..n {
            log.append(AuditKind::ContractReceived, Uuid::new_v4(), None, Digest::of(&i.to_le_bytes())).unwrap();
        }
        log
    }

    #[test]
    fn genesis_and_chain_rule() {
        let log = filled(2);
        let r = log.records();
        assert_eq!(r[0].sequence, 0);
        assert_eq!(r[0].prev_hash, Digest::ZERO);
        assert_eq!(r[1].prev_hash, r[0].this_hash);
        assert_eq!(log.verify(), ChainStatus::Ok);
    }

    #[test]
    fn local_tamper_is_located() {
        let mut records = filled(20).records();
        records[7].payload_digest.0[0] ^= 1;
        assert_eq!(verify_chain(&records, None), ChainStatus::BrokenAt(7));
    }

    #[test]
    fn gaps_and_reordering_break() {
        let mut records = filled(5).records();
        records.remove(2);
        assert_eq!(verify_chain(&records, None), ChainStatus::BrokenAt(2));
    }

    #[test]
    fn truncation_detected_against_head() {
        let log = filled(10);
        let head = log.head();
        let mut records = log.records();
        assert_eq!(verify_chain(&records, Some(head)), ChainStatus::Ok);
        records.truncate(6);
        assert_eq!(verify_chain(&records, None), ChainStatus::Ok);
        assert_eq!(verify_chain(&records, Some(head)), ChainStatus::HeadMismatch);
    }

    #[test]
    fn file_round_trip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.ndjson");
        let head = {
            let log = AuditLog::open(&path, clock()).unwrap();
            log.append(AuditKind::ContractReceived, Uuid::new_v4(), None, Digest::of(b"a")).unwrap();
            log.head()
        };
        let log = AuditLog::open(&path, clock()).unwrap();
        assert_eq!(log.head(), head);
        let r = log.append(AuditKind::ResponseIssued, Uuid::new_v4(), None, Digest::of(b"b")).unwrap();
        assert_eq!(r.sequence, 1);
        assert_eq!(verify_file(&path, Some(log.head())).unwrap(), ChainStatus::Ok);
    }

    #[test]
    fn reopening_a_tampered_file_fails_closed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.ndjson");
        {
            let log = AuditLog::open(&path, clock()).unwrap();
            for _ in 0..3 {
                log.append(AuditKind::ContractReceived, Uuid::new_v4(), None, Digest::of(b"a")).unwrap();
            }
        }
        let text = std::fs::read_to_string(&path).unwrap().replacen("contract-received", "decline-issued", 2);
        std::fs::write(&path, text).unwrap();
        assert_eq!(verify_file(&path, None).unwrap(), ChainStatus::BrokenAt(0));
        assert!(matches!(AuditLog::open(&path, clock()), Err(AuditError::Broken(0))));
    }

    #[test]
    fn subject_query_filters_by_dataset() {
        let log = AuditLog::in_memory(clock());
        let (mine, other) = (Uuid::new_v4(), Uuid::new_v4());
        log.append(AuditKind::ContractReceived, Uuid::new_v4(), Some(mine), Digest::ZERO).unwrap();
        log.append(AuditKind::ContractReceived, Uuid::new_v4(), Some(other), Digest::ZERO).unwrap();
        log.append(AuditKind::ContractReceived, Uuid::new_v4(), None, Digest::ZERO).unwrap();
        let hits = log.query_by_subject(|d| d == mine);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].sequence, 0);
    }
}
