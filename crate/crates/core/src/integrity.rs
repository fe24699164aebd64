//! Cross-checks retrieved datasets against the digests recorded on the ledger.

use std::io::{self, Read};

use serde::{Deserialize, Serialize};

use crate::blobstore::{BlobError, Cluster, ContentId, PeerId};
use crate::contract::{Completeness, Contract, QueryError, RecordId};
use crate::digest::Digest;

pub fn hash_file(bytes: &[u8]) -> Digest {
    Digest::of(bytes)
}

pub fn hash_reader<R: Read>(reader: R) -> io::Result<Digest> {
    Digest::of_reader(reader)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Verified,
    Mismatch,
    NoRecord,
    NoBlob,
}

impl VerdictStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictStatus::Verified => "verified",
            VerdictStatus::Mismatch => "mismatch",
            VerdictStatus::NoRecord => "no-record",
            VerdictStatus::NoBlob => "no-blob",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSelection {
    Latest,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub filename: String,
    pub trial_id: String,
    pub record_id: Option<RecordId>,
    pub selection: RecordSelection,
    pub ledger_hash: Option<Digest>,
    pub computed_hash: Option<Digest>,
    pub status: VerdictStatus,
    /// Peers whose copy failed re-hashing during retrieval.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corrupt_peers: Vec<PeerId>,
}

/// Verifies one dataset. Without `record_id` the latest record for
/// `(trial_id, filename)` is the target; with it, exactly that record is.
pub fn verify_collection(
    contract: &Contract,
    cluster: &Cluster,
    trial_id: &str,
    filename: &str,
    record_id: Option<RecordId>,
) -> VerificationVerdict {
    let mut verdict = VerificationVerdict {
        filename: filename.to_string(),
        trial_id: trial_id.to_string(),
        record_id: None,
        selection: if record_id.is_some() {
            RecordSelection::Explicit
        } else {
            RecordSelection::Latest
        },
        ledger_hash: None,
        computed_hash: None,
        status: VerdictStatus::NoRecord,
        corrupt_peers: Vec::new(),
    };
    let target = match record_id {
        Some(id) => contract
            .get_record(id)
            .ok()
            .filter(|r| r.trial_id == trial_id && r.filename == filename)
            .map(|r| (id, r.file_hash)),
        None => contract
            .history(trial_id, filename)
            .last()
            .map(|r| (r.id, r.record.file_hash)),
    };
    let Some((id, ledger_hash)) = target else {
        return verdict;
    };
    verdict.record_id = Some(id);
    verdict.ledger_hash = Some(ledger_hash);

    match cluster.get_blob(&ContentId::from_digest(ledger_hash)) {
        Ok(retrieved) => {
            let computed = hash_file(&retrieved.bytes);
            verdict.computed_hash = Some(computed);
            verdict.corrupt_peers = retrieved.corrupt_peers;
            verdict.status = if computed == ledger_hash {
                VerdictStatus::Verified
            } else {
                VerdictStatus::Mismatch
            };
        }
        Err(BlobError::CorruptBlob {
            peers, computed, ..
        }) => {
            verdict.computed_hash = Some(computed);
            verdict.corrupt_peers = peers;
            verdict.status = VerdictStatus::Mismatch;
        }
        Err(_) => verdict.status = VerdictStatus::NoBlob,
    }
    verdict
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub total: usize,
    pub verified: usize,
    pub mismatch: usize,
    pub no_blob: usize,
    /// Manifest entries with no record.
    pub missing: usize,
}

impl VerificationSummary {
    pub fn all_verified(&self) -> bool {
        self.verified == self.total
    }

    pub fn has_integrity_failure(&self) -> bool {
        self.mismatch > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialVerification {
    pub trial_id: String,
    pub completeness: Completeness,
    pub verdicts: Vec<VerificationVerdict>,
    pub summary: VerificationSummary,
}

/// One verdict per manifest filename (manifest order), then one per extra
/// submitted filename (first-submission order).
pub fn verify_trial(
    contract: &Contract,
    cluster: &Cluster,
    trial_id: &str,
) -> Result<TrialVerification, QueryError> {
    let completeness = contract.completeness(trial_id)?;
    let names = completeness.required.iter().chain(
        completeness
            .submitted
            .iter()
            .filter(|s| !completeness.required.contains(s)),
    );
    let verdicts: Vec<VerificationVerdict> = names
        .map(|name| verify_collection(contract, cluster, trial_id, name, None))
        .collect();
    let mut summary = VerificationSummary {
        total: verdicts.len(),
        ..Default::default()
    };
    for v in &verdicts {
        match v.status {
            VerdictStatus::Verified => summary.verified += 1,
            VerdictStatus::Mismatch => summary.mismatch += 1,
            VerdictStatus::NoBlob => summary.no_blob += 1,
            VerdictStatus::NoRecord => summary.missing += 1,
        }
    }
    Ok(TrialVerification {
        trial_id: trial_id.to_string(),
        completeness,
        verdicts,
        summary,
    })
}
