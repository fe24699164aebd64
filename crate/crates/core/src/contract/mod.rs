//! The evidence contract: ownership, submitter whitelist, per-trial manifests
//! of required datasets, the append-only metadata record array with its
//! trial index and counts, and the event log.
//!
//! The contract is a pure state machine. The ledger drives it by calling
//! [`Contract::apply`] once per transaction while sealing a block; every
//! check happens before any mutation, so a rejected call leaves the state
//! untouched.

mod call;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Reader, Writer};
use crate::digest::Digest;
use crate::identity::PublicKey;

pub use call::ContractCall;

pub type RecordId = u64;

/// Reasons a call is rejected. Stored inside sealed blocks, so the set of
/// variants and their tags are part of the on-disk format.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail")]
pub enum ContractError {
    #[error("sender is not the contract owner")]
    NotOwner,
    #[error("sender is not whitelisted")]
    NotWhitelisted,
    #[error("duplicate filename in manifest: {0}")]
    DuplicateFilename(String),
    #[error("manifest lists no filenames")]
    EmptyManifest,
    #[error("file hash is not a 64-character lowercase hex digest")]
    MalformedHash,
    #[error("required field is empty: {0}")]
    EmptyField(String),
    #[error("contract already deployed")]
    AlreadyDeployed,
}

impl ContractError {
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::NotOwner => "NotOwner",
            ContractError::NotWhitelisted => "NotWhitelisted",
            ContractError::DuplicateFilename(_) => "DuplicateFilename",
            ContractError::EmptyManifest => "EmptyManifest",
            ContractError::MalformedHash => "MalformedHash",
            ContractError::EmptyField(_) => "EmptyField",
            ContractError::AlreadyDeployed => "AlreadyDeployed",
        }
    }
}

impl Canonical for ContractError {
    fn encode(&self, w: &mut Writer) {
        match self {
            ContractError::NotOwner => w.u8(1),
            ContractError::NotWhitelisted => w.u8(2),
            ContractError::DuplicateFilename(name) => w.u8(3).str(name),
            ContractError::EmptyManifest => w.u8(4),
            ContractError::MalformedHash => w.u8(5),
            ContractError::EmptyField(field) => w.u8(6).str(field),
            ContractError::AlreadyDeployed => w.u8(7),
        };
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            1 => ContractError::NotOwner,
            2 => ContractError::NotWhitelisted,
            3 => ContractError::DuplicateFilename(r.string()?),
            4 => ContractError::EmptyManifest,
            5 => ContractError::MalformedHash,
            6 => ContractError::EmptyField(r.string()?),
            7 => ContractError::AlreadyDeployed,
            tag => {
                return Err(DecodeError::UnknownTag {
                    what: "contract error",
                    tag,
                })
            }
        })
    }
}

/// Errors from read-only queries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("record {0} not found")]
    NotFound(RecordId),
    #[error("no manifest for trial {0:?}")]
    NoManifest(String),
    #[error("cursor {cursor} is beyond the event log ({len} events)")]
    BadCursor { cursor: u64, len: u64 },
}

/// The five-field evidence descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub filename: String,
    pub trial_id: String,
    pub file_hash: Digest,
    /// Seconds since the Unix epoch, copied from the enclosing block.
    pub timestamp: u64,
    pub submitter: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedRecord {
    pub id: RecordId,
    #[serde(flatten)]
    pub record: MetadataRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialManifest {
    pub trial_id: String,
    pub required_filenames: Vec<String>,
}

impl TrialManifest {
    /// Checks the manifest invariants: non-empty, no empty names, no duplicates.
    pub fn new(trial_id: String, filenames: Vec<String>) -> Result<Self, ContractError> {
        if trial_id.is_empty() {
            return Err(ContractError::EmptyField("trial_id".into()));
        }
        if filenames.is_empty() {
            return Err(ContractError::EmptyManifest);
        }
        let mut seen = BTreeSet::new();
        for name in &filenames {
            if name.is_empty() {
                return Err(ContractError::EmptyField("filename".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ContractError::DuplicateFilename(name.clone()));
            }
        }
        Ok(TrialManifest {
            trial_id,
            required_filenames: filenames,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    RecordAdded {
        record_id: RecordId,
        record: MetadataRecord,
    },
    ManifestSet {
        manifest: TrialManifest,
    },
    /// `changed` is false for an idempotent re-add or re-remove.
    WhitelistChanged {
        key: PublicKey,
        added: bool,
        changed: bool,
    },
    OwnershipTransferred {
        previous: PublicKey,
        new_owner: PublicKey,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// Position in the event log; a listener's cursor after this event is `seq + 1`.
    pub seq: u64,
    pub block_height: u64,
    pub tx_index: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Where in the chain a call is being applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    pub sender: PublicKey,
    pub timestamp: u64,
    pub block_height: u64,
    pub tx_index: u32,
}

/// Successful call result. Only `record_metadata` produces a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallOutput {
    pub record_id: Option<RecordId>,
}

/// Which recorded filenames of a trial are still owed against its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completeness {
    pub trial_id: String,
    pub required: Vec<String>,
    /// Distinct recorded filenames in order of first submission, including
    /// files the manifest does not list.
    pub submitted: Vec<String>,
    /// Manifest entries with no record, in manifest order.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    owner: PublicKey,
    whitelist: BTreeSet<PublicKey>,
    manifests: BTreeMap<String, TrialManifest>,
    records: Vec<MetadataRecord>,
    trial_index: BTreeMap<String, Vec<RecordId>>,
    trial_count: BTreeMap<String, u64>,
    events: Vec<Event>,
}

impl Contract {
    pub fn deploy(deployer: PublicKey) -> Self {
        Contract {
            owner: deployer,
            whitelist: BTreeSet::new(),
            manifests: BTreeMap::new(),
            records: Vec::new(),
            trial_index: BTreeMap::new(),
            trial_count: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn apply(
        &mut self,
        ctx: &CallContext,
        call: &ContractCall,
    ) -> Result<CallOutput, ContractError> {
        match call {
            ContractCall::Deploy => Err(ContractError::AlreadyDeployed),
            ContractCall::TransferOwnership { new_owner } => {
                self.require_owner(ctx)?;
                let previous = std::mem::replace(&mut self.owner, *new_owner);
                self.emit(
                    ctx,
                    EventKind::OwnershipTransferred {
                        previous,
                        new_owner: *new_owner,
                    },
                );
                Ok(CallOutput::default())
            }
            ContractCall::WhitelistAdd { key } => {
                self.require_owner(ctx)?;
                let changed = self.whitelist.insert(*key);
                self.emit(
                    ctx,
                    EventKind::WhitelistChanged {
                        key: *key,
                        added: true,
                        changed,
                    },
                );
                Ok(CallOutput::default())
            }
            ContractCall::WhitelistRemove { key } => {
                self.require_owner(ctx)?;
                let changed = self.whitelist.remove(key);
                self.emit(
                    ctx,
                    EventKind::WhitelistChanged {
                        key: *key,
                        added: false,
                        changed,
                    },
                );
                Ok(CallOutput::default())
            }
            ContractCall::SetManifest {
                trial_id,
                filenames,
            } => {
                self.require_owner(ctx)?;
                let manifest = TrialManifest::new(trial_id.clone(), filenames.clone())?;
                self.manifests.insert(trial_id.clone(), manifest.clone());
                self.emit(ctx, EventKind::ManifestSet { manifest });
                Ok(CallOutput::default())
            }
            ContractCall::RecordMetadata {
                filename,
                trial_id,
                file_hash,
            } => {
                if !self.may_submit(&ctx.sender) {
                    return Err(ContractError::NotWhitelisted);
                }
                if filename.is_empty() {
                    return Err(ContractError::EmptyField("filename".into()));
                }
                if trial_id.is_empty() {
                    return Err(ContractError::EmptyField("trial_id".into()));
                }
                let file_hash =
                    Digest::from_hex(file_hash).map_err(|_| ContractError::MalformedHash)?;
                let record = MetadataRecord {
                    filename: filename.clone(),
                    trial_id: trial_id.clone(),
                    file_hash,
                    timestamp: ctx.timestamp,
                    submitter: ctx.sender,
                };
                let id = self.records.len() as RecordId;
                self.records.push(record.clone());
                self.trial_index.entry(trial_id.clone()).or_default().push(id);
                *self.trial_count.entry(trial_id.clone()).or_default() += 1;
                self.emit(
                    ctx,
                    EventKind::RecordAdded {
                        record_id: id,
                        record,
                    },
                );
                Ok(CallOutput {
                    record_id: Some(id),
                })
            }
        }
    }

    fn require_owner(&self, ctx: &CallContext) -> Result<(), ContractError> {
        if ctx.sender == self.owner {
            Ok(())
        } else {
            Err(ContractError::NotOwner)
        }
    }

    fn emit(&mut self, ctx: &CallContext, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(Event {
            seq,
            block_height: ctx.block_height,
            tx_index: ctx.tx_index,
            kind,
        });
    }

    pub fn owner(&self) -> PublicKey {
        self.owner
    }

    pub fn whitelist(&self) -> &BTreeSet<PublicKey> {
        &self.whitelist
    }

    /// The owner is implicitly allowed to submit metadata.
    pub fn may_submit(&self, key: &PublicKey) -> bool {
        *key == self.owner || self.whitelist.contains(key)
    }

    pub fn manifest(&self, trial_id: &str) -> Option<&TrialManifest> {
        self.manifests.get(trial_id)
    }

    pub fn trials(&self) -> BTreeSet<&str> {
        self.manifests
            .keys()
            .chain(self.trial_index.keys())
            .map(String::as_str)
            .collect()
    }

    pub fn knows_trial(&self, trial_id: &str) -> bool {
        self.manifests.contains_key(trial_id) || self.trial_index.contains_key(trial_id)
    }

    pub fn records(&self) -> &[MetadataRecord] {
        &self.records
    }

    pub fn record_count(&self) -> u64 {
        self.records.len() as u64
    }

    /// Record IDs for a trial in ascending order; empty for an unknown trial.
    pub fn get_record_ids(&self, trial_id: &str) -> &[RecordId] {
        self.trial_index
            .get(trial_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn get_record(&self, id: RecordId) -> Result<&MetadataRecord, QueryError> {
        usize::try_from(id)
            .ok()
            .and_then(|i| self.records.get(i))
            .ok_or(QueryError::NotFound(id))
    }

    pub fn get_count(&self, trial_id: &str) -> u64 {
        self.trial_count.get(trial_id).copied().unwrap_or(0)
    }

    /// Two-phase retrieval: the ID list, then each record by ID.
    pub fn trial_records(&self, trial_id: &str) -> Vec<IndexedRecord> {
        self.get_record_ids(trial_id)
            .iter()
            .map(|&id| IndexedRecord {
                id,
                record: self.records[id as usize].clone(),
            })
            .collect()
    }

    pub fn completeness(&self, trial_id: &str) -> Result<Completeness, QueryError> {
        let manifest = self
            .manifests
            .get(trial_id)
            .ok_or_else(|| QueryError::NoManifest(trial_id.to_string()))?;
        let mut submitted: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        for &id in self.get_record_ids(trial_id) {
            let name = &self.records[id as usize].filename;
            if seen.insert(name.as_str()) {
                submitted.push(name.clone());
            }
        }
        let missing = manifest
            .required_filenames
            .iter()
            .filter(|f| !seen.contains(f.as_str()))
            .cloned()
            .collect();
        Ok(Completeness {
            trial_id: trial_id.to_string(),
            required: manifest.required_filenames.clone(),
            submitted,
            missing,
        })
    }

    /// Every record for `(trial_id, filename)`, oldest first.
    pub fn history(&self, trial_id: &str, filename: &str) -> Vec<IndexedRecord> {
        self.get_record_ids(trial_id)
            .iter()
            .filter(|&&id| self.records[id as usize].filename == filename)
            .map(|&id| IndexedRecord {
                id,
                record: self.records[id as usize].clone(),
            })
            .collect()
    }

    pub fn event_count(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events_since(&self, cursor: u64) -> Result<&[Event], QueryError> {
        let len = self.event_count();
        if cursor > len {
            return Err(QueryError::BadCursor { cursor, len });
        }
        Ok(&self.events[cursor as usize..])
    }
}
