//! Request and response bodies shared by the server, the CLI client and any
//! other consumer of the JSON API.
//!
//! Writes carry a detached signature: the client builds the
//! [`ContractCall`] the endpoint implies, signs it with
//! [`Transaction::sign`], and sends `sender`, `nonce` and `signature`
//! alongside the call arguments. The server rebuilds the same call from the
//! path and body and checks the signature against it.

use custody_core::blobstore::{ContentId, PeerId, PeerRole, PinStatus};
use custody_core::contract::{ContractCall, Event};
use custody_core::ledger::{Receipt, SealedTx, Transaction, TxId};
use custody_core::{Digest, Identity, PublicKey, Signature};
use serde::{Deserialize, Serialize};

/// Authentication fields attached to every write request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Auth {
    pub sender: PublicKey,
    pub nonce: u64,
    pub signature: Signature,
}

impl Auth {
    pub fn sign(identity: &Identity, call: &ContractCall, nonce: u64) -> Self {
        let tx = Transaction::sign(identity, call.clone(), nonce);
        Auth {
            sender: tx.sender,
            nonce: tx.nonce,
            signature: tx.signature,
        }
    }

    pub fn into_transaction(self, call: ContractCall) -> Transaction {
        Transaction {
            call,
            sender: self.sender,
            nonce: self.nonce,
            signature: self.signature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRequest {
    pub filenames: Vec<String>,
    #[serde(flatten)]
    pub auth: Auth,
}

impl ManifestRequest {
    pub fn call(&self, trial_id: &str) -> ContractCall {
        ContractCall::SetManifest {
            trial_id: trial_id.to_string(),
            filenames: self.filenames.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitelistRequest {
    pub key: PublicKey,
    #[serde(flatten)]
    pub auth: Auth,
}

impl WhitelistRequest {
    pub fn call(&self, add: bool) -> ContractCall {
        if add {
            ContractCall::WhitelistAdd { key: self.key }
        } else {
            ContractCall::WhitelistRemove { key: self.key }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerRequest {
    pub new_owner: PublicKey,
    #[serde(flatten)]
    pub auth: Auth,
}

impl OwnerRequest {
    pub fn call(&self) -> ContractCall {
        ContractCall::TransferOwnership {
            new_owner: self.new_owner,
        }
    }
}

/// What accompanies a record submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordPayload {
    /// File bytes; the server stores them and computes the digest.
    Bytes(Vec<u8>),
    /// A digest computed elsewhere; the bytes may be uploaded later with
    /// `PUT /blobs/{cid}`.
    Hash(Digest),
}

impl RecordPayload {
    pub fn digest(&self) -> Digest {
        match self {
            RecordPayload::Bytes(b) => Digest::of(b),
            RecordPayload::Hash(d) => *d,
        }
    }
}

/// A record submission. Over HTTP this travels as `multipart/form-data`
/// with fields `filename`, `file` or `file_hash`, `sender`, `nonce` and
/// `signature`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordUpload {
    pub filename: String,
    pub payload: RecordPayload,
    pub auth: Auth,
}

impl RecordUpload {
    pub fn call(&self, trial_id: &str) -> ContractCall {
        record_call(trial_id, &self.filename, &self.payload.digest())
    }
}

pub fn record_call(trial_id: &str, filename: &str, digest: &Digest) -> ContractCall {
    ContractCall::RecordMetadata {
        filename: filename.to_string(),
        trial_id: trial_id.to_string(),
        file_hash: digest.to_hex(),
    }
}

/// Result of a write. In immediate mode the transaction is sealed before the
/// response; in interval mode it is queued and the client polls
/// `GET /tx/{id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum WriteResponse {
    Sealed { receipt: Receipt },
    Pending { tx_id: TxId, position: usize },
}

impl WriteResponse {
    pub fn tx_id(&self) -> TxId {
        match self {
            WriteResponse::Sealed { receipt } => receipt.tx_id,
            WriteResponse::Pending { tx_id, .. } => *tx_id,
        }
    }

    pub fn receipt(&self) -> Option<&Receipt> {
        match self {
            WriteResponse::Sealed { receipt } => Some(receipt),
            WriteResponse::Pending { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordResponse {
    #[serde(flatten)]
    pub write: WriteResponse,
    /// Set once the record is sealed.
    pub record_id: Option<u64>,
    pub file_hash: Digest,
    pub cid: ContentId,
    /// Whether the bytes were stored in the cluster by this request.
    pub stored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobPutResponse {
    pub cid: ContentId,
    pub status: Option<PinStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceResponse {
    pub sender: PublicKey,
    pub next_nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxResponse {
    pub tx_id: TxId,
    #[serde(flatten)]
    pub state: TxState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TxState {
    Sealed { receipt: Receipt, sealed: SealedTx },
    Pending { position: usize, tx: Transaction },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<Event>,
    /// Cursor to resume from: the number of events seen so far.
    pub next_cursor: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerView {
    pub id: PeerId,
    pub role: PeerRole,
    pub online: bool,
    pub blobs: usize,
    pub stored_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub height: u64,
    pub tip_hash: Digest,
    pub tip_timestamp: u64,
    pub pending: usize,
    pub owner: PublicKey,
    pub whitelist: Vec<PublicKey>,
    pub record_count: u64,
    pub event_count: u64,
    pub trials: Vec<String>,
    pub seal_mode: crate::config::SealMode,
    pub replication_factor: u32,
    pub peers: Vec<PeerView>,
    pub pins: usize,
}

/// Error body returned with every non-2xx status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    /// Present when the request produced a sealed, failed transaction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receipt: Option<Box<Receipt>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ApiError,
}

impl ApiError {
    pub fn new(status: u16, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            receipt: None,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code, self.message)
    }
}

impl std::error::Error for ApiError {}
