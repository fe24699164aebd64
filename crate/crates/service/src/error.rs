//! Mapping from domain errors to HTTP statuses and stable error codes.

use custody_core::blobstore::BlobError;
use custody_core::contract::{ContractError, QueryError};
use custody_core::ledger::LedgerError;

use crate::api::ApiError;

pub fn contract_error(e: &ContractError) -> ApiError {
    let status = match e {
        ContractError::NotOwner | ContractError::NotWhitelisted => 403,
        ContractError::DuplicateFilename(_)
        | ContractError::EmptyManifest
        | ContractError::MalformedHash
        | ContractError::EmptyField(_) => 422,
        ContractError::AlreadyDeployed => 409,
    };
    ApiError::new(status, e.code(), e.to_string())
}

pub fn query_error(e: &QueryError) -> ApiError {
    let (status, code) = match e {
        QueryError::NotFound(_) => (404, "NotFound"),
        QueryError::NoManifest(_) => (404, "NoManifest"),
        QueryError::BadCursor { .. } => (400, "BadCursor"),
    };
    ApiError::new(status, code, e.to_string())
}

pub fn ledger_error(e: &LedgerError) -> ApiError {
    let (status, code) = match e {
        LedgerError::BadSignature => (401, "BadSignature"),
        LedgerError::StaleNonce { .. } => (409, "StaleNonce"),
        LedgerError::NotFound(_) => (404, "NotFound"),
        LedgerError::ClockSkew { .. } => (500, "ClockSkew"),
        _ => (500, "LedgerFailure"),
    };
    ApiError::new(status, code, e.to_string())
}

pub fn blob_error(e: &BlobError) -> ApiError {
    let (status, code) = match e {
        BlobError::NotFound(_) => (404, "BlobNotFound"),
        BlobError::UnknownContent(_) => (404, "UnknownContent"),
        BlobError::UnknownPeer(_) => (404, "UnknownPeer"),
        BlobError::CorruptBlob { .. } => (409, "CorruptBlob"),
        BlobError::NoPeers => (503, "NoPeers"),
        BlobError::NotStandardPeer(_) => (403, "NotStandardPeer"),
        BlobError::Io(_) => (500, "StorageFailure"),
        BlobError::DuplicatePeer(_) | BlobError::InvalidPeerId(_) | BlobError::ZeroReplication => {
            (422, "InvalidClusterRequest")
        }
    };
    ApiError::new(status, code, e.to_string())
}

pub fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::new(400, "BadRequest", message)
}

pub fn unknown_trial(trial_id: &str) -> ApiError {
    ApiError::new(404, "UnknownTrial", format!("no manifest or records for trial {trial_id:?}"))
}
