//! One interface over the API, implemented in-process and over HTTP.

use custody_core::blobstore::ContentId;
use custody_core::contract::{Completeness, IndexedRecord, RecordId};
use custody_core::integrity::{TrialVerification, VerificationVerdict};
use custody_core::ledger::{Block, ChainReport, TxId};
use custody_core::PublicKey;

use crate::api::{
    ApiError, BlobPutResponse, EventLog, ManifestRequest, NonceResponse, OwnerRequest,
    RecordResponse, RecordUpload, StatusResponse, TxResponse, WhitelistRequest, WriteResponse,
};
use crate::node::Node;
use crate::server::SharedNode;

pub type ApiResult<T> = Result<T, ApiError>;

pub trait Backend {
    fn nonce(&mut self, sender: &PublicKey) -> ApiResult<NonceResponse>;
    fn set_manifest(&mut self, trial_id: &str, req: &ManifestRequest) -> ApiResult<WriteResponse>;
    fn whitelist(&mut self, add: bool, req: &WhitelistRequest) -> ApiResult<WriteResponse>;
    fn transfer_ownership(&mut self, req: &OwnerRequest) -> ApiResult<WriteResponse>;
    fn submit_record(&mut self, trial_id: &str, upload: &RecordUpload) -> ApiResult<RecordResponse>;
    fn put_blob(&mut self, bytes: &[u8]) -> ApiResult<BlobPutResponse>;
    fn records(&mut self, trial_id: &str) -> ApiResult<Vec<IndexedRecord>>;
    fn completeness(&mut self, trial_id: &str) -> ApiResult<Completeness>;
    fn history(&mut self, trial_id: &str, filename: &str) -> ApiResult<Vec<IndexedRecord>>;
    fn verify_file(&mut self, trial_id: &str, filename: &str, record_id: Option<RecordId>) -> ApiResult<VerificationVerdict>;
    fn verify_trial(&mut self, trial_id: &str) -> ApiResult<TrialVerification>;
    fn events(&mut self, cursor: u64) -> ApiResult<EventLog>;
    fn block(&mut self, height: u64) -> ApiResult<Block>;
    fn tx(&mut self, tx_id: &TxId) -> ApiResult<TxResponse>;
    fn get_blob(&mut self, cid: &ContentId) -> ApiResult<Vec<u8>>;
    fn chain_check(&mut self) -> ApiResult<ChainReport>;
    fn status(&mut self) -> ApiResult<StatusResponse>;
}

impl Backend for Node {
    fn nonce(&mut self, sender: &PublicKey) -> ApiResult<NonceResponse> {
        Ok(Node::nonce(self, sender))
    }
    fn set_manifest(&mut self, trial_id: &str, req: &ManifestRequest) -> ApiResult<WriteResponse> {
        Node::set_manifest(self, trial_id, req)
    }
    fn whitelist(&mut self, add: bool, req: &WhitelistRequest) -> ApiResult<WriteResponse> {
        Node::whitelist(self, add, req)
    }
    fn transfer_ownership(&mut self, req: &OwnerRequest) -> ApiResult<WriteResponse> {
        Node::transfer_ownership(self, req)
    }
    fn submit_record(&mut self, trial_id: &str, upload: &RecordUpload) -> ApiResult<RecordResponse> {
        Node::submit_record(self, trial_id, upload)
    }
    fn put_blob(&mut self, bytes: &[u8]) -> ApiResult<BlobPutResponse> {
        Node::put_blob(self, bytes)
    }
    fn records(&mut self, trial_id: &str) -> ApiResult<Vec<IndexedRecord>> {
        Node::records(self, trial_id)
    }
    fn completeness(&mut self, trial_id: &str) -> ApiResult<Completeness> {
        Node::completeness(self, trial_id)
    }
    fn history(&mut self, trial_id: &str, filename: &str) -> ApiResult<Vec<IndexedRecord>> {
        Node::history(self, trial_id, filename)
    }
    fn verify_file(&mut self, trial_id: &str, filename: &str, record_id: Option<RecordId>) -> ApiResult<VerificationVerdict> {
        Node::verify_file(self, trial_id, filename, record_id)
    }
    fn verify_trial(&mut self, trial_id: &str) -> ApiResult<TrialVerification> {
        Node::verify_trial(self, trial_id)
    }
    fn events(&mut self, cursor: u64) -> ApiResult<EventLog> {
        Node::events(self, cursor)
    }
    fn block(&mut self, height: u64) -> ApiResult<Block> {
        Node::block(self, height)
    }
    fn tx(&mut self, tx_id: &TxId) -> ApiResult<TxResponse> {
        Node::tx(self, tx_id)
    }
    fn get_blob(&mut self, cid: &ContentId) -> ApiResult<Vec<u8>> {
        Node::get_blob(self, cid)
    }
    fn chain_check(&mut self) -> ApiResult<ChainReport> {
        Ok(Node::chain_check(self))
    }
    fn status(&mut self) -> ApiResult<StatusResponse> {
        Ok(Node::status(self))
    }
}

impl Backend for SharedNode {
    fn nonce(&mut self, sender: &PublicKey) -> ApiResult<NonceResponse> {
        Ok(self.read(|n| n.nonce(sender)))
    }
    fn set_manifest(&mut self, trial_id: &str, req: &ManifestRequest) -> ApiResult<WriteResponse> {
        self.write(|n| n.set_manifest(trial_id, req))
    }
    fn whitelist(&mut self, add: bool, req: &WhitelistRequest) -> ApiResult<WriteResponse> {
        self.write(|n| n.whitelist(add, req))
    }
    fn transfer_ownership(&mut self, req: &OwnerRequest) -> ApiResult<WriteResponse> {
        self.write(|n| n.transfer_ownership(req))
    }
    fn submit_record(&mut self, trial_id: &str, upload: &RecordUpload) -> ApiResult<RecordResponse> {
        self.write(|n| n.submit_record(trial_id, upload))
    }
    fn put_blob(&mut self, bytes: &[u8]) -> ApiResult<BlobPutResponse> {
        self.write(|n| n.put_blob(bytes))
    }
    fn records(&mut self, trial_id: &str) -> ApiResult<Vec<IndexedRecord>> {
        self.read(|n| n.records(trial_id))
    }
    fn completeness(&mut self, trial_id: &str) -> ApiResult<Completeness> {
        self.read(|n| n.completeness(trial_id))
    }
    fn history(&mut self, trial_id: &str, filename: &str) -> ApiResult<Vec<IndexedRecord>> {
        self.read(|n| n.history(trial_id, filename))
    }
    fn verify_file(&mut self, trial_id: &str, filename: &str, record_id: Option<RecordId>) -> ApiResult<VerificationVerdict> {
        self.read(|n| n.verify_file(trial_id, filename, record_id))
    }
    fn verify_trial(&mut self, trial_id: &str) -> ApiResult<TrialVerification> {
        self.read(|n| n.verify_trial(trial_id))
    }
    fn events(&mut self, cursor: u64) -> ApiResult<EventLog> {
        self.read(|n| n.events(cursor))
    }
    fn block(&mut self, height: u64) -> ApiResult<Block> {
        self.read(|n| n.block(height))
    }
    fn tx(&mut self, tx_id: &TxId) -> ApiResult<TxResponse> {
        self.read(|n| n.tx(tx_id))
    }
    fn get_blob(&mut self, cid: &ContentId) -> ApiResult<Vec<u8>> {
        self.read(|n| n.get_blob(cid))
    }
    fn chain_check(&mut self) -> ApiResult<ChainReport> {
        Ok(self.read(Node::chain_check))
    }
    fn status(&mut self) -> ApiResult<StatusResponse> {
        Ok(self.read(Node::status))
    }
}
