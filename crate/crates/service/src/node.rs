//! The in-process stack behind the API: one ledger, one storage cluster and
//! a clock. Every endpoint is a method here, so the HTTP layer and the CLI's
//! embedded mode run the same code.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use custody_core::blobstore::{BlobError, Cluster, ClusterConfig, ContentId};
use custody_core::contract::{Completeness, Contract, IndexedRecord, RecordId};
use custody_core::integrity::{self, TrialVerification, VerificationVerdict};
use custody_core::ledger::{
    verify_encoded, Block, ChainReport, ChainStore, Ledger, LedgerConfig, LedgerError, Transaction,
    TxId, TxStatus,
};
use custody_core::{Digest, PublicKey};
use thiserror::Error;

use crate::api::{
    ApiError, BlobPutResponse, EventLog, ManifestRequest, NonceResponse, OwnerRequest, PeerView,
    RecordPayload, RecordResponse, RecordUpload, StatusResponse, TxResponse, TxState,
    WhitelistRequest, WriteResponse,
};
use crate::clock::Clock;
use crate::config::{SealMode, ServiceConfig};
use crate::error::{blob_error, contract_error, ledger_error, query_error, unknown_trial};

pub const LEDGER_DIR: &str = "ledger";
pub const BLOBS_DIR: &str = "blobs";

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Blob(#[from] BlobError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeOptions {
    pub seal_mode: SealMode,
    pub ledger: LedgerConfig,
    pub cluster: ClusterConfig,
}

impl Default for NodeOptions {
    fn default() -> Self {
        NodeOptions {
            seal_mode: SealMode::Immediate,
            ledger: LedgerConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

impl From<&ServiceConfig> for NodeOptions {
    fn from(c: &ServiceConfig) -> Self {
        NodeOptions {
            seal_mode: c.seal_mode,
            ledger: c.ledger_config(),
            cluster: c.cluster.clone(),
        }
    }
}

pub struct Node {
    ledger: Ledger,
    cluster: Cluster,
    clock: Arc<dyn Clock>,
    seal_mode: SealMode,
    root: Option<PathBuf>,
}

impl Node {
    /// Fresh node kept entirely in memory. `deploy` must be the owner's
    /// signed deploy transaction.
    pub fn in_memory(deploy: Transaction, options: NodeOptions, clock: Arc<dyn Clock>) -> Result<Self, NodeError> {
        let ledger = Ledger::create(deploy, clock.now(), options.ledger)?;
        Ok(Node {
            ledger,
            cluster: Cluster::from_config(&options.cluster),
            clock,
            seal_mode: options.seal_mode,
            root: None,
        })
    }

    /// Initialises a persistent node under `root` (`ledger/` and `blobs/`).
    pub fn init(root: &Path, deploy: Transaction, options: NodeOptions, clock: Arc<dyn Clock>) -> Result<Self, NodeError> {
        let ledger = Ledger::create_persistent(&root.join(LEDGER_DIR), deploy, clock.now(), options.ledger)?;
        let cluster = Cluster::open(&root.join(BLOBS_DIR), &options.cluster)?;
        Ok(Node {
            ledger,
            cluster,
            clock,
            seal_mode: options.seal_mode,
            root: Some(root.to_path_buf()),
        })
    }

    /// Reopens a persistent node. The chain is re-verified and replayed.
    pub fn open(root: &Path, options: NodeOptions, clock: Arc<dyn Clock>) -> Result<Self, NodeError> {
        let ledger = Ledger::open(&root.join(LEDGER_DIR), options.ledger)?;
        let cluster = Cluster::open(&root.join(BLOBS_DIR), &options.cluster)?;
        Ok(Node {
            ledger,
            cluster,
            clock,
            seal_mode: options.seal_mode,
            root: Some(root.to_path_buf()),
        })
    }

    /// Verifies the chain stored under `root` without replaying it, so a
    /// tampered chain is reported rather than refused.
    pub fn check_stored_chain(root: &Path) -> Result<ChainReport, NodeError> {
        let dir = root.join(LEDGER_DIR);
        if !ChainStore::exists(&dir) {
            return Err(LedgerError::NotFound(format!("chain at {}", dir.display())).into());
        }
        let raw = ChainStore::open(&dir).map_err(LedgerError::from)?.load_raw().map_err(LedgerError::from)?;
        Ok(verify_encoded(&raw))
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn contract(&self) -> &Contract {
        self.ledger.contract()
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    /// Direct cluster access for operators and fault-injection tests.
    pub fn cluster_mut(&mut self) -> &mut Cluster {
        &mut self.cluster
    }

    pub fn seal_mode(&self) -> SealMode {
        self.seal_mode
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn event_count(&self) -> u64 {
        self.contract().event_count()
    }

    /// Seals whatever is pending. Returns the new height, if a block was made.
    pub fn seal_pending(&mut self) -> Result<Option<u64>, ApiError> {
        let now = self.clock.now();
        self.ledger
            .seal(now)
            .map(|b| b.map(|b| b.height))
            .map_err(|e| ledger_error(&e))
    }

    fn write(&mut self, tx: Transaction) -> Result<WriteResponse, ApiError> {
        let submitted = self.ledger.submit(tx).map_err(|e| ledger_error(&e))?;
        if self.seal_mode == SealMode::Interval {
            return Ok(WriteResponse::Pending {
                tx_id: submitted.tx_id,
                position: submitted.position,
            });
        }
        self.seal_pending()?;
        let receipt = self
            .ledger
            .get_receipt(&submitted.tx_id)
            .map_err(|e| ledger_error(&e))?;
        if let TxStatus::Failed { error } = &receipt.status {
            let mut err = contract_error(error);
            err.receipt = Some(Box::new(receipt));
            return Err(err);
        }
        Ok(WriteResponse::Sealed { receipt })
    }

    // ------------------------------------------------------------ writes

    pub fn set_manifest(&mut self, trial_id: &str, req: &ManifestRequest) -> Result<WriteResponse, ApiError> {
        self.write(req.auth.into_transaction(req.call(trial_id)))
    }

    pub fn whitelist(&mut self, add: bool, req: &WhitelistRequest) -> Result<WriteResponse, ApiError> {
        self.write(req.auth.into_transaction(req.call(add)))
    }

    pub fn transfer_ownership(&mut self, req: &OwnerRequest) -> Result<WriteResponse, ApiError> {
        self.write(req.auth.into_transaction(req.call()))
    }

    /// Stores the file (when bytes are supplied and the sender may submit)
    /// and records its metadata. A sender who may not submit still gets the
    /// rejected call sealed, but nothing is stored.
    pub fn submit_record(&mut self, trial_id: &str, upload: &RecordUpload) -> Result<RecordResponse, ApiError> {
        let file_hash = upload.payload.digest();
        let cid = ContentId::from_digest(file_hash);
        let tx = upload.auth.into_transaction(upload.call(trial_id));
        if !tx.verify_signature() {
            return Err(ledger_error(&LedgerError::BadSignature));
        }
        if let Some(last) = self.ledger.last_nonce(&tx.sender) {
            if tx.nonce <= last {
                return Err(ledger_error(&LedgerError::StaleNonce { nonce: tx.nonce, last }));
            }
        }
        let will_apply = self.contract().may_submit(&tx.sender) && !trial_id.is_empty() && !upload.filename.is_empty();
        let mut stored = false;
        if let (true, RecordPayload::Bytes(bytes)) = (will_apply, &upload.payload) {
            self.cluster.add_blob(bytes).map_err(|e| blob_error(&e))?;
            stored = true;
        }
        let write = self.write(tx)?;
        let record_id = match write.receipt().map(|r| &r.status) {
            Some(TxStatus::Applied { record_id }) => *record_id,
            _ => None,
        };
        Ok(RecordResponse {
            write,
            record_id,
            file_hash,
            cid,
            stored,
        })
    }

    /// Stores bytes whose digest some record already references.
    pub fn put_blob(&mut self, bytes: &[u8]) -> Result<BlobPutResponse, ApiError> {
        let digest = Digest::of(bytes);
        if !self.contract().records().iter().any(|r| r.file_hash == digest) {
            return Err(ApiError::new(
                422,
                "Unreferenced",
                format!("no record references digest {digest}"),
            ));
        }
        let cid = self.cluster.add_blob(bytes).map_err(|e| blob_error(&e))?;
        Ok(BlobPutResponse {
            cid,
            status: self.cluster.status(&cid),
        })
    }

    // ------------------------------------------------------------- reads

    pub fn nonce(&self, sender: &PublicKey) -> NonceResponse {
        NonceResponse {
            sender: *sender,
            next_nonce: self.ledger.next_nonce(sender),
        }
    }

    fn known_trial(&self, trial_id: &str) -> Result<(), ApiError> {
        if self.contract().knows_trial(trial_id) {
            Ok(())
        } else {
            Err(unknown_trial(trial_id))
        }
    }

    pub fn records(&self, trial_id: &str) -> Result<Vec<IndexedRecord>, ApiError> {
        self.known_trial(trial_id)?;
        Ok(self.contract().trial_records(trial_id))
    }

    pub fn completeness(&self, trial_id: &str) -> Result<Completeness, ApiError> {
        self.contract().completeness(trial_id).map_err(|e| query_error(&e))
    }

    pub fn history(&self, trial_id: &str, filename: &str) -> Result<Vec<IndexedRecord>, ApiError> {
        self.known_trial(trial_id)?;
        Ok(self.contract().history(trial_id, filename))
    }

    pub fn verify_file(
        &self,
        trial_id: &str,
        filename: &str,
        record_id: Option<RecordId>,
    ) -> Result<VerificationVerdict, ApiError> {
        self.known_trial(trial_id)?;
        Ok(integrity::verify_collection(
            self.contract(),
            &self.cluster,
            trial_id,
            filename,
            record_id,
        ))
    }

    pub fn verify_trial(&self, trial_id: &str) -> Result<TrialVerification, ApiError> {
        integrity::verify_trial(self.contract(), &self.cluster, trial_id).map_err(|e| query_error(&e))
    }

    pub fn events(&self, cursor: u64) -> Result<EventLog, ApiError> {
        let events = self
            .contract()
            .events_since(cursor)
            .map_err(|e| query_error(&e))?
            .to_vec();
        Ok(EventLog {
            next_cursor: cursor + events.len() as u64,
            events,
        })
    }

    pub fn block(&self, height: u64) -> Result<Block, ApiError> {
        self.ledger
            .get_block(height)
            .cloned()
            .map_err(|e| ledger_error(&e))
    }

    pub fn tx(&self, tx_id: &TxId) -> Result<TxResponse, ApiError> {
        if let Some(sealed) = self.ledger.get_transaction(tx_id) {
            let receipt = self.ledger.get_receipt(tx_id).map_err(|e| ledger_error(&e))?;
            return Ok(TxResponse {
                tx_id: *tx_id,
                state: TxState::Sealed {
                    receipt,
                    sealed: sealed.clone(),
                },
            });
        }
        match self.ledger.pending_position(tx_id) {
            Some(position) => Ok(TxResponse {
                tx_id: *tx_id,
                state: TxState::Pending {
                    position,
                    tx: self.ledger.pending()[position].clone(),
                },
            }),
            None => Err(ledger_error(&LedgerError::NotFound(format!("transaction {tx_id}")))),
        }
    }

    pub fn get_blob(&self, cid: &ContentId) -> Result<Vec<u8>, ApiError> {
        self.cluster
            .get_blob(cid)
            .map(|r| r.bytes)
            .map_err(|e| blob_error(&e))
    }

    pub fn chain_check(&self) -> ChainReport {
        self.ledger.verify()
    }

    pub fn status(&self) -> StatusResponse {
        let tip = self.ledger.tip();
        let contract = self.contract();
        StatusResponse {
            height: tip.height,
            tip_hash: tip.block_hash,
            tip_timestamp: tip.timestamp,
            pending: self.ledger.pending().len(),
            owner: contract.owner(),
            whitelist: contract.whitelist().iter().copied().collect(),
            record_count: contract.record_count(),
            event_count: contract.event_count(),
            trials: contract.trials().into_iter().map(str::to_string).collect(),
            seal_mode: self.seal_mode,
            replication_factor: self.cluster.default_replication(),
            peers: self
                .cluster
                .peers()
                .map(|p| PeerView {
                    id: p.id().clone(),
                    role: p.role(),
                    online: p.is_online(),
                    blobs: p.blob_count(),
                    stored_bytes: p.stored_bytes(),
                })
                .collect(),
            pins: self.cluster.pin_set().len(),
        }
    }
}
