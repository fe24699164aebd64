use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, DecodeError, Reader, Writer};
use crate::contract::{CallOutput, ContractCall, ContractError, RecordId};
use crate::digest::Digest;
use crate::identity::{Identity, PublicKey, Signature};

/// Prefix mixed into every signed message so a transaction signature can
/// never be replayed as a signature over some other structure.
pub const TX_SIGNING_DOMAIN: &[u8] = b"custody-ledger/tx/v1";

pub type TxId = Digest;

/// A signed contract call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub call: ContractCall,
    pub sender: PublicKey,
    pub nonce: u64,
    pub signature: Signature,
}

impl Transaction {
    /// The exact bytes covered by the signature: domain, call, sender, nonce.
    pub fn signing_bytes(call: &ContractCall, sender: &PublicKey, nonce: u64) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(TX_SIGNING_DOMAIN).put(call).put(sender).u64(nonce);
        w.into_bytes()
    }

    pub fn sign(identity: &Identity, call: ContractCall, nonce: u64) -> Self {
        let sender = identity.public_key();
        let signature = identity.sign(&Self::signing_bytes(&call, &sender, nonce));
        Transaction {
            call,
            sender,
            nonce,
            signature,
        }
    }

    pub fn verify_signature(&self) -> bool {
        self.sender.verify(
            &Self::signing_bytes(&self.call, &self.sender, self.nonce),
            &self.signature,
        )
    }

    /// Hash of the full signed encoding.
    pub fn id(&self) -> TxId {
        Digest::of(&self.to_canonical_bytes())
    }
}

impl Canonical for Transaction {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.call)
            .put(&self.sender)
            .u64(self.nonce)
            .put(&self.signature);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction {
            call: r.get()?,
            sender: r.get()?,
            nonce: r.u64()?,
            signature: r.get()?,
        })
    }
}

/// Outcome of applying a transaction, sealed alongside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Applied { record_id: Option<RecordId> },
    Failed { error: ContractError },
}

impl TxStatus {
    pub fn is_applied(&self) -> bool {
        matches!(self, TxStatus::Applied { .. })
    }
}

impl From<Result<CallOutput, ContractError>> for TxStatus {
    fn from(r: Result<CallOutput, ContractError>) -> Self {
        match r {
            Ok(out) => TxStatus::Applied {
                record_id: out.record_id,
            },
            Err(error) => TxStatus::Failed { error },
        }
    }
}

impl Canonical for TxStatus {
    fn encode(&self, w: &mut Writer) {
        match self {
            TxStatus::Applied { record_id: None } => {
                w.u8(0).u8(0);
            }
            TxStatus::Applied {
                record_id: Some(id),
            } => {
                w.u8(0).u8(1).u64(*id);
            }
            TxStatus::Failed { error } => {
                w.u8(1).put(error);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => {
                let record_id = match r.u8()? {
                    0 => None,
                    1 => Some(r.u64()?),
                    tag => {
                        return Err(DecodeError::UnknownTag {
                            what: "option flag",
                            tag,
                        })
                    }
                };
                Ok(TxStatus::Applied { record_id })
            }
            1 => Ok(TxStatus::Failed { error: r.get()? }),
            tag => Err(DecodeError::UnknownTag {
                what: "tx status",
                tag,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedTx {
    pub tx: Transaction,
    #[serde(flatten)]
    pub status: TxStatus,
}

impl Canonical for SealedTx {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.tx).put(&self.status);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(SealedTx {
            tx: r.get()?,
            status: r.get()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: u64,
    pub transactions: Vec<SealedTx>,
    pub block_hash: Digest,
}

impl Block {
    /// Builds a block and stamps it with its own hash.
    pub fn new(height: u64, parent_hash: Digest, timestamp: u64, transactions: Vec<SealedTx>) -> Self {
        let mut block = Block {
            height,
            parent_hash,
            timestamp,
            transactions,
            block_hash: Digest::ZERO,
        };
        block.block_hash = block.compute_hash();
        block
    }

    fn encode_body(&self, w: &mut Writer) {
        w.u64(self.height)
            .put(&self.parent_hash)
            .u64(self.timestamp)
            .list(&self.transactions, |w, t| {
                w.put(t);
            });
    }

    /// Hash over the canonical encoding of everything except `block_hash`.
    pub fn compute_hash(&self) -> Digest {
        let mut w = Writer::new();
        self.encode_body(&mut w);
        Digest::of(&w.into_bytes())
    }
}

impl Canonical for Block {
    fn encode(&self, w: &mut Writer) {
        self.encode_body(w);
        w.put(&self.block_hash);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Block {
            height: r.u64()?,
            parent_hash: r.get()?,
            timestamp: r.u64()?,
            transactions: r.list(|r| r.get())?,
            block_hash: r.get()?,
        })
    }
}
