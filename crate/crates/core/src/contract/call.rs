//! Contract call ABI: a one-byte operation tag followed by the arguments in
//! canonical layout.
//!
//! | tag    | operation            | arguments                                   |
//! |--------|----------------------|---------------------------------------------|
//! | `0x00` | `deploy`             | none                                        |
//! | `0x01` | `transfer_ownership` | new_owner: key[32]                          |
//! | `0x02` | `whitelist_add`      | key: key[32]                                |
//! | `0x03` | `whitelist_remove`   | key: key[32]                                |
//! | `0x04` | `set_manifest`       | trial_id: str, filenames: list<str>         |
//! | `0x05` | `record_metadata`    | filename: str, trial_id: str, file_hash: str|

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, DecodeError, Reader, Writer};
use crate::identity::PublicKey;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ContractCall {
    Deploy,
    TransferOwnership {
        new_owner: PublicKey,
    },
    WhitelistAdd {
        key: PublicKey,
    },
    WhitelistRemove {
        key: PublicKey,
    },
    SetManifest {
        trial_id: String,
        filenames: Vec<String>,
    },
    /// `file_hash` travels as text and is validated when the call is applied,
    /// so a malformed digest is sealed as a failed call rather than lost.
    RecordMetadata {
        filename: String,
        trial_id: String,
        file_hash: String,
    },
}

impl ContractCall {
    pub const TAG_DEPLOY: u8 = 0x00;
    pub const TAG_TRANSFER_OWNERSHIP: u8 = 0x01;
    pub const TAG_WHITELIST_ADD: u8 = 0x02;
    pub const TAG_WHITELIST_REMOVE: u8 = 0x03;
    pub const TAG_SET_MANIFEST: u8 = 0x04;
    pub const TAG_RECORD_METADATA: u8 = 0x05;

    pub fn tag(&self) -> u8 {
        match self {
            ContractCall::Deploy => Self::TAG_DEPLOY,
            ContractCall::TransferOwnership { .. } => Self::TAG_TRANSFER_OWNERSHIP,
            ContractCall::WhitelistAdd { .. } => Self::TAG_WHITELIST_ADD,
            ContractCall::WhitelistRemove { .. } => Self::TAG_WHITELIST_REMOVE,
            ContractCall::SetManifest { .. } => Self::TAG_SET_MANIFEST,
            ContractCall::RecordMetadata { .. } => Self::TAG_RECORD_METADATA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ContractCall::Deploy => "deploy",
            ContractCall::TransferOwnership { .. } => "transfer_ownership",
            ContractCall::WhitelistAdd { .. } => "whitelist_add",
            ContractCall::WhitelistRemove { .. } => "whitelist_remove",
            ContractCall::SetManifest { .. } => "set_manifest",
            ContractCall::RecordMetadata { .. } => "record_metadata",
        }
    }
}

impl Canonical for ContractCall {
    fn encode(&self, w: &mut Writer) {
        w.u8(self.tag());
        match self {
            ContractCall::Deploy => {}
            ContractCall::TransferOwnership { new_owner } => {
                w.put(new_owner);
            }
            ContractCall::WhitelistAdd { key } | ContractCall::WhitelistRemove { key } => {
                w.put(key);
            }
            ContractCall::SetManifest {
                trial_id,
                filenames,
            } => {
                w.str(trial_id).list(filenames, |w, f| {
                    w.str(f);
                });
            }
            ContractCall::RecordMetadata {
                filename,
                trial_id,
                file_hash,
            } => {
                w.str(filename).str(trial_id).str(file_hash);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            Self::TAG_DEPLOY => ContractCall::Deploy,
            Self::TAG_TRANSFER_OWNERSHIP => ContractCall::TransferOwnership {
                new_owner: r.get()?,
            },
            Self::TAG_WHITELIST_ADD => ContractCall::WhitelistAdd { key: r.get()? },
            Self::TAG_WHITELIST_REMOVE => ContractCall::WhitelistRemove { key: r.get()? },
            Self::TAG_SET_MANIFEST => ContractCall::SetManifest {
                trial_id: r.string()?,
                filenames: r.list(|r| r.string())?,
            },
            Self::TAG_RECORD_METADATA => ContractCall::RecordMetadata {
                filename: r.string()?,
                trial_id: r.string()?,
                file_hash: r.string()?,
            },
            tag => {
                return Err(DecodeError::UnknownTag {
                    what: "contract call",
                    tag,
                })
            }
        })
    }
}
