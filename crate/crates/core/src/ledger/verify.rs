use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::Canonical;
use crate::digest::Digest;

use super::block::Block;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    /// Stored bytes do not decode as a block.
    Undecodable,
    /// The block's height field disagrees with its position.
    HeightMismatch { stored: u64 },
    /// Recomputing the hash over the block body gives a different value.
    HashMismatch,
    /// `parent_hash` is not the previous block's hash (zero for genesis).
    BrokenLink,
    TimestampRegression,
    BadSignature { tx_index: usize },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::Undecodable => f.write_str("stored bytes do not decode"),
            Defect::HeightMismatch { stored } => write!(f, "stored height {stored} out of place"),
            Defect::HashMismatch => f.write_str("block hash does not match contents"),
            Defect::BrokenLink => f.write_str("parent hash does not link to predecessor"),
            Defect::TimestampRegression => f.write_str("timestamp earlier than predecessor"),
            Defect::BadSignature { tx_index } => write!(f, "transaction {tx_index} signature invalid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ChainReport {
    Ok { blocks: u64 },
    Bad { height: u64, defect: Defect },
}

impl ChainReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainReport::Ok { .. })
    }

    pub fn first_bad_height(&self) -> Option<u64> {
        match self {
            ChainReport::Ok { .. } => None,
            ChainReport::Bad { height, .. } => Some(*height),
        }
    }
}

fn check_block(position: u64, block: &Block, previous: Option<&Block>) -> Option<Defect> {
    if block.height != position {
        return Some(Defect::HeightMismatch {
            stored: block.height,
        });
    }
    if block.compute_hash() != block.block_hash {
        return Some(Defect::HashMismatch);
    }
    let expected_parent = previous.map(|p| p.block_hash).unwrap_or(Digest::ZERO);
    if block.parent_hash != expected_parent {
        return Some(Defect::BrokenLink);
    }
    if previous.is_some_and(|p| block.timestamp < p.timestamp) {
        return Some(Defect::TimestampRegression);
    }
    block
        .transactions
        .iter()
        .position(|t| !t.tx.verify_signature())
        .map(|tx_index| Defect::BadSignature { tx_index })
}

/// Recomputes every hash and parent link, reporting the lowest position at
/// which anything fails to check out.
pub fn verify_chain(blocks: &[Block]) -> ChainReport {
    let mut previous = None;
    for (i, block) in blocks.iter().enumerate() {
        if let Some(defect) = check_block(i as u64, block, previous) {
            return ChainReport::Bad {
                height: i as u64,
                defect,
            };
        }
        previous = Some(block);
    }
    ChainReport::Ok {
        blocks: blocks.len() as u64,
    }
}

/// Same as [`verify_chain`] but starting from stored bytes, so corruption
/// that breaks decoding is reported at the block it hit.
pub fn verify_encoded<B: AsRef<[u8]>>(raw: &[B]) -> ChainReport {
    let mut blocks = Vec::with_capacity(raw.len());
    for (i, bytes) in raw.iter().enumerate() {
        match Block::from_canonical_bytes(bytes.as_ref()) {
            Ok(b) => blocks.push(b),
            Err(_) => {
                return match verify_chain(&blocks) {
                    bad @ ChainReport::Bad { .. } => bad,
                    ChainReport::Ok { .. } => ChainReport::Bad {
                        height: i as u64,
                        defect: Defect::Undecodable,
                    },
                }
            }
        }
    }
    verify_chain(&blocks)
}
