//! Chain of custody for trial datasets.
//!
//! * [`ledger`]: append-only hash-chained log of signed transactions.
//! * [`contract`]: the state machine the ledger executes (owner, whitelist,
//!   manifests, metadata records, events).
//! * [`blobstore`]: content-addressed storage replicated over a peer cluster.
//! * [`integrity`]: re-hash retrieved datasets and compare with the ledger.

pub mod blobstore;
pub mod codec;
pub mod contract;
pub mod digest;
pub mod identity;
pub mod integrity;
pub mod ledger;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use digest::Digest;
pub use identity::{Identity, PublicKey, Signature};
