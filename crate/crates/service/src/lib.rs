//! HTTP service for the custody ledger and blob store.
//!
//! [`Node`] is the synchronous in-process stack; [`server`] exposes it over
//! HTTP with JSON bodies, multipart uploads and a server-sent event stream.
//! [`api`] holds the wire types shared with clients, [`Backend`] abstracts
//! over in-process and HTTP access, and the `client` feature adds a blocking
//! HTTP implementation.

pub mod api;
pub mod backend;
#[cfg(feature = "client")]
pub mod client;
pub mod clock;
pub mod config;
pub mod error;
pub mod node;
pub mod server;

pub use backend::Backend;
pub use clock::{Clock, StepClock, SystemClock};
pub use config::{SealMode, ServiceConfig};
pub use node::{Node, NodeError, NodeOptions};
pub use server::{BackgroundServer, SharedNode};
