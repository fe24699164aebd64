use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use custody_service::SealMode;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "custody", version, about = "Chain-of-custody ledger and dataset store for vehicle trials")]
pub struct Cli {
    /// Service base URL.
    #[arg(long, global = true, env = "CUSTODY_SERVER", conflicts_with = "embedded")]
    pub server: Option<String>,
    /// Run against a local data root in this process instead of a server.
    #[arg(long, global = true)]
    pub embedded: bool,
    /// Data directory for `init`, `serve` and `--embedded`.
    #[arg(long, global = true, env = "CUSTODY_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// Secret key file used to sign writes.
    #[arg(long, global = true, env = "CUSTODY_KEY")]
    pub key: Option<PathBuf>,
    /// Service configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print API responses as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Trial ID, for commands that take one.
    #[arg(long, global = true)]
    pub trial: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair and write the secret to a file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Create a new chain under --data-root, owned by --key.
    Init,
    /// Serve the HTTP API from --data-root.
    Serve(ServeArgs),
    /// Add or remove a whitelisted submitter (owner only).
    #[command(subcommand)]
    Whitelist(WhitelistCmd),
    /// Transfer contract ownership (owner only).
    #[command(subcommand)]
    Owner(OwnerCmd),
    /// Manage a trial's manifest of required filenames.
    #[command(subcommand)]
    Manifest(ManifestCmd),
    /// Submit dataset records.
    #[command(subcommand)]
    Record(RecordCmd),
    /// Store or fetch raw blobs.
    #[command(subcommand)]
    Blob(BlobCmd),
    /// Trial queries.
    #[command(subcommand)]
    Trial(TrialCmd),
    /// Per-file queries.
    #[command(subcommand)]
    File(FileCmd),
    /// Re-hash stored datasets and compare with the ledger.
    Verify {
        trial: Option<String>,
        /// Verify only this filename.
        #[arg(long)]
        file: Option<String>,
        /// Verify this record instead of the latest (requires --file).
        #[arg(long, requires = "file")]
        record_id: Option<u64>,
    },
    /// Ledger checks.
    #[command(subcommand)]
    Chain(ChainCmd),
    /// Print contract events.
    Events {
        #[arg(long, default_value_t = 0)]
        cursor: u64,
        /// Keep the connection open and print new events as they arrive.
        #[arg(long)]
        follow: bool,
    },
    /// Show a block.
    Block { height: u64 },
    /// Show a transaction and its receipt.
    Tx { id: String },
    /// Node summary.
    Status,
    /// Time import, hash and download across file sizes; prints CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long, value_parser = parse_seal_mode)]
    pub seal_mode: Option<SealMode>,
    #[arg(long)]
    pub block_interval_ms: Option<u64>,
}

fn parse_seal_mode(s: &str) -> Result<SealMode, String> {
    match s {
        "immediate" => Ok(SealMode::Immediate),
        "interval" => Ok(SealMode::Interval),
        _ => Err("expected \"immediate\" or \"interval\"".into()),
    }
}

#[derive(Debug, Subcommand)]
pub enum WhitelistCmd {
    Add { pubkey: String },
    Remove { pubkey: String },
}

#[derive(Debug, Subcommand)]
pub enum OwnerCmd {
    Transfer { pubkey: String },
}

#[derive(Debug, Subcommand)]
pub enum ManifestCmd {
    /// Set (or replace) the required filenames.
    Set {
        #[arg(required = true)]
        filenames: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecordCmd {
    /// Upload a file and record its metadata.
    Add {
        path: PathBuf,
        /// Filename to record (defaults to the file's name).
        #[arg(long)]
        name: Option<String>,
        /// Record the digest only; upload the bytes later with `blob put`.
        #[arg(long)]
        hash_only: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum BlobCmd {
    Put { path: PathBuf },
    Get {
        cid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum TrialCmd {
    /// Submitted and missing datasets for a trial.
    Status { trial: Option<String> },
    /// All records of a trial.
    Records { trial: Option<String> },
}

#[derive(Debug, Subcommand)]
pub enum FileCmd {
    /// Every record of a filename, oldest first.
    History { name: String },
}

#[derive(Debug, Subcommand)]
pub enum ChainCmd {
    /// Verify every block hash, link and signature.
    Check,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "64KiB,1MiB,8MiB,64MiB")]
    pub sizes: String,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, default_value_t = 2)]
    pub replication: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Store blobs on disk under this directory.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}
