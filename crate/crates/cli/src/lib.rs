//! The `custody` command-line tool.
//!
//! Every data command maps to one service endpoint and runs through
//! [`commands::execute`] against a [`custody_service::Backend`]: the HTTP
//! client by default, or an in-process node with `--embedded`.

pub mod bench;
pub mod cli;
pub mod commands;
pub mod error;
pub mod keyfile;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use custody_core::blobstore::ClusterConfig;
use custody_core::contract::ContractCall;
use custody_core::ledger::Transaction;
use custody_core::Identity;
use custody_service::client::HttpClient;
use custody_service::{Backend, Node, NodeOptions, ServiceConfig, SharedNode, SystemClock};

use crate::cli::{BenchArgs, ChainCmd, Cli, Command, ServeArgs, DEFAULT_SERVER};
use crate::commands::Context;
use crate::error::{exit, CliError};

fn service_config(cli: &Cli) -> Result<ServiceConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ServiceConfig::load(p).map_err(|e| CliError::usage(e.to_string()))?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env().map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(root) = &cli.data_root {
        cfg.data_root = Some(root.clone());
    }
    Ok(cfg)
}

fn data_root(cfg: &ServiceConfig) -> Result<PathBuf, CliError> {
    cfg.data_root
        .clone()
        .ok_or_else(|| CliError::usage("no data root: pass --data-root or set CUSTODY_DATA_ROOT"))
}

fn node_error(e: custody_service::NodeError) -> CliError {
    use custody_core::ledger::LedgerError;
    use custody_service::NodeError;
    match &e {
        NodeError::Ledger(LedgerError::NotFound(_)) => {
            CliError::new(exit::NOT_FOUND, "NotInitialized", format!("{e}; run `custody init` first"))
        }
        NodeError::Ledger(LedgerError::Tampered { .. } | LedgerError::ReplayDivergence { .. }) => {
            CliError::new(exit::INTEGRITY, "Tampered", e.to_string())
        }
        NodeError::Ledger(LedgerError::AlreadyInitialized(_)) => {
            CliError::new(exit::USAGE, "AlreadyInitialized", e.to_string())
        }
        _ => CliError::new(exit::FAILURE, "Node", e.to_string()),
    }
}

fn open_node(cfg: &ServiceConfig) -> Result<Node, CliError> {
    Node::open(&data_root(cfg)?, NodeOptions::from(cfg), Arc::new(SystemClock)).map_err(node_error)
}

fn identity(cli: &Cli) -> Result<Option<Identity>, CliError> {
    cli.key.as_deref().map(keyfile::read).transpose()
}

/// Parses nothing; runs an already parsed command line. Returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let io = |e| CliError::io("stdout", e);
    match &cli.command {
        Command::Keygen { out: path, force } => {
            let id = Identity::generate();
            keyfile::write(path, &id, *force)?;
            let body = serde_json::json!({ "public_key": id.public_key(), "key_file": path });
            if cli.json {
                writeln!(out, "{body}").map_err(io)?;
            } else {
                writeln!(out, "{}", id.public_key()).map_err(io)?;
            }
            Ok(exit::OK)
        }
        Command::Init => {
            let cfg = service_config(cli)?;
            let root = data_root(&cfg)?;
            let owner = identity(cli)?.ok_or_else(|| CliError::usage("init needs the owner's --key"))?;
            let deploy = Transaction::sign(&owner, ContractCall::Deploy, 0);
            let node = Node::init(&root, deploy, NodeOptions::from(&cfg), Arc::new(SystemClock)).map_err(node_error)?;
            let genesis = node.ledger().tip();
            let body = serde_json::json!({
                "data_root": root,
                "owner": owner.public_key(),
                "genesis_hash": genesis.block_hash,
            });
            if cli.json {
                writeln!(out, "{body}").map_err(io)?;
            } else {
                writeln!(out, "initialised {} owned by {}", root.display(), owner.public_key()).map_err(io)?;
                writeln!(out, "genesis {}", genesis.block_hash).map_err(io)?;
            }
            Ok(exit::OK)
        }
        Command::Serve(args) => serve(cli, args),
        Command::Bench(args) => bench(cli, args, out),
        Command::Chain(ChainCmd::Check) if cli.embedded => {
            let cfg = service_config(cli)?;
            let report = Node::check_stored_chain(&data_root(&cfg)?).map_err(node_error)?;
            let mut ctx = Context {
                json: cli.json,
                identity: None,
                trial: None,
                out,
            };
            commands::report_chain(&report, &mut ctx)
        }
        Command::Events { cursor, follow: true } if !cli.embedded => {
            let client = HttpClient::new(cli.server.as_deref().unwrap_or(DEFAULT_SERVER))?;
            let mut ctx = Context {
                json: cli.json,
                identity: None,
                trial: None,
                out,
            };
            for item in client.stream_events(*cursor)? {
                let (_, ev) = item?;
                commands::print_event(&mut ctx, &ev)?;
            }
            Ok(exit::OK)
        }
        cmd => {
            let mut backend: Box<dyn Backend> = if cli.embedded {
                Box::new(open_node(&service_config(cli)?)?)
            } else {
                Box::new(HttpClient::new(cli.server.as_deref().unwrap_or(DEFAULT_SERVER))?)
            };
            let mut ctx = Context {
                json: cli.json,
                identity: identity(cli)?,
                trial: cli.trial.clone(),
                out,
            };
            commands::execute(cmd, backend.as_mut(), &mut ctx)
        }
    }
}

fn serve(cli: &Cli, args: &ServeArgs) -> Result<i32, CliError> {
    let mut cfg = service_config(cli)?;
    if let Some(l) = args.listen {
        cfg.listen = l;
    }
    if let Some(m) = args.seal_mode {
        cfg.seal_mode = m;
    }
    if let Some(ms) = args.block_interval_ms {
        cfg.block_interval_ms = ms;
    }
    let node = open_node(&cfg)?;
    let shared = SharedNode::new(node);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .map_err(|e| CliError::io(&cfg.listen.to_string(), e))?;
        let addr = listener.local_addr().map_err(|e| CliError::io("listener", e))?;
        eprintln!("listening on {addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        custody_service::server::serve(listener, shared, cfg.block_interval(), shutdown)
            .await
            .map_err(|e| CliError::io("server", e))
    })?;
    Ok(exit::OK)
}

fn bench(cli: &Cli, args: &BenchArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let sizes = bench::parse_sizes(&args.sizes).map_err(CliError::usage)?;
    if sizes.is_empty() {
        return Err(CliError::usage("no sizes given"));
    }
    let opts = bench::BenchOptions {
        sizes,
        repeat: args.repeat,
        cluster: ClusterConfig {
            replication_factor: args.replication,
            ..ClusterConfig::default()
        },
        seed: args.seed,
        dir: args.dir.clone(),
    };
    let rows = bench::run(&opts)?;
    match (&args.out, cli.json) {
        (Some(path), _) => {
            let f = std::fs::File::create(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
            bench::write_csv(&rows, f)?;
        }
        (None, true) => writeln!(out, "{}", serde_json::to_string_pretty(&rows).unwrap_or_default())
            .map_err(|e| CliError::io("stdout", e))?,
        (None, false) => bench::write_csv(&rows, out)?,
    }
    for (name, col) in [("import_ms", 0), ("download_ms", 1)] {
        let ok = bench::non_decreasing(&rows, |r| if col == 0 { r.import_ms } else { r.download_ms });
        if !ok {
            eprintln!("warning: {name} is not non-decreasing across sizes on this run");
        }
    }
    Ok(exit::OK)
}

/// Used by `main` and tests that run the command line in-process.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code
        }
    }
}

pub fn default_key_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.key"))
}
