//! Command execution against any [`Backend`].

use std::fs;
use std::io::Write;
use std::path::Path;

use custody_core::blobstore::ContentId;
use custody_core::contract::{ContractCall, Event, EventKind, IndexedRecord};
use custody_core::integrity::{VerdictStatus, VerificationVerdict};
use custody_core::ledger::ChainReport;
use custody_core::{Digest, Identity, PublicKey};
use custody_service::api::{
    record_call, Auth, ManifestRequest, OwnerRequest, RecordPayload, RecordResponse, RecordUpload,
    TxState, WhitelistRequest, WriteResponse,
};
use custody_service::Backend;
use serde::Serialize;

use crate::cli::{BlobCmd, ChainCmd, Command, FileCmd, ManifestCmd, OwnerCmd, RecordCmd, TrialCmd, WhitelistCmd};
use crate::error::{exit, CliError};

pub struct Context<'a> {
    pub json: bool,
    pub identity: Option<Identity>,
    pub trial: Option<String>,
    pub out: &'a mut dyn Write,
}

impl Context<'_> {
    fn signer(&self) -> Result<&Identity, CliError> {
        self.identity
            .as_ref()
            .ok_or_else(|| CliError::usage("this command signs a transaction: pass --key"))
    }

    fn trial(&self, positional: &Option<String>) -> Result<String, CliError> {
        positional
            .clone()
            .or_else(|| self.trial.clone())
            .ok_or_else(|| CliError::usage("no trial given: pass it as an argument or with --trial"))
    }

    fn emit<T: Serialize>(&mut self, value: &T, human: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let r = if self.json {
            serde_json::to_string_pretty(value)
                .map_err(std::io::Error::other)
                .and_then(|s| writeln!(self.out, "{s}"))
        } else {
            human(self.out)
        };
        r.map_err(|e| CliError::io("stdout", e))
    }
}

fn parse_key(s: &str) -> Result<PublicKey, CliError> {
    s.parse().map_err(|e| CliError::usage(format!("public key {s:?}: {e}")))
}

fn next_nonce(b: &mut dyn Backend, id: &Identity) -> Result<u64, CliError> {
    Ok(b.nonce(&id.public_key())?.next_nonce)
}

fn short(s: &str) -> &str {
    &s[..s.len().min(12)]
}

fn write_line(w: &WriteResponse) -> String {
    match w {
        WriteResponse::Sealed { receipt } => format!(
            "sealed tx {} in block {} (index {})",
            receipt.tx_id, receipt.block_height, receipt.tx_index
        ),
        WriteResponse::Pending { tx_id, position } => {
            format!("queued tx {tx_id} at position {position}; poll with `custody tx {tx_id}`")
        }
    }
}

fn records_table(out: &mut dyn Write, records: &[IndexedRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(
            out,
            "  #{:<4} {:<24} sha256:{}  t={}  by {}",
            r.id,
            r.record.filename,
            r.record.file_hash,
            r.record.timestamp,
            short(&r.record.submitter.to_string())
        )?;
    }
    Ok(())
}

fn verdict_line(out: &mut dyn Write, v: &VerificationVerdict) -> std::io::Result<()> {
    let id = v.record_id.map(|i| format!("#{i}")).unwrap_or_else(|| "-".into());
    write!(out, "  {:<10} {:<24} {:<6}", v.status.as_str(), v.filename, id)?;
    match (v.ledger_hash, v.computed_hash) {
        (Some(l), Some(c)) if l != c => writeln!(out, " ledger {} computed {}", l, c),
        (Some(l), _) => writeln!(out, " sha256:{l}"),
        _ => writeln!(out),
    }
}

fn integrity_exit(verdicts: &[VerificationVerdict]) -> i32 {
    let failed = verdicts
        .iter()
        .any(|v| matches!(v.status, VerdictStatus::Mismatch | VerdictStatus::NoBlob));
    if failed {
        exit::INTEGRITY
    } else {
        exit::OK
    }
}

fn event_line(ev: &Event) -> String {
    let what = match &ev.kind {
        EventKind::RecordAdded { record_id, record } => format!(
            "record #{record_id} {} / {} sha256:{}",
            record.trial_id, record.filename, record.file_hash
        ),
        EventKind::ManifestSet { manifest } => {
            format!("manifest {} ({} files)", manifest.trial_id, manifest.required_filenames.len())
        }
        EventKind::WhitelistChanged { key, added, changed } => format!(
            "whitelist {} {}{}",
            if *added { "add" } else { "remove" },
            key,
            if *changed { "" } else { " (no change)" }
        ),
        EventKind::OwnershipTransferred { previous, new_owner } => {
            format!("owner {} -> {}", short(&previous.to_string()), new_owner)
        }
    };
    format!("[{}] block {} tx {}: {}", ev.seq, ev.block_height, ev.tx_index, what)
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(&path.display().to_string(), e))
}

/// Runs one command that talks to a backend. Returns the exit code for a
/// command that completed (0, or 3 when verification finds a problem).
pub fn execute(cmd: &Command, backend: &mut dyn Backend, ctx: &mut Context<'_>) -> Result<i32, CliError> {
    match cmd {
        Command::Whitelist(w) => {
            let id = ctx.signer()?.clone();
            let (add, key) = match w {
                WhitelistCmd::Add { pubkey } => (true, parse_key(pubkey)?),
                WhitelistCmd::Remove { pubkey } => (false, parse_key(pubkey)?),
            };
            let call = if add {
                ContractCall::WhitelistAdd { key }
            } else {
                ContractCall::WhitelistRemove { key }
            };
            let req = WhitelistRequest {
                key,
                auth: Auth::sign(&id, &call, next_nonce(backend, &id)?),
            };
            let w = backend.whitelist(add, &req)?;
            ctx.emit(&w, |o| writeln!(o, "{}", write_line(&w)))?;
        }
        Command::Owner(OwnerCmd::Transfer { pubkey }) => {
            let id = ctx.signer()?.clone();
            let new_owner = parse_key(pubkey)?;
            let call = ContractCall::TransferOwnership { new_owner };
            let req = OwnerRequest {
                new_owner,
                auth: Auth::sign(&id, &call, next_nonce(backend, &id)?),
            };
            let w = backend.transfer_ownership(&req)?;
            ctx.emit(&w, |o| writeln!(o, "{}", write_line(&w)))?;
        }
        Command::Manifest(ManifestCmd::Set { filenames }) => {
            let id = ctx.signer()?.clone();
            let trial = ctx.trial(&None)?;
            let call = ContractCall::SetManifest {
                trial_id: trial.clone(),
                filenames: filenames.clone(),
            };
            let req = ManifestRequest {
                filenames: filenames.clone(),
                auth: Auth::sign(&id, &call, next_nonce(backend, &id)?),
            };
            let w = backend.set_manifest(&trial, &req)?;
            ctx.emit(&w, |o| {
                writeln!(o, "manifest for {trial}: {} files", filenames.len())?;
                writeln!(o, "{}", write_line(&w))
            })?;
        }
        Command::Record(RecordCmd::Add { path, name, hash_only }) => {
            let id = ctx.signer()?.clone();
            let trial = ctx.trial(&None)?;
            let filename = match name {
                Some(n) => n.clone(),
                None => path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| CliError::usage("cannot derive a filename; pass --name"))?
                    .to_string(),
            };
            let payload = if *hash_only {
                let f = fs::File::open(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
                RecordPayload::Hash(Digest::of_reader(f).map_err(|e| CliError::io("hashing", e))?)
            } else {
                RecordPayload::Bytes(read_file(path)?)
            };
            let call = record_call(&trial, &filename, &payload.digest());
            let upload = RecordUpload {
                filename,
                auth: Auth::sign(&id, &call, next_nonce(backend, &id)?),
                payload,
            };
            let r: RecordResponse = backend.submit_record(&trial, &upload)?;
            ctx.emit(&r, |o| {
                match r.record_id {
                    Some(rid) => writeln!(o, "record #{rid} {trial} / {}", upload.filename)?,
                    None => writeln!(o, "record {trial} / {} submitted", upload.filename)?,
                }
                writeln!(o, "sha256:{}  cid {}{}", r.file_hash, r.cid, if r.stored { "" } else { " (not stored)" })?;
                writeln!(o, "{}", write_line(&r.write))
            })?;
        }
        Command::Blob(BlobCmd::Put { path }) => {
            let bytes = read_file(path)?;
            let r = backend.put_blob(&bytes)?;
            ctx.emit(&r, |o| writeln!(o, "stored {}", r.cid))?;
        }
        Command::Blob(BlobCmd::Get { cid, out }) => {
            let cid: ContentId = cid.parse().map_err(|e| CliError::usage(format!("cid: {e}")))?;
            let bytes = backend.get_blob(&cid)?;
            fs::write(out, &bytes).map_err(|e| CliError::io(&out.display().to_string(), e))?;
            let summary = serde_json::json!({ "cid": cid, "bytes": bytes.len(), "out": out });
            ctx.emit(&summary, |o| writeln!(o, "wrote {} bytes to {}", bytes.len(), out.display()))?;
        }
        Command::Trial(TrialCmd::Status { trial }) => {
            let trial = ctx.trial(trial)?;
            let c = backend.completeness(&trial)?;
            let records = backend.records(&trial)?;
            let body = serde_json::json!({ "completeness": c, "records": records });
            ctx.emit(&body, |o| {
                writeln!(
                    o,
                    "trial {trial}: {} submitted, {} missing ({} required)",
                    c.submitted.len(),
                    c.missing.len(),
                    c.required.len()
                )?;
                records_table(o, &records)?;
                for m in &c.missing {
                    writeln!(o, "  missing  {m}")?;
                }
                Ok(())
            })?;
        }
        Command::Trial(TrialCmd::Records { trial }) => {
            let trial = ctx.trial(trial)?;
            let records = backend.records(&trial)?;
            ctx.emit(&records, |o| records_table(o, &records))?;
        }
        Command::File(FileCmd::History { name }) => {
            let trial = ctx.trial(&None)?;
            let h = backend.history(&trial, name)?;
            ctx.emit(&h, |o| {
                writeln!(o, "{trial} / {name}: {} records", h.len())?;
                records_table(o, &h)
            })?;
        }
        Command::Verify { trial, file, record_id } => {
            let trial = ctx.trial(trial)?;
            if let Some(file) = file {
                let v = backend.verify_file(&trial, file, *record_id)?;
                ctx.emit(&v, |o| verdict_line(o, &v))?;
                return Ok(integrity_exit(std::slice::from_ref(&v)));
            }
            let t = backend.verify_trial(&trial)?;
            ctx.emit(&t, |o| {
                for v in &t.verdicts {
                    verdict_line(o, v)?;
                }
                let s = &t.summary;
                writeln!(
                    o,
                    "{trial}: {} verified, {} mismatch, {} no-blob, {} no-record of {}",
                    s.verified, s.mismatch, s.no_blob, s.missing, s.total
                )
            })?;
            return Ok(integrity_exit(&t.verdicts));
        }
        Command::Chain(ChainCmd::Check) => {
            let report = backend.chain_check()?;
            return report_chain(&report, ctx);
        }
        Command::Events { cursor, follow } => {
            if *follow {
                return Err(CliError::usage("--follow needs a server connection"));
            }
            let log = backend.events(*cursor)?;
            ctx.emit(&log, |o| {
                for ev in &log.events {
                    writeln!(o, "{}", event_line(ev))?;
                }
                Ok(())
            })?;
        }
        Command::Block { height } => {
            let b = backend.block(*height)?;
            ctx.emit(&b, |o| {
                writeln!(o, "block {} hash {} parent {} t={}", b.height, b.block_hash, b.parent_hash, b.timestamp)?;
                for (i, s) in b.transactions.iter().enumerate() {
                    let outcome = match &s.status {
                        custody_core::ledger::TxStatus::Applied { .. } => "applied".to_string(),
                        custody_core::ledger::TxStatus::Failed { error } => format!("failed: {error}"),
                    };
                    writeln!(o, "  [{i}] {} by {} nonce {}: {outcome}", s.tx.call.name(), short(&s.tx.sender.to_string()), s.tx.nonce)?;
                }
                Ok(())
            })?;
        }
        Command::Tx { id } => {
            let id = Digest::from_hex(id).map_err(|e| CliError::usage(format!("tx id: {e}")))?;
            let t = backend.tx(&id)?;
            ctx.emit(&t, |o| match &t.state {
                TxState::Sealed { receipt, sealed } => writeln!(
                    o,
                    "tx {} ({}) in block {} index {}: {}",
                    t.tx_id,
                    sealed.tx.call.name(),
                    receipt.block_height,
                    receipt.tx_index,
                    if receipt.status.is_applied() { "applied" } else { "failed" }
                ),
                TxState::Pending { position, .. } => writeln!(o, "tx {} pending at position {position}", t.tx_id),
            })?;
        }
        Command::Status => {
            let s = backend.status()?;
            ctx.emit(&s, |o| {
                writeln!(o, "height {} tip {} ({} pending, {:?} sealing)", s.height, s.tip_hash, s.pending, s.seal_mode)?;
                writeln!(o, "owner {}", s.owner)?;
                writeln!(o, "{} whitelisted, {} records, {} events, trials: {}", s.whitelist.len(), s.record_count, s.event_count, s.trials.join(", "))?;
                for p in &s.peers {
                    writeln!(o, "  peer {:<12} {:?} {} blobs {} bytes{}", p.id.as_str(), p.role, p.blobs, p.stored_bytes, if p.online { "" } else { " (offline)" })?;
                }
                Ok(())
            })?;
        }
        Command::Keygen { .. } | Command::Init | Command::Serve(_) | Command::Bench(_) => {
            return Err(CliError::usage("command does not use a backend"));
        }
    }
    Ok(exit::OK)
}

pub fn report_chain(report: &ChainReport, ctx: &mut Context<'_>) -> Result<i32, CliError> {
    ctx.emit(report, |o| match report {
        ChainReport::Ok { blocks } => writeln!(o, "chain ok: {blocks} blocks"),
        ChainReport::Bad { height, defect } => writeln!(o, "chain fails at height {height}: {defect}"),
    })?;
    Ok(if report.is_ok() { exit::OK } else { exit::INTEGRITY })
}

pub fn print_event(ctx: &mut Context<'_>, ev: &Event) -> Result<(), CliError> {
    let r = if ctx.json {
        serde_json::to_string(ev)
            .map_err(std::io::Error::other)
            .and_then(|s| writeln!(ctx.out, "{s}"))
    } else {
        writeln!(ctx.out, "{}", event_line(ev))
    };
    r.and_then(|_| ctx.out.flush()).map_err(|e| CliError::io("stdout", e))
}
