//! Test-only generators and brute-force oracles, shared by the property tests
//! and the acceptance suite. Enabled with the `testkit` feature.
//!
//! Oracles here never call the query paths they check: they recompute from
//! raw record sequences, raw stored bytes, or a shadow model.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use crate::blobstore::{Cluster, ClusterConfig, ContentId, PeerId};
use crate::codec::Canonical;
use crate::contract::{CallContext, Contract, ContractCall, ContractError, EventKind, MetadataRecord};
use crate::digest::Digest;
use crate::identity::{Identity, PublicKey};
use crate::ledger::{Ledger, LedgerConfig, Transaction};

pub const T0: u64 = 1_700_000_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed identities so runs are reproducible.
pub fn actor(n: u8) -> Identity {
    Identity::from_secret([n.wrapping_add(1); 32])
}

// ---------------------------------------------------------------- ledger

/// A chain with `blocks` sealed blocks after genesis carrying a mix of
/// accepted and rejected calls.
pub fn build_chain(owner: &Identity, blocks: u64, seed: u64) -> Ledger {
    let mut r = rng(seed);
    let stranger = actor(200);
    let deploy = Transaction::sign(owner, ContractCall::Deploy, 0);
    let mut ledger = Ledger::create(deploy, T0, LedgerConfig::default()).expect("genesis");
    let mut nonce = 1;
    let mut stranger_nonce = 0;
    for h in 1..=blocks {
        for _ in 0..r.random_range(1..=3) {
            let name = format!("f{}.bin", r.random_range(0..20));
            let call = ContractCall::RecordMetadata {
                file_hash: Digest::of(name.as_bytes()).to_hex(),
                filename: name,
                trial_id: format!("T{}", r.random_range(1..=3)),
            };
            if r.random_bool(0.2) {
                ledger
                    .submit(Transaction::sign(&stranger, call, stranger_nonce))
                    .expect("submit");
                stranger_nonce += 1;
            } else {
                ledger
                    .submit(Transaction::sign(owner, call, nonce))
                    .expect("submit");
                nonce += 1;
            }
        }
        ledger.seal(T0 + h * 13).expect("seal");
    }
    ledger
}

pub fn encode_blocks(ledger: &Ledger) -> Vec<Vec<u8>> {
    ledger.blocks().iter().map(|b| b.to_canonical_bytes()).collect()
}

/// Walks stored block encodings directly: height at bytes `0..8`, parent at
/// `8..40`, timestamp at `40..48`, own hash in the last 32 bytes.
pub fn oracle_first_bad(raw: &[Vec<u8>]) -> Option<u64> {
    let mut prev_hash = [0u8; 32];
    let mut prev_ts = 0u64;
    for (i, b) in raw.iter().enumerate() {
        if b.len() < 48 + 4 + 32 {
            return Some(i as u64);
        }
        let (body, stored) = b.split_at(b.len() - 32);
        let height = u64::from_be_bytes(body[0..8].try_into().expect("8"));
        let ts = u64::from_be_bytes(body[40..48].try_into().expect("8"));
        let recomputed: [u8; 32] = Sha256::digest(body).into();
        if height != i as u64 || recomputed != stored || body[8..40] != prev_hash || ts < prev_ts {
            return Some(i as u64);
        }
        prev_hash.copy_from_slice(stored);
        prev_ts = ts;
    }
    None
}

// -------------------------------------------------------------- contract

#[derive(Debug, Clone)]
pub enum Op {
    TransferOwnership { by: u8, to: u8 },
    WhitelistAdd { by: u8, key: u8 },
    WhitelistRemove { by: u8, key: u8 },
    SetManifest { by: u8, trial: String, files: Vec<String> },
    Record { by: u8, trial: String, file: String, hash: String },
}

const ACTORS: u8 = 4;
const TRIALS: [&str; 3] = ["T1", "T2", "T3"];
const FILES: [&str; 5] = ["a.csv", "b.mp4", "c.log", "d.bag", "e.json"];

pub fn random_ops(r: &mut impl RngCore, len: usize) -> Vec<Op> {
    let mut ops = Vec::with_capacity(len);
    for _ in 0..len {
        let by = r.random_range(0..ACTORS);
        let op = match r.random_range(0..100) {
            0..=4 => Op::TransferOwnership {
                by,
                to: r.random_range(0..ACTORS),
            },
            5..=19 => Op::WhitelistAdd {
                by,
                key: r.random_range(0..ACTORS),
            },
            20..=27 => Op::WhitelistRemove {
                by,
                key: r.random_range(0..ACTORS),
            },
            28..=39 => {
                let n = r.random_range(0..=4);
                let mut files: Vec<String> = (0..n)
                    .map(|_| FILES.choose(r).expect("non-empty").to_string())
                    .collect();
                if r.random_bool(0.05) {
                    files.push(String::new());
                }
                Op::SetManifest {
                    by,
                    trial: TRIALS.choose(r).expect("non-empty").to_string(),
                    files,
                }
            }
            _ => {
                let hash = match r.random_range(0..20) {
                    0 => "not-a-digest".to_string(),
                    _ => {
                        let mut b = [0u8; 8];
                        r.fill_bytes(&mut b);
                        Digest::of(&b).to_hex()
                    }
                };
                let file = if r.random_bool(0.03) {
                    String::new()
                } else {
                    FILES.choose(r).expect("non-empty").to_string()
                };
                Op::Record {
                    by,
                    trial: TRIALS.choose(r).expect("non-empty").to_string(),
                    file,
                    hash,
                }
            }
        };
        ops.push(op);
    }
    ops
}

fn to_call(op: &Op, keys: &[PublicKey]) -> (u8, ContractCall) {
    match op {
        Op::TransferOwnership { by, to } => (*by, ContractCall::TransferOwnership { new_owner: keys[*to as usize] }),
        Op::WhitelistAdd { by, key } => (*by, ContractCall::WhitelistAdd { key: keys[*key as usize] }),
        Op::WhitelistRemove { by, key } => (*by, ContractCall::WhitelistRemove { key: keys[*key as usize] }),
        Op::SetManifest { by, trial, files } => (
            *by,
            ContractCall::SetManifest {
                trial_id: trial.clone(),
                filenames: files.clone(),
            },
        ),
        Op::Record { by, trial, file, hash } => (
            *by,
            ContractCall::RecordMetadata {
                filename: file.clone(),
                trial_id: trial.clone(),
                file_hash: hash.clone(),
            },
        ),
    }
}

/// Independent model of who may do what.
#[derive(Debug, Clone)]
struct Shadow {
    owner: u8,
    whitelist: BTreeSet<u8>,
}

impl Shadow {
    fn expect_ok(&self, op: &Op) -> bool {
        match op {
            Op::TransferOwnership { by, .. } | Op::WhitelistAdd { by, .. } | Op::WhitelistRemove { by, .. } => {
                *by == self.owner
            }
            Op::SetManifest { by, files, .. } => {
                let distinct: BTreeSet<_> = files.iter().collect();
                *by == self.owner
                    && !files.is_empty()
                    && distinct.len() == files.len()
                    && files.iter().all(|f| !f.is_empty())
            }
            Op::Record { by, file, hash, .. } => {
                (*by == self.owner || self.whitelist.contains(by))
                    && !file.is_empty()
                    && Digest::from_hex(hash).is_ok()
            }
        }
    }

    fn apply(&mut self, op: &Op) {
        match op {
            Op::TransferOwnership { to, .. } => self.owner = *to,
            Op::WhitelistAdd { key, .. } => {
                self.whitelist.insert(*key);
            }
            Op::WhitelistRemove { key, .. } => {
                self.whitelist.remove(key);
            }
            _ => {}
        }
    }
}

/// Runs `ops` against a fresh contract and checks every contract invariant
/// after every step. Returns a description of the first violation.
pub fn check_contract_sequence(ops: &[Op]) -> Result<(), String> {
    let ids: Vec<Identity> = (0..ACTORS).map(actor).collect();
    let keys: Vec<PublicKey> = ids.iter().map(Identity::public_key).collect();
    let mut contract = Contract::deploy(keys[0]);
    let mut shadow = Shadow {
        owner: 0,
        whitelist: BTreeSet::new(),
    };
    let mut snapshot: Vec<MetadataRecord> = Vec::new();
    let mut manifests: BTreeMap<String, Vec<String>> = BTreeMap::new();

    for (step, op) in ops.iter().enumerate() {
        let (by, call) = to_call(op, &keys);
        let before = contract.clone();
        let ctx = CallContext {
            sender: keys[by as usize],
            timestamp: T0 + step as u64,
            block_height: step as u64 + 1,
            tx_index: 0,
        };
        let result = contract.apply(&ctx, &call);
        let expect_ok = shadow.expect_ok(op);
        if result.is_ok() != expect_ok {
            return Err(format!("step {step}: {op:?} gave {result:?}, model expected ok={expect_ok}"));
        }
        match &result {
            Ok(_) => {
                shadow.apply(op);
                if let Op::SetManifest { trial, files, .. } = op {
                    manifests.insert(trial.clone(), files.clone());
                }
            }
            Err(e) => {
                if contract != before {
                    return Err(format!("step {step}: rejected call mutated state"));
                }
                let role_error = matches!(e, ContractError::NotOwner | ContractError::NotWhitelisted);
                let authorized = match op {
                    Op::Record { by, .. } => *by == shadow.owner || shadow.whitelist.contains(by),
                    Op::TransferOwnership { by, .. }
                    | Op::WhitelistAdd { by, .. }
                    | Op::WhitelistRemove { by, .. }
                    | Op::SetManifest { by, .. } => *by == shadow.owner,
                };
                if role_error == authorized {
                    return Err(format!("step {step}: {e:?} inconsistent with authorization {authorized}"));
                }
            }
        }
        if let (Ok(out), Op::Record { .. }) = (&result, op) {
            if out.record_id != Some(snapshot.len() as u64) {
                return Err(format!("step {step}: record id {:?} != position {}", out.record_id, snapshot.len()));
            }
            let rec = contract.records().last().expect("just appended");
            if rec.submitter != ctx.sender || rec.timestamp != ctx.timestamp {
                return Err(format!("step {step}: record fields not taken from context"));
            }
        }

        // append-only immutability
        let records = contract.records();
        if records.len() < snapshot.len() || records[..snapshot.len()] != snapshot[..] {
            return Err(format!("step {step}: earlier record changed"));
        }
        snapshot = records.to_vec();

        // index-as-id
        for (i, r) in records.iter().enumerate() {
            if contract.get_record(i as u64).ok() != Some(r) {
                return Err(format!("step {step}: get_record({i}) disagrees with position"));
            }
        }

        for trial in TRIALS {
            // two-phase retrieval vs brute-force filter
            let filtered: Vec<&MetadataRecord> = records.iter().filter(|r| r.trial_id == trial).collect();
            let ids = contract.get_record_ids(trial);
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("step {step}: ids for {trial} not ascending"));
            }
            let two_phase: Vec<&MetadataRecord> = ids
                .iter()
                .map(|&i| contract.get_record(i).expect("indexed id exists"))
                .collect();
            if two_phase != filtered {
                return Err(format!("step {step}: two-phase retrieval for {trial} != filter"));
            }
            if contract.get_count(trial) != filtered.len() as u64 || ids.len() != filtered.len() {
                return Err(format!("step {step}: count for {trial} inconsistent"));
            }
            for file in FILES {
                let hist: Vec<MetadataRecord> = contract
                    .history(trial, file)
                    .into_iter()
                    .map(|r| r.record)
                    .collect();
                let brute: Vec<MetadataRecord> = records
                    .iter()
                    .filter(|r| r.trial_id == trial && r.filename == file)
                    .cloned()
                    .collect();
                if hist != brute {
                    return Err(format!("step {step}: history({trial},{file}) != filter"));
                }
            }
            // completeness partition
            match (manifests.get(trial), contract.completeness(trial)) {
                (None, Err(_)) => {}
                (Some(required), Ok(c)) => {
                    let recorded: BTreeSet<&str> =
                        filtered.iter().map(|r| r.filename.as_str()).collect();
                    let present: Vec<&String> =
                        required.iter().filter(|f| recorded.contains(f.as_str())).collect();
                    let missing_set: BTreeSet<&String> = c.missing.iter().collect();
                    let expected_missing: Vec<&String> =
                        required.iter().filter(|f| !recorded.contains(f.as_str())).collect();
                    if c.missing.iter().collect::<Vec<_>>() != expected_missing
                        || present.iter().any(|p| missing_set.contains(p))
                        || present.len() + c.missing.len() != required.len()
                    {
                        return Err(format!("step {step}: completeness for {trial} wrong"));
                    }
                    let submitted: BTreeSet<&str> = c.submitted.iter().map(String::as_str).collect();
                    if submitted != recorded || submitted.len() != c.submitted.len() {
                        return Err(format!("step {step}: submitted set for {trial} wrong"));
                    }
                }
                (m, c) => return Err(format!("step {step}: manifest {m:?} vs completeness {c:?}")),
            }
        }

        // event completeness: one RecordAdded per record, in order, same payload
        let added: Vec<(u64, &MetadataRecord)> = contract
            .events_since(0)
            .expect("cursor 0")
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::RecordAdded { record_id, record } => Some((*record_id, record)),
                _ => None,
            })
            .collect();
        if added.len() != records.len()
            || added
                .iter()
                .enumerate()
                .any(|(i, (id, r))| *id != i as u64 || *r != &records[i])
        {
            return Err(format!("step {step}: RecordAdded events do not mirror records"));
        }
        if contract.owner() != keys[shadow.owner as usize] {
            return Err(format!("step {step}: owner diverged from model"));
        }
    }
    Ok(())
}

// --------------------------------------------------------------- cluster

#[derive(Debug, Clone)]
pub enum ChurnOp {
    Add(Vec<u8>),
    Pin { blob: usize, replication: u32 },
    Offline(usize),
    Online(usize),
    Rebalance,
}

pub fn churn_schedule(r: &mut impl RngCore, peers: usize, steps: usize) -> Vec<ChurnOp> {
    let mut ops = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        ops.push(match r.random_range(0..10) {
            0..=1 => {
                let mut b = vec![0u8; r.random_range(1..64)];
                r.fill_bytes(&mut b);
                ChurnOp::Add(b)
            }
            2 => ChurnOp::Pin {
                blob: r.random_range(0..8),
                replication: r.random_range(1..=3),
            },
            3..=4 => ChurnOp::Offline(r.random_range(0..peers)),
            5..=6 => ChurnOp::Online(r.random_range(0..peers)),
            _ => ChurnOp::Rebalance,
        });
    }
    ops.push(ChurnOp::Rebalance);
    ops
}

/// Counts, without consulting the pin bookkeeping helpers, the online
/// assigned peers whose stored bytes re-hash to `cid`.
pub fn recount_holders(cluster: &Cluster, cid: &ContentId) -> usize {
    let Some(entry) = cluster.pin_set().get(cid) else {
        return 0;
    };
    entry
        .assigned
        .iter()
        .filter(|p| {
            let peer = cluster.peer(p.as_str()).expect("assigned peer exists");
            peer.is_online()
                && peer
                    .blob(cid)
                    .is_some_and(|b| Sha256::digest(b).as_slice() == cid.digest().as_bytes())
        })
        .count()
}

fn reachable(cluster: &Cluster, cid: &ContentId) -> bool {
    cluster.peers().any(|p| {
        p.is_online()
            && p
                .blob(cid)
                .is_some_and(|b| Sha256::digest(b).as_slice() == cid.digest().as_bytes())
    })
}

/// Replays a churn schedule over a fresh cluster and checks, after every
/// rebalance, that each reachable pin has `min(r, online)` holders and each
/// unreachable pin is reported unavailable. Also checks that followers are
/// never able to change the pin set.
pub fn check_churn(config: &ClusterConfig, ops: &[ChurnOp]) -> Result<usize, String> {
    let mut cluster = Cluster::from_config(config);
    let peer_ids: Vec<PeerId> = cluster.peers().map(|p| p.id().clone()).collect();
    let standard = cluster
        .peers()
        .find(|p| p.role() == crate::blobstore::PeerRole::Standard)
        .map(|p| p.id().clone());
    let follower = cluster
        .peers()
        .find(|p| p.role() == crate::blobstore::PeerRole::Follower)
        .map(|p| p.id().clone());
    let mut cids: Vec<ContentId> = Vec::new();
    let mut rebalances = 0;
    for (step, op) in ops.iter().enumerate() {
        match op {
            ChurnOp::Add(bytes) => {
                if let Ok(cid) = cluster.add_blob(bytes) {
                    cids.push(cid);
                }
            }
            ChurnOp::Pin { blob, replication } => {
                if cids.is_empty() {
                    continue;
                }
                let cid = cids[blob % cids.len()];
                if let Some(f) = &follower {
                    let before = cluster.pin_set().clone();
                    if cluster.pin(f.as_str(), &cid, *replication).is_ok() || cluster.pin_set() != &before {
                        return Err(format!("step {step}: follower changed the pin set"));
                    }
                }
                if let Some(s) = &standard {
                    let _ = cluster.pin(s.as_str(), &cid, *replication);
                }
            }
            ChurnOp::Offline(i) => cluster
                .set_peer_online(peer_ids[i % peer_ids.len()].as_str(), false)
                .map_err(|e| e.to_string())?,
            ChurnOp::Online(i) => cluster
                .set_peer_online(peer_ids[i % peer_ids.len()].as_str(), true)
                .map_err(|e| e.to_string())?,
            ChurnOp::Rebalance => {
                let report = cluster.rebalance().map_err(|e| e.to_string())?;
                rebalances += 1;
                let online = cluster.online_count();
                for (cid, entry) in cluster.pin_set() {
                    let want = (entry.replication_factor as usize).min(online);
                    if reachable(&cluster, cid) {
                        let got = recount_holders(&cluster, cid);
                        if got != want {
                            return Err(format!("step {step}: {cid} has {got} holders, want {want}"));
                        }
                    } else if !report.unavailable.contains(cid) {
                        return Err(format!("step {step}: unreachable {cid} not reported"));
                    }
                }
            }
        }
    }
    Ok(rebalances)
}
