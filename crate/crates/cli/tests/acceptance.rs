//! Acceptance gate. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::path::Path;
use std::process::Command as Process;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::Parser;
use custody_cli::bench::{self, BenchOptions, BenchRow};
use custody_cli::cli::Cli;
use custody_cli::commands::{self, Context};
use custody_cli::keyfile;
use custody_core::blobstore::{ClusterConfig, ContentId};
use custody_core::contract::ContractCall;
use custody_core::integrity::{verify_collection, VerdictStatus};
use custody_core::ledger::{verify_encoded, Ledger, LedgerConfig, Transaction};
use custody_core::testkit::{self, T0};
use custody_core::{Digest, Identity};
use custody_service::api::{record_call, Auth, ManifestRequest, RecordPayload, RecordUpload, WhitelistRequest};
use custody_service::{BackgroundServer, Node, NodeOptions, SharedNode, StepClock};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

// ------------------------------------------------------------------ helpers

fn fresh_node(owner: &Identity) -> Node {
    let deploy = Transaction::sign(owner, ContractCall::Deploy, 0);
    Node::in_memory(deploy, NodeOptions::default(), Arc::new(StepClock::new(T0, 1))).expect("node")
}

fn whitelist(node: &mut Node, owner: &Identity, who: &Identity) {
    let call = ContractCall::WhitelistAdd { key: who.public_key() };
    let req = WhitelistRequest {
        key: who.public_key(),
        auth: Auth::sign(owner, &call, node.nonce(&owner.public_key()).next_nonce),
    };
    node.whitelist(true, &req).expect("whitelist");
}

fn manifest(node: &mut Node, owner: &Identity, trial: &str, names: &[&str]) {
    let filenames: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let call = ContractCall::SetManifest {
        trial_id: trial.into(),
        filenames: filenames.clone(),
    };
    let req = ManifestRequest {
        filenames,
        auth: Auth::sign(owner, &call, node.nonce(&owner.public_key()).next_nonce),
    };
    node.set_manifest(trial, &req).expect("manifest");
}

fn record(node: &mut Node, who: &Identity, trial: &str, name: &str, bytes: &[u8]) {
    let call = record_call(trial, name, &Digest::of(bytes));
    let upload = RecordUpload {
        filename: name.into(),
        payload: RecordPayload::Bytes(bytes.to_vec()),
        auth: Auth::sign(who, &call, node.nonce(&who.public_key()).next_nonce),
    };
    node.submit_record(trial, &upload).expect("record");
}

// ---------------------------------------------------------------- criteria

fn missing_dataset_fixture() -> Outcome {
    let started = Instant::now();
    let owner = testkit::actor(0);
    let to = testkit::actor(1);
    let mut node = fresh_node(&owner);
    whitelist(&mut node, &owner, &to);
    manifest(&mut node, &owner, "T1", &["camera.mp4", "can.csv", "lidar.bag"]);
    record(&mut node, &to, "T1", "camera.mp4", b"frame data");
    record(&mut node, &to, "T1", "can.csv", b"t,id,data\n0,0x1,ff\n");

    let c = node.completeness("T1").map_err(|e| e.to_string())?;
    check(c.missing == ["lidar.bag"], || format!("missing = {:?}", c.missing))?;
    let v = node.verify_trial("T1").map_err(|e| e.to_string())?;
    let statuses: Vec<VerdictStatus> = v.verdicts.iter().map(|v| v.status).collect();
    let expected = [VerdictStatus::Verified, VerdictStatus::Verified, VerdictStatus::NoRecord];
    check(statuses == expected, || format!("verdicts = {statuses:?}"))?;
    within(Duration::from_secs(5), started)?;
    Ok("1 missing; 2 verified + 1 no-record".into())
}

fn tamper_evidence() -> Outcome {
    let started = Instant::now();
    let ledger = testkit::build_chain(&testkit::actor(0), 49, 7);
    let clean = testkit::encode_blocks(&ledger);
    check(clean.len() == 50, || format!("chain has {} blocks", clean.len()))?;
    check(verify_encoded(&clean).is_ok(), || "clean chain flagged".into())?;
    let mut r = testkit::rng(2024);
    for i in 0..1000 {
        let mut raw = clean.clone();
        let h = r.random_range(0..raw.len());
        let at = r.random_range(0..raw[h].len());
        raw[h][at] ^= r.random_range(1..=255u8);
        let flagged = verify_encoded(&raw).first_bad_height();
        let oracle = testkit::oracle_first_bad(&raw);
        match flagged {
            Some(f) if f <= h as u64 && Some(f) == oracle => {}
            _ => {
                return Err(format!(
                    "mutation {i} at block {h} byte {at}: flagged {flagged:?}, oracle {oracle:?}"
                ))
            }
        }
    }
    within(Duration::from_secs(30), started)?;
    Ok("1000/1000 mutations flagged at or below the mutated height".into())
}

fn integrity_sensitivity() -> Outcome {
    let started = Instant::now();
    let owner = testkit::actor(0);
    let mut node = fresh_node(&owner);
    let mut r = testkit::rng(99);
    let mut files = Vec::new();
    for i in 0..20 {
        let mut bytes = vec![0u8; r.random_range(1..4096)];
        r.fill_bytes(&mut bytes);
        let name = format!("log{i}.bin");
        record(&mut node, &owner, "T1", &name, &bytes);
        files.push((name, ContentId::of(&bytes)));
    }
    let mut controls = 0;
    for round in 0..200 {
        let (name, cid) = files[r.random_range(0..files.len())].clone();
        let len = node.cluster().get_blob(&cid).map_err(|e| e.to_string())?.bytes.len();
        let bit = r.random_range(0..len * 8);
        let flip = |b: &mut Vec<u8>| b[bit / 8] ^= 1 << (bit % 8);
        let replicas = node.cluster().replica_peers(&cid);
        check(replicas.len() >= 2, || format!("{name} has {} replicas", replicas.len()))?;
        for p in &replicas {
            node.cluster_mut().tamper_replica(p.as_str(), &cid, flip).map_err(|e| e.to_string())?;
        }
        let v = verify_collection(node.contract(), node.cluster(), "T1", &name, None);
        check(v.status != VerdictStatus::Verified, || {
            format!("round {round}: corrupted {name} bit {bit} verified")
        })?;
        for (other, _) in files.iter().filter(|(n, _)| *n != name) {
            let v = verify_collection(node.contract(), node.cluster(), "T1", other, None);
            check(v.status == VerdictStatus::Verified, || {
                format!("round {round}: control {other} is {:?}", v.status)
            })?;
            controls += 1;
        }
        for p in &replicas {
            node.cluster_mut().tamper_replica(p.as_str(), &cid, flip).map_err(|e| e.to_string())?;
        }
    }
    within(Duration::from_secs(60), started)?;
    Ok(format!("0/200 corrupted verified; {controls}/{controls} controls verified"))
}

fn contract_properties() -> Outcome {
    let mut r = testkit::rng(4);
    let cases = 10_000;
    let mut steps = 0;
    for case in 0..cases {
        let len = r.random_range(1..=60);
        let ops = testkit::random_ops(&mut r, len);
        steps += ops.len();
        testkit::check_contract_sequence(&ops).map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(format!("{cases}/{cases} sequences ({steps} operations)"))
}

fn replication_maintenance() -> Outcome {
    let config = ClusterConfig {
        standard_peers: 2,
        follower_peers: 3,
        replication_factor: 2,
    };
    let mut r = testkit::rng(5);
    let mut rebalances = 0;
    for schedule in 0..500 {
        let ops = testkit::churn_schedule(&mut r, 5, 60);
        rebalances += testkit::check_churn(&config, &ops).map_err(|e| format!("schedule {schedule}: {e}"))?;
    }
    Ok(format!("500/500 schedules, {rebalances} rebalances checked"))
}

#[derive(Serialize, Deserialize)]
enum Step {
    Submit(Transaction),
    Seal(u64),
}

fn record_session(dir: &Path, owner: &Identity) -> Result<(Ledger, Vec<Step>), String> {
    let deploy = Transaction::sign(owner, ContractCall::Deploy, 0);
    let mut ledger =
        Ledger::create_persistent(dir, deploy, T0, LedgerConfig::default()).map_err(|e| e.to_string())?;
    let actors: Vec<Identity> = (0..4).map(testkit::actor).collect();
    let mut r = testkit::rng(6);
    let mut log = Vec::new();
    let mut ts = T0;
    for i in 0..100u32 {
        let who = &actors[r.random_range(0..actors.len())];
        let call = match r.random_range(0..6) {
            0 => ContractCall::WhitelistAdd {
                key: actors[r.random_range(0..actors.len())].public_key(),
            },
            1 => ContractCall::SetManifest {
                trial_id: format!("T{}", r.random_range(0..3)),
                filenames: vec![format!("f{}", r.random_range(0..4)), "video.mp4".into()],
            },
            _ => {
                let name = format!("f{}", r.random_range(0..4));
                record_call(&format!("T{}", r.random_range(0..3)), &name, &Digest::of(&i.to_be_bytes()))
            }
        };
        let tx = Transaction::sign(who, call, ledger.next_nonce(&who.public_key()));
        ledger.submit(tx.clone()).map_err(|e| e.to_string())?;
        log.push(Step::Submit(tx));
        if r.random_bool(0.3) || i == 99 {
            ts += r.random_range(1..20);
            ledger.seal(ts).map_err(|e| e.to_string())?;
            log.push(Step::Seal(ts));
        }
    }
    Ok((ledger, log))
}

fn determinism() -> Outcome {
    let owner = testkit::actor(0);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a_dir, b_dir) = (tmp.path().join("a"), tmp.path().join("b"));
    let (recorded, log) = record_session(&a_dir, &owner)?;
    let saved = serde_json::to_string(&log).map_err(|e| e.to_string())?;

    let steps: Vec<Step> = serde_json::from_str(&saved).map_err(|e| e.to_string())?;
    let deploy = Transaction::sign(&owner, ContractCall::Deploy, 0);
    let mut replay =
        Ledger::create_persistent(&b_dir, deploy, T0, LedgerConfig::default()).map_err(|e| e.to_string())?;
    let mut txs = 0;
    for step in steps {
        match step {
            Step::Submit(tx) => {
                replay.submit(tx).map_err(|e| e.to_string())?;
                txs += 1;
            }
            Step::Seal(ts) => {
                replay.seal(ts).map_err(|e| e.to_string())?;
            }
        }
    }
    check(txs == 100, || format!("{txs} transactions in session"))?;
    let hashes = |l: &Ledger| l.blocks().iter().map(|b| b.block_hash).collect::<Vec<_>>();
    check(hashes(&recorded) == hashes(&replay), || "block hashes differ".into())?;
    let reopened = Ledger::open(&a_dir, LedgerConfig::default()).map_err(|e| e.to_string())?;
    check(hashes(&reopened) == hashes(&recorded), || "reopened chain differs".into())?;
    let dat = |d: &Path| std::fs::read(d.join("blocks.dat")).map_err(|e| e.to_string());
    check(dat(&a_dir)? == dat(&b_dir)?, || "blocks.dat differs".into())?;
    check(reopened.contract() == recorded.contract(), || "replayed contract differs".into())?;
    Ok(format!(
        "100 transactions, {} blocks, identical hashes and stored bytes",
        recorded.blocks().len()
    ))
}

fn bench_harness() -> Outcome {
    let sizes = vec![128 << 10, 2 << 20, 16 << 20];
    let rows = bench::run(&BenchOptions {
        sizes: sizes.clone(),
        repeat: 5,
        cluster: ClusterConfig::default(),
        seed: 0,
        dir: None,
    })
    .map_err(|e| e.message)?;
    let mut csv_bytes = Vec::new();
    bench::write_csv(&rows, &mut csv_bytes).map_err(|e| e.message)?;
    let parsed: Vec<(u64, f64, f64, f64)> = csv::Reader::from_reader(csv_bytes.as_slice())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let csv_sizes: Vec<u64> = parsed.iter().map(|r| r.0).collect();
    check(csv_sizes == sizes, || format!("csv sizes {csv_sizes:?}"))?;
    let span = *sizes.last().unwrap() as f64 / sizes[0] as f64;
    check(span >= 100.0, || format!("sizes span only {span}x"))?;
    let table = || {
        rows.iter()
            .map(|r| format!("{}B {:.2}/{:.2}/{:.2}ms", r.size_bytes, r.import_ms, r.hash_ms, r.download_ms))
            .collect::<Vec<_>>()
            .join(", ")
    };
    check(bench::non_decreasing(&rows, |r: &BenchRow| r.import_ms), || format!("import not monotone: {}", table()))?;
    check(bench::non_decreasing(&rows, |r: &BenchRow| r.download_ms), || {
        format!("download not monotone: {}", table())
    })?;
    Ok(format!("{} rows spanning {span}x: {}", rows.len(), table()))
}

// ---------------------------------------------------- API equivalence (8)

struct Script {
    dir: tempfile::TempDir,
    steps: Vec<(Option<&'static str>, Vec<String>)>,
}

fn three_task_script() -> Result<Script, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).display().to_string();
    for (key, n) in [("owner", 0), ("to", 1), ("stranger", 2)] {
        keyfile::write(&dir.path().join(format!("{key}.key")), &testkit::actor(n), false)
            .map_err(|e| e.message)?;
    }
    for (name, body) in [
        ("camera.mp4", &b"\x00\x00\x00\x18ftypmp42"[..]),
        ("can.csv", b"t,id,data\n0,0x1,ff\n"),
        ("can_v2.csv", b"t,id,data\n0,0x1,fe\n"),
        ("lidar.bag", b"#ROSBAG V2.0\n"),
    ] {
        std::fs::write(dir.path().join(name), body).map_err(|e| e.to_string())?;
    }
    let to = testkit::actor(1).public_key().to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let steps = vec![
        // Organisation: enrol a submitter and publish the plan.
        (Some("owner"), s(&["whitelist", "add", &to])),
        (Some("owner"), s(&["manifest", "set", "camera.mp4", "can.csv", "lidar.bag"])),
        // Task 1: upload datasets.
        (Some("to"), s(&["record", "add", &p("camera.mp4")])),
        (Some("to"), s(&["record", "add", &p("can.csv")])),
        (Some("stranger"), s(&["record", "add", &p("lidar.bag")])),
        (Some("to"), s(&["record", "add", "--name", "can.csv", &p("can_v2.csv")])),
        // Task 2: check completeness.
        (None, s(&["trial", "status"])),
        (None, s(&["trial", "records"])),
        (None, s(&["file", "history", "can.csv"])),
        // Task 3: verify integrity.
        (None, s(&["verify"])),
        (None, s(&["verify", "--file", "can.csv", "--record-id", "1"])),
        (Some("to"), s(&["record", "add", "--hash-only", &p("lidar.bag")])),
        (None, s(&["verify"])),
        (None, s(&["trial", "status", "T9"])),
        (None, s(&["chain", "check"])),
        (None, s(&["events"])),
        (None, s(&["block", "3"])),
        (None, s(&["status"])),
        (Some("owner"), s(&["owner", "transfer", &to])),
        (Some("owner"), s(&["whitelist", "remove", &to])),
        (None, s(&["status"])),
    ];
    Ok(Script { dir, steps })
}

impl Script {
    fn args(&self, i: usize, json: bool) -> Vec<String> {
        let (key, cmd) = &self.steps[i];
        let mut args = vec!["custody".to_string(), "--trial".into(), "T1".into()];
        if json {
            args.push("--json".into());
        }
        if let Some(k) = key {
            args.push("--key".into());
            args.push(self.dir.path().join(format!("{k}.key")).display().to_string());
        }
        args.extend(cmd.iter().cloned());
        args
    }
}

/// Exit code, stdout, and the JSON error line if any.
type Transcript = (i32, String, String);

fn run_over_http(url: &str, args: &[String]) -> Result<Transcript, String> {
    let o = Process::new(env!("CARGO_BIN_EXE_custody"))
        .args(&args[1..])
        .args(["--server", url])
        .env_remove("CUSTODY_KEY")
        .env_remove("CUSTODY_DATA_ROOT")
        .output()
        .map_err(|e| e.to_string())?;
    Ok((
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).trim().to_string(),
    ))
}

fn run_in_process(node: &mut Node, args: &[String]) -> Result<Transcript, String> {
    let cli = Cli::try_parse_from(args).map_err(|e| e.to_string())?;
    let identity = cli.key.as_deref().map(keyfile::read).transpose().map_err(|e| e.message)?;
    let mut out = Vec::new();
    let mut ctx = Context {
        json: cli.json,
        identity,
        trial: cli.trial.clone(),
        out: &mut out,
    };
    let (code, err) = match commands::execute(&cli.command, node, &mut ctx) {
        Ok(code) => (code, String::new()),
        Err(e) => (e.exit_code, e.to_json()),
    };
    Ok((code, String::from_utf8_lossy(&out).into_owned(), err))
}

fn api_equivalence() -> Outcome {
    let owner = testkit::actor(0);
    let server = BackgroundServer::start(SharedNode::new(fresh_node(&owner)), Duration::from_secs(1))
        .map_err(|e| e.to_string())?;
    let mut local = fresh_node(&owner);
    let script = three_task_script()?;
    let mut failures = 0;
    for i in 0..script.steps.len() {
        for json in [true, false] {
            let args = script.args(i, json);
            let mutating = script.steps[i].0.is_some();
            if mutating && !json {
                continue;
            }
            let remote = run_over_http(&server.url(), &args)?;
            let here = run_in_process(&mut local, &args)?;
            check(remote == here, || {
                format!("`{}` differs:\nhttp: {remote:?}\nlocal: {here:?}", args[1..].join(" "))
            })?;
            failures += usize::from(remote.0 != 0);
        }
    }
    let (blocks, contract, pins, status) = server.shared().read(|n| {
        (
            n.ledger().blocks().to_vec(),
            n.contract().clone(),
            n.cluster().pin_set().clone(),
            n.status(),
        )
    });
    check(blocks == local.ledger().blocks(), || "blocks differ".into())?;
    check(&contract == local.contract(), || "contract state differs".into())?;
    check(&pins == local.cluster().pin_set(), || "pin sets differ".into())?;
    check(status == local.status(), || "status differs".into())?;
    Ok(format!(
        "{} commands ({failures} expected failures), {} blocks, identical state and output",
        script.steps.len(),
        blocks.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("missing dataset fixture", missing_dataset_fixture),
        ("tamper evidence", tamper_evidence),
        ("integrity sensitivity", integrity_sensitivity),
        ("contract properties", contract_properties),
        ("replication maintenance", replication_maintenance),
        ("deterministic replay", determinism),
        ("bench harness", bench_harness),
        ("api equivalence", api_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
