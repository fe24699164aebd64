use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use custody_core::contract::{ContractCall, EventKind};
use custody_core::integrity::VerdictStatus;
use custody_core::ledger::{Transaction, TxStatus};
use custody_core::{Digest, Identity};
use custody_service::api::{
    record_call, Auth, ManifestRequest, RecordPayload, RecordUpload, TxState, WhitelistRequest,
    WriteResponse,
};
use custody_service::client::HttpClient;
use custody_service::{Backend, BackgroundServer, Node, NodeOptions, SealMode, SharedNode, StepClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Harness {
    owner: Identity,
    server: BackgroundServer,
    client: HttpClient,
}

fn start(mode: SealMode) -> Harness {
    let owner = Identity::from_secret([7; 32]);
    let deploy = Transaction::sign(&owner, ContractCall::Deploy, 0);
    let options = NodeOptions {
        seal_mode: mode,
        ..Default::default()
    };
    let node = Node::in_memory(deploy, options, Arc::new(StepClock::new(1_700_000_000, 10))).unwrap();
    let server = BackgroundServer::start(SharedNode::new(node), Duration::from_millis(50)).unwrap();
    let client = HttpClient::new(&server.url()).unwrap();
    Harness { owner, server, client }
}

impl Harness {
    fn nonce(&mut self, who: &Identity) -> u64 {
        self.client.nonce(&who.public_key()).unwrap().next_nonce
    }

    fn manifest(&mut self, trial: &str, names: &[&str]) -> Result<WriteResponse, custody_service::api::ApiError> {
        let filenames: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let call = ContractCall::SetManifest {
            trial_id: trial.into(),
            filenames: filenames.clone(),
        };
        let owner = self.owner.clone();
        let auth = Auth::sign(&owner, &call, self.nonce(&owner));
        self.client.set_manifest(trial, &ManifestRequest { filenames, auth })
    }

    fn whitelist(&mut self, key: &Identity) {
        let req_key = key.public_key();
        let owner = self.owner.clone();
        let auth = Auth::sign(&owner, &ContractCall::WhitelistAdd { key: req_key }, self.nonce(&owner));
        self.client
            .whitelist(true, &WhitelistRequest { key: req_key, auth })
            .unwrap();
    }

    fn upload(
        &mut self,
        who: &Identity,
        trial: &str,
        name: &str,
        payload: RecordPayload,
    ) -> Result<custody_service::api::RecordResponse, custody_service::api::ApiError> {
        let call = record_call(trial, name, &payload.digest());
        let auth = Auth::sign(who, &call, self.nonce(who));
        self.client.submit_record(
            trial,
            &RecordUpload {
                filename: name.into(),
                payload,
                auth,
            },
        )
    }
}

#[test]
fn manifest_endpoint_statuses() {
    let mut h = start(SealMode::Immediate);
    let w = h.manifest("T1", &["a.csv", "b.mp4", "c.log"]).unwrap();
    let receipt = w.receipt().expect("sealed");
    assert_eq!(receipt.block_height, 1);

    let err = h.manifest("T1", &["a", "a"]).unwrap_err();
    assert_eq!((err.status, err.code.as_str()), (422, "DuplicateFilename"));

    // signature by someone else over the same call
    let call = ContractCall::SetManifest {
        trial_id: "T1".into(),
        filenames: vec!["x".into()],
    };
    let mut auth = Auth::sign(&Identity::from_secret([9; 32]), &call, 10);
    auth.sender = h.owner.public_key();
    let err = h
        .client
        .set_manifest(
            "T1",
            &ManifestRequest {
                filenames: vec!["x".into()],
                auth,
            },
        )
        .unwrap_err();
    assert_eq!(err.status, 401);

    // a non-owner's signed manifest is sealed and refused
    let stranger = Identity::from_secret([10; 32]);
    let auth = Auth::sign(&stranger, &call, 0);
    let err = h
        .client
        .set_manifest(
            "T1",
            &ManifestRequest {
                filenames: vec!["x".into()],
                auth,
            },
        )
        .unwrap_err();
    assert_eq!(err.status, 403);
    assert!(err.receipt.is_some());
}

#[test]
fn upload_readback_and_refusal() {
    let mut h = start(SealMode::Immediate);
    let sub = Identity::from_secret([2; 32]);
    h.whitelist(&sub);
    let data = b"t,speed\n0,12.5\n".to_vec();
    let r = h
        .upload(&sub, "T1", "a.csv", RecordPayload::Bytes(data.clone()))
        .unwrap();
    assert_eq!(r.record_id, Some(0));
    assert_eq!(r.file_hash, Digest::of(&data));
    assert_eq!(h.client.get_blob(&r.cid).unwrap(), data);
    let v = h.client.verify_file("T1", "a.csv", None).unwrap();
    assert_eq!(v.status, VerdictStatus::Verified);

    let stranger = Identity::from_secret([3; 32]);
    let err = h
        .upload(&stranger, "T1", "b.csv", RecordPayload::Bytes(b"nope".to_vec()))
        .unwrap_err();
    assert_eq!((err.status, err.code.as_str()), (403, "NotWhitelisted"));
    let receipt = err.receipt.unwrap();
    let block = h.client.block(receipt.block_height).unwrap();
    assert!(matches!(
        block.transactions[receipt.tx_index as usize].status,
        TxStatus::Failed { .. }
    ));
    assert_eq!(h.client.get_blob(&custody_core::blobstore::ContentId::of(b"nope")).unwrap_err().status, 404);

    let err = h
        .upload(&sub, "T1", "", RecordPayload::Bytes(b"x".to_vec()))
        .unwrap_err();
    assert_eq!((err.status, err.code.as_str()), (422, "EmptyField"));
}

#[test]
fn hash_only_record_then_blob_upload() {
    let mut h = start(SealMode::Immediate);
    let owner = h.owner.clone();
    let data = vec![42u8; 4096];
    h.upload(&owner, "T1", "lidar.bag", RecordPayload::Hash(Digest::of(&data)))
        .unwrap();
    assert_eq!(
        h.client.verify_file("T1", "lidar.bag", None).unwrap().status,
        VerdictStatus::NoBlob
    );
    assert_eq!(h.client.put_blob(b"unreferenced").unwrap_err().status, 422);
    h.client.put_blob(&data).unwrap();
    assert_eq!(
        h.client.verify_file("T1", "lidar.bag", None).unwrap().status,
        VerdictStatus::Verified
    );
}

#[test]
fn completeness_and_verify_equivalence() {
    let mut h = start(SealMode::Immediate);
    let owner = h.owner.clone();
    h.manifest("T1", &["camera.mp4", "can.csv", "lidar.bag"]).unwrap();
    h.upload(&owner, "T1", "camera.mp4", RecordPayload::Bytes(b"frames".to_vec()))
        .unwrap();
    h.upload(&owner, "T1", "can.csv", RecordPayload::Bytes(b"bus".to_vec()))
        .unwrap();
    let c = h.client.completeness("T1").unwrap();
    assert_eq!(c.missing, vec!["lidar.bag"]);
    assert_eq!(c.submitted.len(), 2);

    let over_http = h.client.verify_trial("T1").unwrap();
    let in_process = h.server.shared().read(|n| {
        custody_core::integrity::verify_trial(n.contract(), n.cluster(), "T1").unwrap()
    });
    assert_eq!(over_http, in_process);
    assert_eq!((over_http.summary.verified, over_http.summary.missing), (2, 1));

    assert_eq!(h.client.completeness("T9").unwrap_err().status, 404);
    assert_eq!(h.client.records("T9").unwrap_err().status, 404);
    assert_eq!(h.client.verify_trial("T9").unwrap_err().status, 404);
    let hist = h.client.history("T1", "can.csv").unwrap();
    assert_eq!(hist.len(), 1);
}

#[test]
fn explorer_endpoints() {
    let mut h = start(SealMode::Immediate);
    let w = h.manifest("T1", &["a"]).unwrap();
    let tx = h.client.tx(&w.tx_id()).unwrap();
    assert!(matches!(tx.state, TxState::Sealed { .. }));
    assert_eq!(h.client.block(0).unwrap().height, 0);
    assert_eq!(h.client.block(99).unwrap_err().status, 404);
    assert_eq!(h.client.tx(&Digest::of(b"nothing")).unwrap_err().status, 404);
    assert!(h.client.chain_check().unwrap().is_ok());
    let status = h.client.status().unwrap();
    assert_eq!(status.height, 1);
    assert_eq!(status.trials, vec!["T1"]);
}

#[test]
fn interval_mode_returns_202_then_seals() {
    let mut h = start(SealMode::Interval);
    let w = h.manifest("T1", &["a"]).unwrap();
    let WriteResponse::Pending { tx_id, .. } = w else {
        panic!("expected pending, got {w:?}");
    };
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        if let TxState::Sealed { receipt, .. } = h.client.tx(&tx_id).unwrap().state {
            assert!(receipt.status.is_applied());
            break;
        }
        assert!(Instant::now() < deadline, "not sealed in time");
        thread::sleep(Duration::from_millis(20));
    }
    assert_eq!(h.client.completeness("T1").unwrap().missing, vec!["a"]);
}

#[test]
fn listener_receives_record_added() {
    let mut h = start(SealMode::Immediate);
    let cursor = h.client.events(0).unwrap().next_cursor;
    let mut stream = h.client.stream_events(cursor).unwrap();
    let owner = h.owner.clone();
    h.upload(&owner, "T1", "a.csv", RecordPayload::Bytes(b"x".to_vec()))
        .unwrap();
    let (next, ev) = stream.next().unwrap().unwrap();
    assert_eq!(next, cursor + 1);
    assert!(matches!(ev.kind, EventKind::RecordAdded { record_id: 0, .. }));
}

#[test]
fn bad_cursor_is_400() {
    let mut h = start(SealMode::Immediate);
    let n = h.client.events(0).unwrap().next_cursor;
    assert_eq!(h.client.events(n + 1).unwrap_err().status, 400);
    assert_eq!(h.client.stream_events(n + 5).err().unwrap().status, 400);
}

#[test]
fn reconnecting_listener_sees_every_event_once_in_order() {
    let mut h = start(SealMode::Immediate);
    let sub = Identity::from_secret([4; 32]);
    h.whitelist(&sub);
    let url = h.server.url();
    let writer = thread::spawn(move || {
        for i in 0..60 {
            h.upload(&sub, "T1", &format!("f{}", i % 7), RecordPayload::Bytes(vec![i as u8; 8]))
                .unwrap();
            if i % 10 == 0 {
                thread::sleep(Duration::from_millis(5));
            }
        }
        h
    });

    let client = HttpClient::new(&url).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut seen = Vec::new();
    let mut cursor = 0;
    // 1 whitelist event + 60 record events
    while seen.len() < 61 {
        let mut stream = client.stream_events(cursor).unwrap();
        let take = rng.random_range(1..=9);
        for _ in 0..take {
            let Some(item) = stream.next() else { break };
            let (next, ev) = item.unwrap();
            seen.push(ev);
            cursor = next;
            if seen.len() == 61 {
                break;
            }
        }
        // dropping the stream disconnects
    }
    let h = writer.join().unwrap();
    let mut c = HttpClient::new(&h.server.url()).unwrap();
    let log = c.events(0).unwrap().events;
    assert_eq!(seen, log);
}

#[test]
fn api_state_equals_in_process_state() {
    // The same random signed transactions applied over HTTP and directly.
    let ids: Vec<Identity> = (0..4).map(|i| Identity::from_secret([20 + i; 32])).collect();
    let mk = || {
        let deploy = Transaction::sign(&ids[0], ContractCall::Deploy, 0);
        Node::in_memory(deploy, NodeOptions::default(), Arc::new(StepClock::new(1_000, 3))).unwrap()
    };
    let server = BackgroundServer::start(SharedNode::new(mk()), Duration::from_secs(1)).unwrap();
    let mut http = HttpClient::new(&server.url()).unwrap();
    let mut local = mk();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nonces = [1u64, 0, 0, 0];
    for _ in 0..120 {
        let who = rng.random_range(0..4);
        let key = ids[rng.random_range(0..4)].public_key();
        let trial = format!("T{}", rng.random_range(0..3));
        let nonce = nonces[who];
        nonces[who] += 1;
        let id = &ids[who];
        let (a, b) = match rng.random_range(0..4) {
            0 => {
                let req = WhitelistRequest {
                    key,
                    auth: Auth::sign(id, &ContractCall::WhitelistAdd { key }, nonce),
                };
                (http.whitelist(true, &req).map(|_| ()), Backend::whitelist(&mut local, true, &req).map(|_| ()))
            }
            1 => {
                let filenames: Vec<String> = (0..rng.random_range(0..3)).map(|i| format!("f{i}")).collect();
                let call = ContractCall::SetManifest {
                    trial_id: trial.clone(),
                    filenames: filenames.clone(),
                };
                let req = ManifestRequest {
                    filenames,
                    auth: Auth::sign(id, &call, nonce),
                };
                (http.set_manifest(&trial, &req).map(|_| ()), local.set_manifest(&trial, &req).map(|_| ()))
            }
            _ => {
                let data = vec![rng.random::<u8>(); rng.random_range(1..64)];
                let name = format!("f{}", rng.random_range(0..3));
                let call = record_call(&trial, &name, &Digest::of(&data));
                let up = RecordUpload {
                    filename: name,
                    payload: RecordPayload::Bytes(data),
                    auth: Auth::sign(id, &call, nonce),
                };
                (http.submit_record(&trial, &up).map(|_| ()), local.submit_record(&trial, &up).map(|_| ()))
            }
        };
        assert_eq!(a.map_err(|e| (e.status, e.code)), b.map_err(|e| (e.status, e.code)));
    }
    let remote = server.shared().read(|n| {
        (
            n.ledger().blocks().to_vec(),
            n.contract().clone(),
            n.cluster().pin_set().clone(),
        )
    });
    assert_eq!(remote.0, local.ledger().blocks());
    assert_eq!(&remote.1, local.contract());
    assert_eq!(&remote.2, local.cluster().pin_set());
    // every applied write is a sealed, signature-checked transaction
    assert!(local.ledger().verify().is_ok());
    assert_eq!(http.status().unwrap(), local.status());
}
