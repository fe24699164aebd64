//! Blocking HTTP client for the service API.

use std::io::{BufRead, BufReader};
use std::time::Duration;

use custody_core::blobstore::ContentId;
use custody_core::contract::{Completeness, Event, IndexedRecord, RecordId};
use custody_core::integrity::{TrialVerification, VerificationVerdict};
use custody_core::ledger::{Block, ChainReport, TxId};
use custody_core::PublicKey;
use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{
    ApiError, BlobPutResponse, ErrorEnvelope, EventLog, ManifestRequest, NonceResponse,
    OwnerRequest, RecordPayload, RecordResponse, RecordUpload, StatusResponse, TxResponse,
    WhitelistRequest, WriteResponse,
};
use crate::backend::{ApiResult, Backend};

#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    http: Client,
}

fn transport(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(0, "Transport", e.to_string())
}

/// Percent-encodes one path segment.
fn seg(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl HttpClient {
    pub fn new(base_url: &str) -> ApiResult<Self> {
        let http = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(transport)?;
        Ok(HttpClient {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn send(&self, req: RequestBuilder) -> ApiResult<Response> {
        let resp = req.send().map_err(transport)?;
        let status = resp.status().as_u16();
        if resp.status().is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let mut err = serde_json::from_str::<ErrorEnvelope>(&text)
            .map(|e| e.error)
            .unwrap_or_else(|_| ApiError::new(status, "Http", text));
        err.status = status;
        Err(err)
    }

    fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> ApiResult<T> {
        self.send(req)?.json().map_err(transport)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> ApiResult<T> {
        self.json(self.http.get(self.url(path)))
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> ApiResult<T> {
        self.json(self.http.post(self.url(path)).json(body))
    }

    /// Follows `GET /events` from `cursor`, yielding `(resume_cursor, event)`
    /// pairs until the connection ends.
    pub fn stream_events(&self, cursor: u64) -> ApiResult<EventStream> {
        let resp = self.send(
            self.http
                .get(self.url(&format!("/events?cursor={cursor}")))
                .timeout(Duration::from_secs(3600)),
        )?;
        Ok(EventStream {
            reader: BufReader::new(resp),
        })
    }
}

/// Minimal `text/event-stream` reader.
pub struct EventStream {
    reader: BufReader<Response>,
}

impl Iterator for EventStream {
    type Item = ApiResult<(u64, Event)>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut id = None;
        let mut data = String::new();
        loop {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(transport(e))),
            }
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                if data.is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<Event>(&data)
                    .map_err(transport)
                    .map(|ev| (id.unwrap_or(ev.seq + 1), ev));
                return Some(parsed);
            }
            if let Some(v) = line.strip_prefix("id:") {
                id = v.trim().parse().ok();
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.strip_prefix(' ').unwrap_or(v));
            }
        }
    }
}

impl Backend for HttpClient {
    fn nonce(&mut self, sender: &PublicKey) -> ApiResult<NonceResponse> {
        self.get(&format!("/accounts/{sender}/nonce"))
    }

    fn set_manifest(&mut self, trial_id: &str, req: &ManifestRequest) -> ApiResult<WriteResponse> {
        self.post(&format!("/trials/{}/manifest", seg(trial_id)), req)
    }

    fn whitelist(&mut self, add: bool, req: &WhitelistRequest) -> ApiResult<WriteResponse> {
        self.post(if add { "/whitelist/add" } else { "/whitelist/remove" }, req)
    }

    fn transfer_ownership(&mut self, req: &OwnerRequest) -> ApiResult<WriteResponse> {
        self.post("/owner", req)
    }

    fn submit_record(&mut self, trial_id: &str, upload: &RecordUpload) -> ApiResult<RecordResponse> {
        let mut form = multipart::Form::new()
            .text("filename", upload.filename.clone())
            .text("sender", upload.auth.sender.to_string())
            .text("nonce", upload.auth.nonce.to_string())
            .text("signature", upload.auth.signature.to_hex());
        form = match &upload.payload {
            RecordPayload::Bytes(b) => form.part(
                "file",
                multipart::Part::bytes(b.clone()).file_name(upload.filename.clone()),
            ),
            RecordPayload::Hash(d) => form.text("file_hash", d.to_hex()),
        };
        self.json(
            self.http
                .post(self.url(&format!("/trials/{}/records", seg(trial_id))))
                .multipart(form),
        )
    }

    fn put_blob(&mut self, bytes: &[u8]) -> ApiResult<BlobPutResponse> {
        let cid = ContentId::of(bytes);
        self.json(self.http.put(self.url(&format!("/blobs/{cid}"))).body(bytes.to_vec()))
    }

    fn records(&mut self, trial_id: &str) -> ApiResult<Vec<IndexedRecord>> {
        self.get(&format!("/trials/{}/records", seg(trial_id)))
    }

    fn completeness(&mut self, trial_id: &str) -> ApiResult<Completeness> {
        self.get(&format!("/trials/{}/completeness", seg(trial_id)))
    }

    fn history(&mut self, trial_id: &str, filename: &str) -> ApiResult<Vec<IndexedRecord>> {
        self.get(&format!("/trials/{}/files/{}/history", seg(trial_id), seg(filename)))
    }

    fn verify_file(&mut self, trial_id: &str, filename: &str, record_id: Option<RecordId>) -> ApiResult<VerificationVerdict> {
        let q = record_id.map(|id| format!("?record_id={id}")).unwrap_or_default();
        self.get(&format!("/trials/{}/files/{}/verify{q}", seg(trial_id), seg(filename)))
    }

    fn verify_trial(&mut self, trial_id: &str) -> ApiResult<TrialVerification> {
        self.get(&format!("/trials/{}/verify", seg(trial_id)))
    }

    fn events(&mut self, cursor: u64) -> ApiResult<EventLog> {
        self.get(&format!("/events/log?cursor={cursor}"))
    }

    fn block(&mut self, height: u64) -> ApiResult<Block> {
        self.get(&format!("/blocks/{height}"))
    }

    fn tx(&mut self, tx_id: &TxId) -> ApiResult<TxResponse> {
        self.get(&format!("/tx/{tx_id}"))
    }

    fn get_blob(&mut self, cid: &ContentId) -> ApiResult<Vec<u8>> {
        let resp = self.send(self.http.get(self.url(&format!("/blobs/{cid}"))))?;
        resp.bytes().map(|b| b.to_vec()).map_err(transport)
    }

    fn chain_check(&mut self) -> ApiResult<ChainReport> {
        self.get("/chain/verify")
    }

    fn status(&mut self) -> ApiResult<StatusResponse> {
        self.get("/status")
    }
}
