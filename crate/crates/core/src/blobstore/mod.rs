//! Content-addressed blob storage replicated over an in-process cluster of
//! peers.
//!
//! Every peer keeps its own blob map; nothing is shared between peers except
//! through the cluster coordinator (`&mut Cluster`). The pin set records,
//! per content id, the wanted replication factor and the peers assigned to
//! hold a copy. Standard peers may change the pin set, follower peers only
//! store what they are told to.
//!
//! Allocation picks the least-loaded online peers (load = number of pins
//! assigned), breaking ties by peer id. After [`Cluster::rebalance`] every
//! entry that still has an intact online copy is held by
//! `min(replication, online peers)` online peers. Blobs are stored whole and
//! unpinned content is not garbage collected.

mod cid;
mod disk;
mod envelope;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Digest;

pub use cid::{ContentId, ParseCidError, CID_TAG_SHA256};
pub use disk::{PEERS_DIR, PEERS_INDEX, PINS_INDEX};
pub use envelope::{decrypt_envelope, encrypt_envelope, EnvelopeError, EnvelopeKey, ENVELOPE_VERSION};

use disk::DiskLayout;

pub const DEFAULT_REPLICATION: u32 = 2;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("no online peers")]
    NoPeers,
    #[error("content {0} not found on any online peer")]
    NotFound(ContentId),
    #[error("every online copy of {cid} is corrupt (peers: {peers:?})")]
    CorruptBlob {
        cid: ContentId,
        peers: Vec<PeerId>,
        /// Digest of the first corrupt copy read.
        computed: Digest,
    },
    #[error("peer {0} is not a standard peer")]
    NotStandardPeer(PeerId),
    #[error("unknown content {0}")]
    UnknownContent(ContentId),
    #[error("unknown peer {0}")]
    UnknownPeer(String),
    #[error("peer {0} already exists")]
    DuplicatePeer(PeerId),
    #[error("invalid peer id {0:?}: use [A-Za-z0-9_-]")]
    InvalidPeerId(String),
    #[error("replication factor must be at least 1")]
    ZeroReplication,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PeerId(String);

impl PeerId {
    pub fn new(id: impl Into<String>) -> Result<Self, BlobError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id.len() <= 64
            && id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if ok {
            Ok(PeerId(id))
        } else {
            Err(BlobError::InvalidPeerId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PeerId {
    type Error = BlobError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        PeerId::new(s)
    }
}

impl From<PeerId> for String {
    fn from(p: PeerId) -> String {
        p.0
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerRole {
    /// May change the pin set.
    Standard,
    /// Stores and serves content as instructed.
    Follower,
}

impl PeerRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            PeerRole::Standard => "standard",
            PeerRole::Follower => "follower",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(PeerRole::Standard),
            "follower" => Some(PeerRole::Follower),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Peer {
    id: PeerId,
    role: PeerRole,
    online: bool,
    store: BTreeMap<ContentId, Vec<u8>>,
}

impl Peer {
    pub fn id(&self) -> &PeerId {
        &self.id
    }

    pub fn role(&self) -> PeerRole {
        self.role
    }

    pub fn is_online(&self) -> bool {
        self.online
    }

    pub fn has(&self, cid: &ContentId) -> bool {
        self.store.contains_key(cid)
    }

    /// Raw stored bytes, unverified.
    pub fn blob(&self, cid: &ContentId) -> Option<&[u8]> {
        self.store.get(cid).map(Vec::as_slice)
    }

    fn has_intact(&self, cid: &ContentId) -> bool {
        self.store.get(cid).is_some_and(|b| cid.matches(b))
    }

    pub fn stored_bytes(&self) -> u64 {
        self.store.values().map(|b| b.len() as u64).sum()
    }

    pub fn blob_count(&self) -> usize {
        self.store.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinEntry {
    pub replication_factor: u32,
    pub assigned: BTreeSet<PeerId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinStatus {
    pub cid: ContentId,
    pub replication_factor: u32,
    pub holders: Vec<PeerId>,
    /// Fewer online peers than the replication factor asks for.
    pub under_replicated: bool,
    /// No intact copy on any online peer.
    pub unavailable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RebalanceReport {
    /// Copies written to newly assigned peers.
    pub created: Vec<(ContentId, PeerId)>,
    /// Assigned copies re-written because they were missing or corrupt.
    pub repaired: Vec<(ContentId, PeerId)>,
    /// Assignments dropped (peer offline or surplus to the replication factor).
    pub abandoned: Vec<(ContentId, PeerId)>,
    pub under_replicated: Vec<ContentId>,
    pub unavailable: Vec<ContentId>,
}

impl RebalanceReport {
    pub fn is_noop(&self) -> bool {
        self.created.is_empty() && self.repaired.is_empty() && self.abandoned.is_empty()
    }
}

/// A successful read: the verified bytes plus any peers found holding bad copies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieved {
    pub bytes: Vec<u8>,
    pub source: PeerId,
    pub corrupt_peers: Vec<PeerId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub standard_peers: usize,
    pub follower_peers: usize,
    pub replication_factor: u32,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            standard_peers: 1,
            follower_peers: 2,
            replication_factor: DEFAULT_REPLICATION,
        }
    }
}

#[derive(Debug)]
pub struct Cluster {
    peers: BTreeMap<PeerId, Peer>,
    pins: BTreeMap<ContentId, PinEntry>,
    default_replication: u32,
    disk: Option<DiskLayout>,
}

impl Cluster {
    pub fn new(default_replication: u32) -> Self {
        Cluster {
            peers: BTreeMap::new(),
            pins: BTreeMap::new(),
            default_replication: default_replication.max(1),
            disk: None,
        }
    }

    /// In-memory cluster with peers named `standard-NN` and `follower-NN`.
    pub fn from_config(config: &ClusterConfig) -> Self {
        let mut c = Cluster::new(config.replication_factor);
        c.add_default_peers(config).expect("generated peer ids are valid");
        c
    }

    fn add_default_peers(&mut self, config: &ClusterConfig) -> Result<(), BlobError> {
        for i in 0..config.standard_peers {
            self.add_peer(&format!("standard-{i:02}"), PeerRole::Standard)?;
        }
        for i in 0..config.follower_peers {
            self.add_peer(&format!("follower-{i:02}"), PeerRole::Follower)?;
        }
        Ok(())
    }

    /// Opens the cluster persisted under `root`, or creates one from `config`
    /// if the directory holds none. All peers start online.
    pub fn open(root: &Path, config: &ClusterConfig) -> Result<Self, BlobError> {
        let existed = DiskLayout::exists(root);
        let disk = DiskLayout::new(root)?;
        let mut c = Cluster::new(config.replication_factor);
        if existed {
            let loaded = disk.load()?;
            for (id, role, store) in loaded.peers {
                c.peers.insert(
                    id.clone(),
                    Peer {
                        id,
                        role,
                        online: true,
                        store,
                    },
                );
            }
            c.pins = loaded.pins;
            c.disk = Some(disk);
        } else {
            c.disk = Some(disk);
            c.add_default_peers(config)?;
            c.persist_pins()?;
        }
        Ok(c)
    }

    pub fn root(&self) -> Option<&Path> {
        self.disk.as_ref().map(DiskLayout::root)
    }

    pub fn default_replication(&self) -> u32 {
        self.default_replication
    }

    pub fn add_peer(&mut self, id: &str, role: PeerRole) -> Result<PeerId, BlobError> {
        let id = PeerId::new(id)?;
        if self.peers.contains_key(&id) {
            return Err(BlobError::DuplicatePeer(id));
        }
        self.peers.insert(
            id.clone(),
            Peer {
                id: id.clone(),
                role,
                online: true,
                store: BTreeMap::new(),
            },
        );
        if let Some(disk) = &self.disk {
            disk.write_peers(self.peers.values().map(|p| (&p.id, p.role)))?;
        }
        Ok(id)
    }

    pub fn peers(&self) -> impl Iterator<Item = &Peer> {
        self.peers.values()
    }

    pub fn peer(&self, id: &str) -> Option<&Peer> {
        self.peers.values().find(|p| p.id.as_str() == id)
    }

    fn peer_key(&self, id: &str) -> Result<PeerId, BlobError> {
        self.peer(id)
            .map(|p| p.id.clone())
            .ok_or_else(|| BlobError::UnknownPeer(id.to_string()))
    }

    pub fn online_count(&self) -> usize {
        self.peers.values().filter(|p| p.online).count()
    }

    pub fn pin_set(&self) -> &BTreeMap<ContentId, PinEntry> {
        &self.pins
    }

    pub fn total_stored_bytes(&self) -> u64 {
        self.peers.values().map(Peer::stored_bytes).sum()
    }

    /// Online assigned peers currently holding an intact copy.
    pub fn holders(&self, cid: &ContentId) -> Vec<PeerId> {
        self.pins
            .get(cid)
            .map(|e| {
                e.assigned
                    .iter()
                    .filter(|p| self.peers[*p].online && self.peers[*p].has_intact(cid))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn status(&self, cid: &ContentId) -> Option<PinStatus> {
        let entry = self.pins.get(cid)?;
        let holders = self.holders(cid);
        Some(PinStatus {
            cid: *cid,
            replication_factor: entry.replication_factor,
            under_replicated: (entry.replication_factor as usize) > self.online_count(),
            unavailable: self.intact_source(cid).is_none(),
            holders,
        })
    }

    fn persist_pins(&self) -> Result<(), BlobError> {
        if let Some(disk) = &self.disk {
            disk.write_pins(&self.pins)?;
        }
        Ok(())
    }

    fn write_replica(&mut self, peer: &PeerId, cid: ContentId, bytes: Vec<u8>) -> Result<(), BlobError> {
        if let Some(disk) = &self.disk {
            disk.write_blob(peer, &cid, &bytes)?;
        }
        self.peers
            .get_mut(peer)
            .expect("peer exists")
            .store
            .insert(cid, bytes);
        Ok(())
    }

    fn load_of(&self) -> BTreeMap<PeerId, usize> {
        let mut load: BTreeMap<PeerId, usize> =
            self.peers.keys().map(|p| (p.clone(), 0)).collect();
        for entry in self.pins.values() {
            for p in &entry.assigned {
                *load.entry(p.clone()).or_default() += 1;
            }
        }
        load
    }

    /// First online peer with an intact copy, preferring assigned peers.
    fn intact_source(&self, cid: &ContentId) -> Option<PeerId> {
        let assigned = self.pins.get(cid).map(|e| &e.assigned);
        let online_intact = |p: &&Peer| p.online && p.has_intact(cid);
        assigned
            .into_iter()
            .flatten()
            .map(|id| &self.peers[id])
            .find(online_intact)
            .or_else(|| self.peers.values().find(online_intact))
            .map(|p| p.id.clone())
    }

    /// Stores `bytes` and pins them at the default replication factor. Adding
    /// content that is already pinned changes nothing except restoring
    /// missing or corrupt copies on online assigned peers.
    pub fn add_blob(&mut self, bytes: &[u8]) -> Result<ContentId, BlobError> {
        if self.online_count() == 0 {
            return Err(BlobError::NoPeers);
        }
        let cid = ContentId::of(bytes);
        if !self.pins.contains_key(&cid) {
            self.pins.insert(
                cid,
                PinEntry {
                    replication_factor: self.default_replication,
                    assigned: BTreeSet::new(),
                },
            );
        }
        let mut report = RebalanceReport::default();
        self.reconcile(cid, Some(bytes), &mut self.load_of(), &mut report)?;
        self.persist_pins()?;
        Ok(cid)
    }

    /// Reads and verifies a blob. Corrupt copies are skipped and reported;
    /// the returned bytes always hash to `cid`.
    pub fn get_blob(&self, cid: &ContentId) -> Result<Retrieved, BlobError> {
        let assigned: Vec<&PeerId> = self
            .pins
            .get(cid)
            .map(|e| e.assigned.iter().collect())
            .unwrap_or_default();
        let others = self.peers.keys().filter(|p| !assigned.contains(p));
        let mut corrupt = Vec::new();
        let mut first_bad = None;
        for id in assigned.iter().copied().chain(others) {
            let peer = &self.peers[id];
            if !peer.online {
                continue;
            }
            let Some(bytes) = peer.store.get(cid) else {
                continue;
            };
            let digest = Digest::of(bytes);
            if digest == cid.digest() {
                return Ok(Retrieved {
                    bytes: bytes.clone(),
                    source: id.clone(),
                    corrupt_peers: corrupt,
                });
            }
            first_bad.get_or_insert(digest);
            corrupt.push(id.clone());
        }
        match first_bad {
            Some(computed) => Err(BlobError::CorruptBlob {
                cid: *cid,
                peers: corrupt,
                computed,
            }),
            None => Err(BlobError::NotFound(*cid)),
        }
    }

    fn require_standard(&self, actor: &str) -> Result<(), BlobError> {
        let id = self.peer_key(actor)?;
        match self.peers[&id].role {
            PeerRole::Standard => Ok(()),
            PeerRole::Follower => Err(BlobError::NotStandardPeer(id)),
        }
    }

    /// Sets the replication factor for content already held somewhere in the
    /// cluster and allocates copies accordingly.
    pub fn pin(&mut self, actor: &str, cid: &ContentId, replication_factor: u32) -> Result<PinStatus, BlobError> {
        self.require_standard(actor)?;
        if replication_factor == 0 {
            return Err(BlobError::ZeroReplication);
        }
        if !self.pins.contains_key(cid) && self.intact_source(cid).is_none() {
            return Err(BlobError::UnknownContent(*cid));
        }
        self.pins
            .entry(*cid)
            .or_insert_with(|| PinEntry {
                replication_factor,
                assigned: BTreeSet::new(),
            })
            .replication_factor = replication_factor;
        let mut report = RebalanceReport::default();
        self.reconcile(*cid, None, &mut self.load_of(), &mut report)?;
        self.persist_pins()?;
        Ok(self.status(cid).expect("just pinned"))
    }

    /// Removes the pin. Stored copies are left in place.
    pub fn unpin(&mut self, actor: &str, cid: &ContentId) -> Result<(), BlobError> {
        self.require_standard(actor)?;
        if self.pins.remove(cid).is_none() {
            return Err(BlobError::UnknownContent(*cid));
        }
        self.persist_pins()
    }

    pub fn set_peer_online(&mut self, peer: &str, online: bool) -> Result<(), BlobError> {
        let id = self.peer_key(peer)?;
        self.peers.get_mut(&id).expect("exists").online = online;
        Ok(())
    }

    pub fn rebalance(&mut self) -> Result<RebalanceReport, BlobError> {
        let mut report = RebalanceReport::default();
        let mut load = self.load_of();
        let cids: Vec<ContentId> = self.pins.keys().copied().collect();
        for cid in cids {
            self.reconcile(cid, None, &mut load, &mut report)?;
        }
        self.persist_pins()?;
        Ok(report)
    }

    /// Brings one pin entry to `min(replication, online)` online holders.
    /// `fresh` supplies the bytes when they are not yet on any peer.
    fn reconcile(
        &mut self,
        cid: ContentId,
        fresh: Option<&[u8]>,
        load: &mut BTreeMap<PeerId, usize>,
        report: &mut RebalanceReport,
    ) -> Result<(), BlobError> {
        let source: Vec<u8> = match fresh {
            Some(bytes) => bytes.to_vec(),
            None => match self.intact_source(&cid) {
                Some(p) => self.peers[&p].store[&cid].clone(),
                None => {
                    report.unavailable.push(cid);
                    return Ok(());
                }
            },
        };
        let online = self.online_count();
        let entry = self.pins.get(&cid).expect("reconcile of pinned content").clone();
        let target = (entry.replication_factor as usize).min(online);
        if entry.replication_factor as usize > online {
            report.under_replicated.push(cid);
        }

        let mut keep: BTreeSet<PeerId> = BTreeSet::new();
        for p in &entry.assigned {
            if self.peers[p].online {
                keep.insert(p.clone());
            } else {
                report.abandoned.push((cid, p.clone()));
                *load.get_mut(p).expect("known peer") -= 1;
            }
        }
        // Trim surplus: drop the most loaded first, ties to the greatest id.
        while keep.len() > target {
            let victim = keep
                .iter()
                .max_by(|a, b| load[*a].cmp(&load[*b]).then(a.cmp(b)))
                .cloned()
                .expect("non-empty");
            keep.remove(&victim);
            *load.get_mut(&victim).expect("known peer") -= 1;
            report.abandoned.push((cid, victim));
        }
        for p in &keep {
            if !self.peers[p].has_intact(&cid) {
                self.write_replica(p, cid, source.clone())?;
                report.repaired.push((cid, p.clone()));
            }
        }
        while keep.len() < target {
            let pick = self
                .peers
                .values()
                .filter(|p| p.online && !keep.contains(&p.id))
                .min_by(|a, b| load[&a.id].cmp(&load[&b.id]).then(a.id.cmp(&b.id)))
                .map(|p| p.id.clone())
                .expect("target bounded by online peers");
            *load.get_mut(&pick).expect("known peer") += 1;
            if !self.peers[&pick].has_intact(&cid) {
                self.write_replica(&pick, cid, source.clone())?;
            }
            report.created.push((cid, pick.clone()));
            keep.insert(pick);
        }
        self.pins.get_mut(&cid).expect("pinned").assigned = keep;
        Ok(())
    }

    /// Fault injection: rewrites one peer's copy in place, bypassing the
    /// coordinator's checks.
    pub fn tamper_replica(
        &mut self,
        peer: &str,
        cid: &ContentId,
        f: impl FnOnce(&mut Vec<u8>),
    ) -> Result<(), BlobError> {
        let id = self.peer_key(peer)?;
        let bytes = self
            .peers
            .get_mut(&id)
            .expect("exists")
            .store
            .get_mut(cid)
            .ok_or(BlobError::NotFound(*cid))?;
        f(bytes);
        if let Some(disk) = &self.disk {
            disk.write_blob(&id, cid, bytes)?;
        }
        Ok(())
    }

    /// Fault injection: deletes one peer's copy.
    pub fn remove_replica(&mut self, peer: &str, cid: &ContentId) -> Result<(), BlobError> {
        let id = self.peer_key(peer)?;
        self.peers.get_mut(&id).expect("exists").store.remove(cid);
        if let Some(disk) = &self.disk {
            disk.remove_blob(&id, cid)?;
        }
        Ok(())
    }

    /// Every peer currently storing `cid`, intact or not.
    pub fn replica_peers(&self, cid: &ContentId) -> Vec<PeerId> {
        self.peers
            .values()
            .filter(|p| p.has(cid))
            .map(|p| p.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(standard: usize, follower: usize) -> Cluster {
        Cluster::from_config(&ClusterConfig {
            standard_peers: standard,
            follower_peers: follower,
            replication_factor: 2,
        })
    }

    #[test]
    fn empty_blob_has_fixed_id() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"").unwrap();
        assert_eq!(
            cid.digest().to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert!(c.get_blob(&cid).unwrap().bytes.is_empty());
    }

    #[test]
    fn identical_adds_deduplicate() {
        let mut c = cluster(1, 2);
        let a = c.add_blob(b"hello").unwrap();
        let stored = c.total_stored_bytes();
        let b = c.add_blob(b"hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(c.total_stored_bytes(), stored);
        assert_eq!(stored, 2 * 5);
        assert_eq!(c.pin_set().len(), 1);
    }

    #[test]
    fn distinct_adds_are_both_retrievable() {
        let mut c = cluster(1, 2);
        let a = c.add_blob(b"one").unwrap();
        let b = c.add_blob(b"two").unwrap();
        assert_ne!(a, b);
        assert_eq!(c.get_blob(&a).unwrap().bytes, b"one");
        assert_eq!(c.get_blob(&b).unwrap().bytes, b"two");
    }

    #[test]
    fn allocation_is_least_loaded_then_lexicographic() {
        let mut c = cluster(1, 2);
        let a = c.add_blob(b"a").unwrap();
        // all loads zero: lexicographic order picks follower-00, follower-01
        assert_eq!(
            c.holders(&a).iter().map(PeerId::as_str).collect::<Vec<_>>(),
            ["follower-00", "follower-01"]
        );
        let b = c.add_blob(b"b").unwrap();
        // standard-00 now least loaded
        assert!(c.holders(&b).iter().any(|p| p.as_str() == "standard-00"));
    }

    #[test]
    fn no_online_peers() {
        let mut c = cluster(1, 0);
        c.set_peer_online("standard-00", false).unwrap();
        assert!(matches!(c.add_blob(b"x"), Err(BlobError::NoPeers)));
    }

    #[test]
    fn all_holders_offline_is_not_found() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"x").unwrap();
        for p in c.holders(&cid) {
            c.set_peer_online(p.as_str(), false).unwrap();
        }
        assert!(matches!(c.get_blob(&cid), Err(BlobError::NotFound(_))));
    }

    #[test]
    fn corrupt_replica_is_skipped_and_reported() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"payload").unwrap();
        let holders = c.holders(&cid);
        c.tamper_replica(holders[0].as_str(), &cid, |b| b[0] ^= 1).unwrap();
        let got = c.get_blob(&cid).unwrap();
        assert_eq!(got.bytes, b"payload");
        assert_eq!(got.source, holders[1]);
        assert_eq!(got.corrupt_peers, vec![holders[0].clone()]);

        c.tamper_replica(holders[1].as_str(), &cid, |b| b[1] ^= 1).unwrap();
        match c.get_blob(&cid) {
            Err(BlobError::CorruptBlob { peers, computed, .. }) => {
                assert_eq!(peers, holders);
                assert_ne!(computed, cid.digest());
            }
            other => panic!("expected corrupt, got {other:?}"),
        }
    }

    #[test]
    fn pin_roles_and_replication() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"x").unwrap();
        let st = c.pin("standard-00", &cid, 2).unwrap();
        assert_eq!(st.holders.len(), 2);
        assert!(matches!(
            c.pin("follower-00", &cid, 3),
            Err(BlobError::NotStandardPeer(_))
        ));
        assert!(matches!(
            c.unpin("follower-00", &cid),
            Err(BlobError::NotStandardPeer(_))
        ));
        let st = c.pin("standard-00", &cid, 5).unwrap();
        assert_eq!(st.holders.len(), 3);
        assert!(st.under_replicated);
        assert!(matches!(
            c.pin("standard-00", &ContentId::of(b"never"), 1),
            Err(BlobError::UnknownContent(_))
        ));
        assert!(matches!(
            c.pin("nobody", &cid, 1),
            Err(BlobError::UnknownPeer(_))
        ));
    }

    #[test]
    fn lowering_replication_trims_holders() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"x").unwrap();
        c.pin("standard-00", &cid, 3).unwrap();
        let st = c.pin("standard-00", &cid, 1).unwrap();
        assert_eq!(st.holders.len(), 1);
    }

    #[test]
    fn unpin_then_repin_uses_leftover_copies() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"x").unwrap();
        c.unpin("standard-00", &cid).unwrap();
        assert!(c.pin_set().is_empty());
        assert!(matches!(
            c.unpin("standard-00", &cid),
            Err(BlobError::UnknownContent(_))
        ));
        c.pin("standard-00", &cid, 2).unwrap();
        assert_eq!(c.holders(&cid).len(), 2);
    }

    #[test]
    fn rebalance_restores_replication() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"x").unwrap();
        let holders = c.holders(&cid);
        c.set_peer_online(holders[0].as_str(), false).unwrap();
        assert_eq!(c.holders(&cid).len(), 1);
        let report = c.rebalance().unwrap();
        assert_eq!(report.created.len(), 1);
        assert_eq!(report.abandoned, vec![(cid, holders[0].clone())]);
        assert_eq!(c.holders(&cid).len(), 2);
    }

    #[test]
    fn killing_non_holder_is_noop() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"x").unwrap();
        let idle = c
            .peers()
            .find(|p| !c.holders(&cid).contains(p.id()))
            .unwrap()
            .id()
            .clone();
        c.set_peer_online(idle.as_str(), false).unwrap();
        assert!(c.rebalance().unwrap().is_noop());
    }

    #[test]
    fn all_offline_marks_unavailable() {
        let mut c = cluster(1, 2);
        let a = c.add_blob(b"a").unwrap();
        let b = c.add_blob(b"b").unwrap();
        for p in ["standard-00", "follower-00", "follower-01"] {
            c.set_peer_online(p, false).unwrap();
        }
        let report = c.rebalance().unwrap();
        assert_eq!(report.unavailable, vec![a.min(b), a.max(b)]);
        assert!(matches!(
            c.set_peer_online("ghost", true),
            Err(BlobError::UnknownPeer(_))
        ));
    }

    #[test]
    fn rebalance_repairs_corrupt_assigned_copy() {
        let mut c = cluster(1, 2);
        let cid = c.add_blob(b"data").unwrap();
        let h = c.holders(&cid)[0].clone();
        c.tamper_replica(h.as_str(), &cid, |b| b[0] ^= 0xff).unwrap();
        let report = c.rebalance().unwrap();
        assert_eq!(report.repaired, vec![(cid, h)]);
        assert_eq!(c.holders(&cid).len(), 2);
    }

    #[test]
    fn persisted_cluster_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let config = ClusterConfig::default();
        let cid = {
            let mut c = Cluster::open(dir.path(), &config).unwrap();
            c.add_blob(b"persist me").unwrap()
        };
        let pins = std::fs::read_to_string(dir.path().join(PINS_INDEX)).unwrap();
        assert!(pins.starts_with(&format!("{cid} 2 ")));
        let c = Cluster::open(dir.path(), &config).unwrap();
        assert_eq!(c.get_blob(&cid).unwrap().bytes, b"persist me");
        assert_eq!(c.holders(&cid).len(), 2);
        assert_eq!(c.peers().count(), 3);
    }

    #[test]
    fn on_disk_corruption_is_detected_after_reload() {
        let dir = tempfile::tempdir().unwrap();
        let config = ClusterConfig::default();
        let cid = Cluster::open(dir.path(), &config)
            .unwrap()
            .add_blob(b"evidence")
            .unwrap();
        for entry in std::fs::read_dir(dir.path().join(PEERS_DIR)).unwrap() {
            let f = entry.unwrap().path().join(cid.to_hex());
            if f.exists() {
                std::fs::write(&f, b"evidencE").unwrap();
            }
        }
        let c = Cluster::open(dir.path(), &config).unwrap();
        assert!(matches!(c.get_blob(&cid), Err(BlobError::CorruptBlob { .. })));
    }

    #[test]
    fn peer_ids_are_validated() {
        let mut c = Cluster::new(2);
        assert!(matches!(
            c.add_peer("../etc", PeerRole::Standard),
            Err(BlobError::InvalidPeerId(_))
        ));
        c.add_peer("a", PeerRole::Standard).unwrap();
        assert!(matches!(
            c.add_peer("a", PeerRole::Follower),
            Err(BlobError::DuplicatePeer(_))
        ));
    }
}
