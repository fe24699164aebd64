//! Cluster persistence. Under the root directory:
//!
//! ```text
//! peers.idx            one line per peer: `<peer_id> <standard|follower>`
//! pins.idx             one line per pin:  `<cid> <replication> <holder,holder|->`
//! peers/<peer_id>/<cid> raw blob bytes, one file per stored blob
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::cid::ContentId;
use super::{PeerId, PeerRole, PinEntry};

pub const PEERS_INDEX: &str = "peers.idx";
pub const PINS_INDEX: &str = "pins.idx";
pub const PEERS_DIR: &str = "peers";

fn bad_data(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

#[derive(Debug, Clone)]
pub(super) struct DiskLayout {
    root: PathBuf,
}

pub(super) struct Loaded {
    pub peers: Vec<(PeerId, PeerRole, BTreeMap<ContentId, Vec<u8>>)>,
    pub pins: BTreeMap<ContentId, PinEntry>,
}

impl DiskLayout {
    pub fn new(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root.join(PEERS_DIR))?;
        Ok(DiskLayout {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(root: &Path) -> bool {
        root.join(PEERS_INDEX).is_file()
    }

    fn peer_dir(&self, peer: &PeerId) -> PathBuf {
        self.root.join(PEERS_DIR).join(peer.as_str())
    }

    pub fn blob_path(&self, peer: &PeerId, cid: &ContentId) -> PathBuf {
        self.peer_dir(peer).join(cid.to_hex())
    }

    fn write_atomic(&self, name: &str, contents: &str) -> io::Result<()> {
        let tmp = self.root.join(format!("{name}.tmp"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_data()?;
        fs::rename(tmp, self.root.join(name))
    }

    pub fn write_peers<'a>(&self, peers: impl Iterator<Item = (&'a PeerId, PeerRole)>) -> io::Result<()> {
        let mut out = String::new();
        for (id, role) in peers {
            fs::create_dir_all(self.peer_dir(id))?;
            out.push_str(&format!("{} {}\n", id, role.as_str()));
        }
        self.write_atomic(PEERS_INDEX, &out)
    }

    pub fn write_pins(&self, pins: &BTreeMap<ContentId, PinEntry>) -> io::Result<()> {
        let mut out = String::new();
        for (cid, entry) in pins {
            let holders = if entry.assigned.is_empty() {
                "-".to_string()
            } else {
                entry
                    .assigned
                    .iter()
                    .map(PeerId::as_str)
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&format!("{} {} {}\n", cid, entry.replication_factor, holders));
        }
        self.write_atomic(PINS_INDEX, &out)
    }

    pub fn write_blob(&self, peer: &PeerId, cid: &ContentId, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.blob_path(peer, cid), bytes)
    }

    pub fn remove_blob(&self, peer: &PeerId, cid: &ContentId) -> io::Result<()> {
        match fs::remove_file(self.blob_path(peer, cid)) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            other => other,
        }
    }

    pub fn load(&self) -> io::Result<Loaded> {
        let mut peers = Vec::new();
        for line in fs::read_to_string(self.root.join(PEERS_INDEX))?.lines() {
            let mut parts = line.split_whitespace();
            let (Some(id), Some(role), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad_data(format!("bad peers.idx line: {line:?}")));
            };
            let id = PeerId::new(id).map_err(|e| bad_data(e.to_string()))?;
            let role = PeerRole::parse(role).ok_or_else(|| bad_data(format!("bad role {role:?}")))?;
            let mut store = BTreeMap::new();
            let dir = self.peer_dir(&id);
            if dir.is_dir() {
                for entry in fs::read_dir(&dir)? {
                    let entry = entry?;
                    let name = entry.file_name();
                    // Skip anything that is not named like a content id.
                    if let Some(cid) = name.to_str().and_then(|n| n.parse::<ContentId>().ok()) {
                        store.insert(cid, fs::read(entry.path())?);
                    }
                }
            }
            peers.push((id, role, store));
        }

        let mut pins = BTreeMap::new();
        let pins_path = self.root.join(PINS_INDEX);
        if pins_path.is_file() {
            for line in fs::read_to_string(pins_path)?.lines() {
                let mut parts = line.split_whitespace();
                let (Some(cid), Some(r), Some(holders), None) =
                    (parts.next(), parts.next(), parts.next(), parts.next())
                else {
                    return Err(bad_data(format!("bad pins.idx line: {line:?}")));
                };
                let cid: ContentId = cid.parse().map_err(|e| bad_data(format!("{e}")))?;
                let replication_factor: u32 = r.parse().map_err(|_| bad_data(format!("bad replication {r:?}")))?;
                let assigned = if holders == "-" {
                    BTreeSet::new()
                } else {
                    holders
                        .split(',')
                        .map(|h| PeerId::new(h).map_err(|e| bad_data(e.to_string())))
                        .collect::<io::Result<_>>()?
                };
                pins.insert(
                    cid,
                    PinEntry {
                        replication_factor,
                        assigned,
                    },
                );
            }
        }
        Ok(Loaded { peers, pins })
    }
}
