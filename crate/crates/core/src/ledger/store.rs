//! On-disk chain: `blocks.dat` holds canonical block encodings back to back,
//! `blocks.idx` holds one 16-byte entry per block (offset `u64` BE, length
//! `u64` BE). Both files are only ever appended to.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::codec::Canonical;

use super::block::Block;

pub const BLOCKS_FILE: &str = "blocks.dat";
pub const INDEX_FILE: &str = "blocks.idx";
const INDEX_ENTRY_LEN: usize = 16;

#[derive(Debug)]
pub struct ChainStore {
    dir: PathBuf,
    blocks: File,
    index: File,
    data_len: u64,
}

impl ChainStore {
    pub fn exists(dir: &Path) -> bool {
        dir.join(INDEX_FILE).is_file()
    }

    /// Opens (creating if absent) the store under `dir`.
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let blocks = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(dir.join(BLOCKS_FILE))?;
        let index = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(dir.join(INDEX_FILE))?;
        let mut store = ChainStore {
            dir: dir.to_path_buf(),
            blocks,
            index,
            data_len: 0,
        };
        store.data_len = store.indexed_data_len()?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read_index(&self) -> io::Result<Vec<(u64, u64)>> {
        let mut raw = Vec::new();
        (&self.index).seek(SeekFrom::Start(0))?;
        (&self.index).read_to_end(&mut raw)?;
        // A torn trailing entry is ignored; the block it described was never indexed.
        Ok(raw
            .chunks_exact(INDEX_ENTRY_LEN)
            .map(|c| {
                let off = u64::from_be_bytes(c[..8].try_into().expect("8 bytes"));
                let len = u64::from_be_bytes(c[8..].try_into().expect("8 bytes"));
                (off, len)
            })
            .collect())
    }

    fn indexed_data_len(&self) -> io::Result<u64> {
        Ok(self
            .read_index()?
            .last()
            .map(|(off, len)| off + len)
            .unwrap_or(0))
    }

    pub fn append(&mut self, block: &Block) -> io::Result<()> {
        let bytes = block.to_canonical_bytes();
        // Drop any unindexed tail left by an interrupted append.
        if self.blocks.metadata()?.len() != self.data_len {
            self.blocks.set_len(self.data_len)?;
        }
        self.blocks.write_all(&bytes)?;
        self.blocks.sync_data()?;
        let mut entry = [0u8; INDEX_ENTRY_LEN];
        entry[..8].copy_from_slice(&self.data_len.to_be_bytes());
        entry[8..].copy_from_slice(&(bytes.len() as u64).to_be_bytes());
        self.index.write_all(&entry)?;
        self.index.sync_data()?;
        self.data_len += bytes.len() as u64;
        Ok(())
    }

    /// Raw stored bytes of every indexed block, in height order.
    pub fn load_raw(&self) -> io::Result<Vec<Vec<u8>>> {
        let entries = self.read_index()?;
        let mut data = Vec::new();
        (&self.blocks).seek(SeekFrom::Start(0))?;
        (&self.blocks).read_to_end(&mut data)?;
        entries
            .into_iter()
            .map(|(off, len)| {
                let end = off.checked_add(len).filter(|&e| e <= data.len() as u64);
                match end {
                    Some(end) => Ok(data[off as usize..end as usize].to_vec()),
                    None => Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        format!("index entry {off}+{len} points past end of {BLOCKS_FILE}"),
                    )),
                }
            })
            .collect()
    }
}
