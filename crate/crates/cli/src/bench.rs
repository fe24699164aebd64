//! Import / hash / download timings across file sizes.
//!
//! Each size is timed `repeat` times on a fresh cluster and the median of
//! each column is reported.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use custody_core::blobstore::{Cluster, ClusterConfig};
use custody_core::integrity::hash_file;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub size_bytes: u64,
    pub import_ms: f64,
    pub hash_ms: f64,
    pub download_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub sizes: Vec<u64>,
    pub repeat: usize,
    pub cluster: ClusterConfig,
    pub seed: u64,
    /// Store blobs on disk under this directory instead of in memory.
    pub dir: Option<PathBuf>,
}

/// Parses sizes such as `64KiB`, `8MiB`, `1GiB`, `500kB` or `4096`.
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: u64 = num.parse().map_err(|_| format!("bad size {s:?}"))?;
    let mult: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" => 1_000,
        "kib" => 1 << 10,
        "m" | "mb" => 1_000_000,
        "mib" => 1 << 20,
        "g" | "gb" => 1_000_000_000,
        "gib" => 1 << 30,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("size {s:?} overflows"))
}

pub fn parse_sizes(s: &str) -> Result<Vec<u64>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_size).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn run(opts: &BenchOptions) -> Result<Vec<BenchRow>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let files: Vec<Vec<u8>> = opts
        .sizes
        .iter()
        .map(|&n| {
            let mut b = vec![0u8; n as usize];
            rng.fill_bytes(&mut b);
            b
        })
        .collect();
    let repeat = opts.repeat.max(1);
    let mut rows = Vec::with_capacity(files.len());
    for (i, data) in files.iter().enumerate() {
        let (mut import, mut hash, mut download) = (Vec::new(), Vec::new(), Vec::new());
        for r in 0..repeat {
            let mut cluster = match &opts.dir {
                Some(d) => Cluster::open(&d.join(format!("size{i}-run{r}")), &opts.cluster)
                    .map_err(|e| CliError::new(1, "Bench", e.to_string()))?,
                None => Cluster::from_config(&opts.cluster),
            };
            let t = Instant::now();
            let cid = cluster
                .add_blob(data)
                .map_err(|e| CliError::new(1, "Bench", e.to_string()))?;
            import.push(ms(t));

            let t = Instant::now();
            let digest = hash_file(data);
            hash.push(ms(t));

            let t = Instant::now();
            let back = cluster
                .get_blob(&cid)
                .map_err(|e| CliError::new(1, "Bench", e.to_string()))?;
            download.push(ms(t));
            if hash_file(&back.bytes) != digest {
                return Err(CliError::new(3, "Bench", "downloaded bytes differ from import"));
            }
        }
        rows.push(BenchRow {
            size_bytes: data.len() as u64,
            import_ms: median(import),
            hash_ms: median(hash),
            download_ms: median(download),
        });
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::new(1, "Io", e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io("csv", e))
}

/// Whether `column` never decreases as size grows.
pub fn non_decreasing(rows: &[BenchRow], column: impl Fn(&BenchRow) -> f64) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.size_bytes);
    sorted.windows(2).all(|w| column(&w[0]) <= column(&w[1]))
}
