//! Run artifacts: raw velocity snapshots, moment CSV and run metadata.
//!
//! Snapshot files are a sequence of blocks, each an unsigned 64-bit
//! little-endian particle count followed by `3 × count` little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FlatSimConfig, ReplicateStats, RunOutput, SimConfig, SimError};
use crate::Velocity;

pub fn write_snapshots<W: Write>(mut out: W, blocks: &[&[Velocity]]) -> std::io::Result<()> {
    for block in blocks {
        out.write_all(&(block.len() as u64).to_le_bytes())?;
        for v in block.iter() {
            for c in v.0 {
                out.write_all(&c.to_le_bytes())?;
            }
        }
    }
    out.flush()
}

pub fn read_snapshots_from<R: Read>(mut input: R) -> Result<Vec<Vec<Velocity>>, SimError> {
    let mut blocks = Vec::new();
    let mut word = [0u8; 8];
    loop {
        match input.read_exact(&mut word) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let count = u64::from_le_bytes(word);
        let count = usize::try_from(count)
            .map_err(|_| SimError::Config(format!("snapshot block of {count} particles is too large")))?;
        let mut block = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let mut c = [0.0; 3];
            for x in &mut c {
                input.read_exact(&mut word).map_err(|e| match e.kind() {
                    ErrorKind::UnexpectedEof => SimError::Config("truncated snapshot block".into()),
                    _ => e.into(),
                })?;
                *x = f64::from_le_bytes(word);
            }
            block.push(crate::Vec3(c));
        }
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Vec<Velocity>>, SimError> {
    read_snapshots_from(BufReader::new(File::open(path)?))
}

/// One line of the moment CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub order: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

pub fn write_moments_csv<W: Write>(out: W, rows: &[MomentRow]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_moments_csv<R: Read>(input: R) -> Result<Vec<MomentRow>, SimError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> SimError {
    SimError::Config(format!("csv: {e}"))
}

/// Git blob object id over SHA-256: `sha256("blob <len>\0" ++ bytes)`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Sidecar JSON of a simulation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: FlatSimConfig,
    pub moments_csv_hash: String,
    pub snapshots_hash: Option<String>,
    /// Snapshot blocks in file order: `(t, replicate)`.
    pub snapshot_layout: Vec<(f64, usize)>,
    pub replicates: Vec<ReplicateStats>,
    pub created_unix: u64,
    pub version: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `<prefix>_moments.csv`, `<prefix>_snapshots.bin` (only when the run kept
/// snapshots) and `<prefix>_meta.json`.
pub fn save_run<O>(prefix: &Path, config: &SimConfig, out: &RunOutput<O>) -> Result<RunMeta, SimError> {
    let with_suffix = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    };
    let mut csv_bytes = Vec::new();
    write_moments_csv(&mut csv_bytes, &out.moment_rows())?;
    std::fs::write(with_suffix("_moments.csv"), &csv_bytes)?;

    let mut snapshot_layout = Vec::new();
    let mut snapshots_hash = None;
    if out.snapshots.iter().any(|s| !s.ensembles.is_empty()) {
        let mut blocks: Vec<&[crate::Velocity]> = Vec::new();
        for snap in &out.snapshots {
            for (r, ens) in snap.ensembles.iter().enumerate() {
                blocks.push(ens.velocities());
                snapshot_layout.push((snap.t, r));
            }
        }
        let mut bytes = Vec::new();
        write_snapshots(&mut bytes, &blocks)?;
        std::fs::write(with_suffix("_snapshots.bin"), &bytes)?;
        snapshots_hash = Some(content_hash(&bytes));
    }

    let meta = RunMeta {
        config: FlatSimConfig::from_config(config),
        moments_csv_hash: content_hash(&csv_bytes),
        snapshots_hash,
        snapshot_layout,
        replicates: out.stats.clone(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&with_suffix("_meta.json"), &meta)?;
    Ok(meta)
}
