//! Run artifact serialization.
//!
//! Layout of a `.ecsrun` file (all integers little-endian):
//!
//! | offset        | size      | content                                         |
//! |---------------|-----------|-------------------------------------------------|
//! | 0             | 8         | magic `ECSRUN01`                                |
//! | 8             | 8         | `H`, byte length of the JSON header (u64)       |
//! | 16            | `H`       | UTF-8 JSON header, see [`RunHeader`]            |
//! | 16 + H        | 4 * n * k | neighbor ids (u32), anchor-major, rank order    |
//! | 16 + H + 4nk  | n * k     | class codes (u8): EE=0, EU=1, UE=2, UU=3        |
//!
//! Cumulative profile functions are not stored; they are prefix counts of the
//! class codes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EcsConfig, EcsRun, PairClass, Provenance};
use crate::error::{EcsError, Result};
use crate::metrics::ResolvedDeltas;

pub const MAGIC: &[u8; 8] = b"ECSRUN01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format_version: u32,
    pub n: usize,
    pub k_max: usize,
    pub config: EcsConfig,
    pub resolved: ResolvedDeltas,
    pub dataset_fingerprint: String,
    pub provenance: Provenance,
}

impl RunHeader {
    pub fn of(run: &EcsRun) -> Self {
        RunHeader {
            format_version: FORMAT_VERSION,
            n: run.n(),
            k_max: run.k_max(),
            config: run.config,
            resolved: run.resolved,
            dataset_fingerprint: run.dataset_fingerprint.clone(),
            provenance: run.provenance.clone(),
        }
    }
}

pub fn write_run<W: Write>(run: &EcsRun, mut w: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&RunHeader::of(run)).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(run.neighbor_table().len() * 4);
    for id in run.neighbor_table() {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    w.write_all(&buf)?;
    let codes: Vec<u8> = run.class_table().iter().map(|&c| c as u8).collect();
    w.write_all(&codes)?;
    w.flush()
}

pub fn to_bytes(run: &EcsRun) -> Vec<u8> {
    let mut out = Vec::new();
    write_run(run, &mut out).expect("writing to memory cannot fail");
    out
}

fn bad(msg: impl Into<String>) -> EcsError {
    EcsError::BadArtifact(msg.into())
}

fn read_exact<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| bad(format!("truncated {what}: {e}")))?;
    Ok(buf)
}

pub fn read_run<R: Read>(mut r: R) -> Result<EcsRun> {
    let magic = read_exact(&mut r, 8, "magic")?;
    if magic != MAGIC {
        return Err(bad("not an ECS run artifact (bad magic)"));
    }
    let len = u64::from_le_bytes(read_exact(&mut r, 8, "header length")?.try_into().unwrap());
    if len > 1 << 30 {
        return Err(bad(format!("implausible header length {len}")));
    }
    let header: RunHeader = serde_json::from_slice(&read_exact(&mut r, len as usize, "header")?)
        .map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", header.format_version)));
    }
    let cells = header
        .n
        .checked_mul(header.k_max)
        .ok_or_else(|| bad("n * k overflows"))?;
    let raw = read_exact(&mut r, cells * 4, "neighbor table")?;
    let neighbors = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let classes = read_exact(&mut r, cells, "class table")?
        .into_iter()
        .map(|c| PairClass::from_code(c).ok_or_else(|| bad(format!("invalid class code {c}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after class table"));
    }
    EcsRun::from_parts(
        header.config,
        header.resolved,
        header.dataset_fingerprint,
        header.provenance,
        header.n,
        header.k_max,
        neighbors,
        classes,
    )
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn save_run(run: &EcsRun, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("ecsrun.partial");
    let file = File::create(&tmp).map_err(|e| EcsError::io(&tmp, e))?;
    if let Err(e) = write_run(run, BufWriter::new(file)) {
        let _ = std::fs::remove_file(&tmp);
        return Err(EcsError::io(&tmp, e));
    }
    std::fs::rename(&tmp, path).map_err(|e| EcsError::io(path, e))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<EcsRun> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| EcsError::io(path, e))?;
    read_run(BufReader::new(file))
}
