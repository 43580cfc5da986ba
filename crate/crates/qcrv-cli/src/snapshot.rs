//! Binary field snapshots: magic "QCRV", version 1, then dimension, points
//! per axis, lambda, and the row-major field payload — all little-endian
//! regardless of host, so a snapshot round-trips bit-exactly anywhere.

use std::path::Path;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"QCRV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dimension: u32,
    /// Points per axis of the stored lattice.
    pub grid: u32,
    pub lambda: f64,
    /// Row-major values, length grid^dimension exactly.
    pub values: Vec<f64>,
}

fn payload_len(dimension: u32, grid: u32) -> Result<usize> {
    if dimension == 0 || dimension > 4 {
        return Err(CliError::State(format!("snapshot dimension {dimension} out of range")));
    }
    (grid as u64)
        .checked_pow(dimension)
        .filter(|&n| n <= usize::MAX as u64)
        .map(|n| n as usize)
        .ok_or_else(|| CliError::State(format!("snapshot payload {grid}^{dimension} overflows")))
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let expect = payload_len(snap.dimension, snap.grid)?;
    if snap.values.len() != expect {
        return Err(CliError::State(format!(
            "snapshot payload has {} values, header {}^{} needs {expect}",
            snap.values.len(),
            snap.grid,
            snap.dimension
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * snap.values.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&snap.dimension.to_le_bytes());
    buf.extend_from_slice(&snap.grid.to_le_bytes());
    buf.extend_from_slice(&snap.lambda.to_le_bytes());
    for v in &snap.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let fail = |message: String| CliError::Snapshot {
        path: path.display().to_string(),
        message,
    };
    if data.len() < HEADER_LEN {
        return Err(fail(format!("file is {} bytes, header needs {HEADER_LEN}", data.len())));
    }
    if data[..4] != MAGIC {
        return Err(fail("bad magic bytes (not a QCRV snapshot)".to_string()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(data[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(fail(format!("unsupported format version {version} (expected {VERSION})")));
    }
    let dimension = u32_at(8);
    let grid = u32_at(12);
    let lambda = f64::from_le_bytes(data[16..24].try_into().unwrap());
    let expect = payload_len(dimension, grid)
        .map_err(|e| fail(e.to_string()))?;
    let body = &data[HEADER_LEN..];
    if body.len() != 8 * expect {
        return Err(fail(format!(
            "payload is {} bytes, header {grid}^{dimension} needs {}",
            body.len(),
            8 * expect
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Snapshot { dimension, grid, lambda, values })
}

/// Read only the header fields (cheap schedule matching during resume).
pub fn read_header(path: &Path) -> Result<(u32, u32, f64)> {
    use std::io::Read;
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut head = [0u8; HEADER_LEN];
    file.read_exact(&mut head).map_err(|e| CliError::io(path, e))?;
    if head[..4] != MAGIC {
        return Err(CliError::Snapshot {
            path: path.display().to_string(),
            message: "bad magic bytes (not a QCRV snapshot)".to_string(),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(head[off..off + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(CliError::Snapshot {
            path: path.display().to_string(),
            message: format!("unsupported format version {}", u32_at(4)),
        });
    }
    Ok((u32_at(8), u32_at(12), f64::from_le_bytes(head[16..24].try_into().unwrap())))
}
