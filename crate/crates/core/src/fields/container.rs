//! Flat binary container for fields plus a JSON grid sidecar.
//!
//! Layout (all integers little-endian `u64`):
//! `"CEAF"`, version, axis count, node count per axis, then the row-major
//! values as little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::grid::{AxisSpec, GridSpec};
use super::ScalarField;
use crate::error::{CeaError, Result};

pub const CEAF_MAGIC: &[u8; 4] = b"CEAF";
pub const CEAF_VERSION: u64 = 1;

pub fn write_field(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let grid = f.grid();
    let mut out = Vec::with_capacity(4 + 8 * (2 + grid.dims() + grid.len()));
    out.extend_from_slice(CEAF_MAGIC);
    out.extend_from_slice(&CEAF_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dims() as u64).to_le_bytes());
    for &n in grid.shape() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn write_grid_sidecar(path: impl AsRef<Path>, grid: &GridSpec) -> Result<()> {
    let json = serde_json::to_string_pretty(&grid.specs())?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_grid_sidecar(path: impl AsRef<Path>) -> Result<Arc<GridSpec>> {
    let specs: Vec<AxisSpec> = serde_json::from_str(&fs::read_to_string(path)?)?;
    GridSpec::new(specs)
}

fn read_u64(bytes: &[u8], at: &mut usize) -> Result<u64> {
    let chunk = bytes
        .get(*at..*at + 8)
        .ok_or_else(|| CeaError::Format("truncated header".into()))?;
    *at += 8;
    Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
}

/// Reads a field container and checks it against `grid`.
pub fn read_field(path: impl AsRef<Path>, grid: &Arc<GridSpec>) -> Result<ScalarField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != CEAF_MAGIC {
        return Err(CeaError::Format("bad magic".into()));
    }
    let mut at = 4;
    let version = read_u64(&bytes, &mut at)?;
    if version != CEAF_VERSION {
        return Err(CeaError::Format(format!("unsupported version {version}")));
    }
    let dims = read_u64(&bytes, &mut at)? as usize;
    let mut shape = Vec::with_capacity(dims);
    for _ in 0..dims {
        shape.push(read_u64(&bytes, &mut at)? as usize);
    }
    if shape != grid.shape() {
        return Err(CeaError::GridMismatch(format!(
            "container shape {shape:?} vs grid {:?}",
            grid.shape()
        )));
    }
    let body = &bytes[at..];
    if body.len() != 8 * grid.len() {
        return Err(CeaError::Format(format!(
            "expected {} value bytes, found {}",
            8 * grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ScalarField::new(grid.clone(), values)
}
