//! Run-directory output: JSON documents, little-endian f64 arrays with JSON
//! sidecars, CSV traces. Every file is written to a temporary name and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Grid3;
use crate::wavefield::TimeSignal;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn f64_le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Sidecar describing a binary dump.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub name: String,
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
    /// Number of time levels for space-time dumps (node-major within a level).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub kind: String,
    pub units: String,
    pub layout: &'static str,
    pub provenance: String,
    pub scenario_sha256: String,
    pub data_sha256: String,
}

pub struct FieldDump<'a> {
    pub name: &'a str,
    pub grid: &'a Grid3,
    pub values: &'a [f64],
    pub time: Option<(f64, f64, usize)>,
    pub kind: &'a str,
    pub units: &'a str,
    pub provenance: &'a str,
}

/// Write `<dir>/<name>.bin` and `<dir>/<name>.json`.
pub fn write_field(dir: &Path, dump: &FieldDump<'_>, scenario_sha256: &str) -> Result<PathBuf> {
    let bytes = f64_le_bytes(dump.values);
    let bin = dir.join(format!("{}.bin", dump.name));
    write_atomic(&bin, &bytes)?;
    let sidecar = Sidecar {
        name: dump.name.into(),
        origin: dump.grid.origin,
        spacing: dump.grid.spacing,
        dims: dump.grid.dims,
        time_levels: dump.time.map(|t| t.2),
        t0: dump.time.map(|t| t.0),
        dt: dump.time.map(|t| t.1),
        kind: dump.kind.into(),
        units: dump.units.into(),
        layout: "little-endian f64, x fastest, then y, z, then time",
        provenance: dump.provenance.into(),
        scenario_sha256: scenario_sha256.into(),
        data_sha256: sha256_hex(&bytes),
    };
    write_json(&dir.join(format!("{}.json", dump.name)), &sidecar)?;
    Ok(bin)
}

pub fn write_trace(path: &Path, trace: &TimeSignal) -> Result<()> {
    write_atomic(path, trace.to_csv().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.bin");
        let v = vec![1.5, -2.0, f64::MIN_POSITIVE];
        write_atomic(&p, &f64_le_bytes(&v)).unwrap();
        assert_eq!(read_f64_le(&p).unwrap(), v);
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("a"))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers.len(), 1);
    }
}
