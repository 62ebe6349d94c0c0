//! Output files: CSV tables, JSON documents, atomic writes and the run
//! manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A named file produced by a command, held in memory until written.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Artifact {
        let mut bytes = serde_json::to_vec_pretty(value).expect("outputs serialize");
        bytes.push(b'\n');
        Artifact { name: name.into(), bytes }
    }

    pub fn csv(name: &str, table: &Table) -> Artifact {
        Artifact { name: name.into(), bytes: table.render().into_bytes() }
    }
}

/// A CSV table with a fixed header. Cells are plain numbers and words, so
/// no quoting is needed.
#[derive(Clone, Debug)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub tilecocycle: String,
    pub manifest_schema: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub sampler_seed: Option<u64>,
    pub workers: usize,
    pub versions: Versions,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputEntry>,
}

pub const MANIFEST_SCHEMA: u32 = 1;

pub fn versions() -> Versions {
    Versions { tilecocycle: env!("CARGO_PKG_VERSION").into(), manifest_schema: MANIFEST_SCHEMA }
}

impl Manifest {
    /// Checks the manifest's own invariants: a 64-digit hash, and one entry
    /// per output whose digest matches the file on disk.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        let hex = |s: &str| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit());
        if !hex(&self.config_sha256) {
            return Err("config hash is not a sha256 digest".into());
        }
        if self.versions.manifest_schema != MANIFEST_SCHEMA || !matches!(self.status.as_str(), "ok" | "error") {
            return Err("unknown schema version or status".into());
        }
        if self.workers == 0 || !(self.wall_time_seconds >= 0.0) {
            return Err("workers and wall time must be positive".into());
        }
        for o in &self.outputs {
            let bytes = fs::read(dir.join(&o.file)).map_err(|e| format!("{}: {e}", o.file))?;
            if bytes.len() != o.bytes || sha256_hex(&bytes) != o.sha256 {
                return Err(format!("{} does not match its manifest entry", o.file));
            }
        }
        Ok(())
    }
}

/// Formats a float so that it reads back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.csv", b"x\n1\n").unwrap();
        let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert_eq!(names, vec!["a.csv".to_string()]);
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"x\n1\n");
    }

    #[test]
    fn table_renders_rows() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![num(0.5), "x".into()]);
        assert_eq!(t.render(), "a,b\n0.5,x\n");
    }
}
