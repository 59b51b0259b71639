//! Output directory: atomic writes, summary tables and the checksum manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A flat result row: ordered `(column, value)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Row(pub serde_json::Map<String, serde_json::Value>);

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&serde_json::Value> {
        self.0.get(key)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(serde_json::Value::as_f64)
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        self.0.get(key).and_then(serde_json::Value::as_bool)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }
}

fn cell(v: Option<&serde_json::Value>) -> String {
    match v {
        None | Some(serde_json::Value::Null) => String::new(),
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

/// Column order: `leading` first, then every other key in first-seen order.
pub fn columns(rows: &[Row], leading: &[&str]) -> Vec<String> {
    let mut cols: Vec<String> = leading.iter().map(|s| s.to_string()).collect();
    for r in rows {
        for k in r.keys() {
            if !cols.contains(k) {
                cols.push(k.clone());
            }
        }
    }
    cols
}

/// CSV text with a `# schema=N` line before the header.
pub fn rows_to_csv(rows: &[Row], cols: &[String]) -> io::Result<String> {
    let mut buf = format!("# schema={SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(cols).map_err(io::Error::other)?;
        for r in rows {
            w.write_record(cols.iter().map(|c| cell(r.get(c)))).map_err(io::Error::other)?;
        }
        w.flush()?;
    }
    String::from_utf8(buf).map_err(io::Error::other)
}

/// Parse a table written by [`rows_to_csv`] back into `(header, records)`.
pub fn read_csv(text: &str) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let body = text.strip_prefix(&format!("# schema={SCHEMA_VERSION}\n")).ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidData, format!("missing or unsupported schema line (want {SCHEMA_VERSION})"))
    })?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().map_err(io::Error::other)?.iter().map(String::from).collect();
    let mut records = Vec::new();
    for rec in r.records() {
        records.push(rec.map_err(io::Error::other)?.iter().map(String::from).collect());
    }
    Ok((header, records))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            walk(root, &path, out)?;
        } else if path.strip_prefix(root).ok() != Some(Path::new(MANIFEST_NAME)) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash every file under `root` (except the manifest itself), sorted by path.
pub fn build_manifest(root: &Path) -> io::Result<Manifest> {
    let mut paths = Vec::new();
    walk(root, root, &mut paths)?;
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = fs::read(&p)?;
        let rel = p.strip_prefix(root).expect("under root");
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        files.push(ManifestEntry { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest { schema: SCHEMA_VERSION, files })
}

pub fn write_manifest(root: &Path) -> io::Result<Manifest> {
    let m = build_manifest(root)?;
    write_json(&root.join(MANIFEST_NAME), &m)?;
    Ok(m)
}

/// Paths whose current contents differ from the manifest.
pub fn verify_manifest(root: &Path) -> io::Result<Vec<String>> {
    let text = fs::read_to_string(root.join(MANIFEST_NAME))?;
    let m: Manifest = serde_json::from_str(&text).map_err(io::Error::other)?;
    let mut bad = Vec::new();
    for e in &m.files {
        match fs::read(root.join(&e.path)) {
            Ok(b) if sha256_hex(&b) == e.sha256 && b.len() as u64 == e.bytes => {}
            _ => bad.push(e.path.clone()),
        }
    }
    Ok(bad)
}
