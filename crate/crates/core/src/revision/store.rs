//! Local artifact store: one JSON record per line, each wrapped in an
//! envelope carrying the schema version and record kind.
//!
//! Layout under the data directory:
//!
//! ```text
//! pages/<title-slug>/revisions/<id>.record
//! pages/<title-slug>/edits/<window-id>.records
//! pages/<title-slug>/<collection>/<id>.record[s]
//! ```

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::EvaluationWindow;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no record stored under {0}")]
    MissingKey(String),
    #[error("corrupt record in {path} at byte offset {offset}: {message}")]
    Corrupt { path: PathBuf, offset: u64, message: String },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// A type that can be persisted. `KIND` is written into every envelope and
/// checked on load.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    kind: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    schema_version: u32,
    kind: String,
    data: T,
}

/// Location of an artifact: page, collection directory and identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArtifactKey {
    pub page: String,
    pub collection: String,
    pub id: String,
}

impl ArtifactKey {
    pub fn new(page: &str, collection: &str, id: impl Into<String>) -> Self {
        Self { page: page.to_string(), collection: collection.to_string(), id: id.into() }
    }

    pub fn revision(page: &str, revision_id: u64) -> Self {
        Self::new(page, "revisions", revision_id.to_string())
    }

    pub fn edits(page: &str, window: &EvaluationWindow) -> Self {
        Self::new(page, "edits", window.id())
    }

    pub fn windowed(page: &str, collection: &str, window: &EvaluationWindow) -> Self {
        Self::new(page, collection, window.id())
    }
}

impl std::fmt::Display for ArtifactKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.page, self.collection, self.id)
    }
}

/// Filesystem-safe page directory name: spaces become underscores, other
/// bytes outside `[A-Za-z0-9_.-]` are percent-encoded.
pub fn title_slug(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    for b in title.trim().bytes() {
        match b {
            b' ' => out.push('_'),
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b'-' => out.push(b as char),
            b'.' if !out.is_empty() => out.push('.'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| StoreError::Io { path: root.clone(), source })?;
        Ok(Self { root, locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, key: &ArtifactKey) -> PathBuf {
        self.root.join("pages").join(title_slug(&key.page)).join(&key.collection)
    }

    pub fn single_path(&self, key: &ArtifactKey) -> PathBuf {
        self.dir(key).join(format!("{}.record", key.id))
    }

    pub fn multi_path(&self, key: &ArtifactKey) -> PathBuf {
        self.dir(key).join(format!("{}.records", key.id))
    }

    fn lock_for(&self, path: &Path) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("store lock table poisoned");
        locks.entry(path.to_path_buf()).or_default().clone()
    }

    pub fn contains(&self, key: &ArtifactKey) -> bool {
        self.single_path(key).exists() || self.multi_path(key).exists()
    }

    pub fn put<T: Record>(&self, key: &ArtifactKey, value: &T) -> Result<(), StoreError> {
        self.write_lines(&self.single_path(key), std::slice::from_ref(value))
    }

    pub fn get<T: Record>(&self, key: &ArtifactKey) -> Result<T, StoreError> {
        let path = self.single_path(key);
        let mut records = self.read_lines::<T>(&path, key)?;
        match records.len() {
            1 => Ok(records.pop().expect("one record")),
            n => Err(StoreError::Corrupt { path, offset: 0, message: format!("expected 1 record, found {n}") }),
        }
    }

    pub fn put_all<T: Record>(&self, key: &ArtifactKey, values: &[T]) -> Result<(), StoreError> {
        self.write_lines(&self.multi_path(key), values)
    }

    pub fn get_all<T: Record>(&self, key: &ArtifactKey) -> Result<Vec<T>, StoreError> {
        self.read_lines(&self.multi_path(key), key)
    }

    /// Appends one record to a multi-record file, creating it if needed.
    pub fn append<T: Record>(&self, key: &ArtifactKey, value: &T) -> Result<(), StoreError> {
        let path = self.multi_path(key);
        let lock = self.lock_for(&path);
        let _guard = lock.lock().expect("store key lock poisoned");
        let io_err = |source| StoreError::Io { path: path.clone(), source };
        fs::create_dir_all(path.parent().expect("record path has parent")).map_err(io_err)?;
        let mut line = encode_record(value).map_err(io_err)?;
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        file.write_all(line.as_bytes()).map_err(io_err)
    }

    fn write_lines<T: Record>(&self, path: &Path, values: &[T]) -> Result<(), StoreError> {
        let lock = self.lock_for(path);
        let _guard = lock.lock().expect("store key lock poisoned");
        let io_err = |source| StoreError::Io { path: path.to_path_buf(), source };
        fs::create_dir_all(path.parent().expect("record path has parent")).map_err(io_err)?;
        let mut buf = String::new();
        for v in values {
            buf.push_str(&encode_record(v).map_err(io_err)?);
            buf.push('\n');
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, buf).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    fn read_lines<T: Record>(&self, path: &Path, key: &ArtifactKey) -> Result<Vec<T>, StoreError> {
        let lock = self.lock_for(path);
        let _guard = lock.lock().expect("store key lock poisoned");
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::MissingKey(key.to_string())),
            Err(source) => return Err(StoreError::Io { path: path.to_path_buf(), source }),
        };
        decode_lines(&text, path)
    }
}

/// One envelope-wrapped record as a single JSON line (without newline).
pub fn encode_record<T: Record>(value: &T) -> io::Result<String> {
    serde_json::to_string(&EnvelopeOut { schema_version: SCHEMA_VERSION, kind: T::KIND, data: value })
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Decodes a line-delimited record file, reporting the byte offset of the
/// first bad line.
pub fn decode_lines<T: Record>(text: &str, path: &Path) -> Result<Vec<T>, StoreError> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if !trimmed.trim().is_empty() {
            let corrupt = |message: String| StoreError::Corrupt { path: path.to_path_buf(), offset, message };
            let env: EnvelopeIn<T> = serde_json::from_str(trimmed).map_err(|e| corrupt(e.to_string()))?;
            if env.kind != T::KIND {
                return Err(corrupt(format!("expected kind {:?}, found {:?}", T::KIND, env.kind)));
            }
            if env.schema_version != SCHEMA_VERSION {
                return Err(corrupt(format!("unsupported schema version {}", env.schema_version)));
            }
            out.push(env.data);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}
