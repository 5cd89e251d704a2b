//! Response cache keyed by (call kind, backend identity, input fingerprint).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::request::CallKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CachedValue {
    Text(String),
    Vector(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub kind: CallKind,
    pub backend: String,
    pub fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    kind: CallKind,
    backend: String,
    fingerprint: String,
    value: CachedValue,
}

/// In-memory response cache with optional append-only persistence.
///
/// Reads are concurrent; inserts and file appends are serialized.
#[derive(Default)]
pub struct ResponseCache {
    map: RwLock<HashMap<CacheKey, CachedValue>>,
    sink: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a persistent cache file, loading earlier entries.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let mut map = HashMap::new();
        let mut needs_newline = false;
        if path.exists() {
            let content = std::fs::read_to_string(path)?;
            needs_newline = !content.is_empty() && !content.ends_with('\n');
            for line in content.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from an interrupted run is skipped.
                match serde_json::from_str::<CacheRecord>(line) {
                    Ok(rec) => {
                        map.insert(
                            CacheKey {
                                kind: rec.kind,
                                backend: rec.backend,
                                fingerprint: rec.fingerprint,
                            },
                            rec.value,
                        );
                    }
                    Err(err) => log::warn!("skipping unreadable cache line in {}: {err}", path.display()),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if needs_newline {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            map: RwLock::new(map),
            sink: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<CachedValue> {
        self.map.read().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, value: CachedValue) {
        let mut map = self.map.write();
        if map.contains_key(&key) {
            return;
        }
        if let Some(sink) = &self.sink {
            let rec = CacheRecord {
                kind: key.kind,
                backend: key.backend.clone(),
                fingerprint: key.fingerprint.clone(),
                value: value.clone(),
            };
            let mut sink = sink.lock();
            let written = serde_json::to_writer(&mut *sink, &rec)
                .map_err(std::io::Error::from)
                .and_then(|_| sink.write_all(b"\n"))
                .and_then(|_| sink.flush());
            if let Err(err) = written {
                log::warn!("cache append failed: {err}");
            }
        }
        map.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(fp: &str) -> CacheKey {
        CacheKey {
            kind: CallKind::Caption,
            backend: "mock".into(),
            fingerprint: fp.into(),
        }
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.insert(key("a"), CachedValue::Text("two dogs".into()));
            cache.insert(key("b"), CachedValue::Vector(vec![0.6, 0.8]));
        }
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get(&key("a")), Some(CachedValue::Text("two dogs".into())));
        assert_eq!(cache.get(&key("b")), Some(CachedValue::Vector(vec![0.6, 0.8])));
    }

    #[test]
    fn torn_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.insert(key("a"), CachedValue::Text("x".into()));
        }
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap()
            .write_all(b"{\"kind\":\"capt")
            .unwrap();
        {
            let cache = ResponseCache::open(&path).unwrap();
            assert_eq!(cache.len(), 1);
            cache.insert(key("c"), CachedValue::Text("y".into()));
        }
        assert_eq!(ResponseCache::open(&path).unwrap().len(), 2);
    }
}
