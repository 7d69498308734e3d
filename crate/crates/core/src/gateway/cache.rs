// SPDX-License-Identifier: Apache-2.0

//! Response cache: an in-memory map optionally backed by an append-only
//! JSON Lines file of `{key, value, created_at}` records. A corrupt line is
//! skipped on load without affecting the other records.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CachedValue {
    Text(String),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub value: CachedValue,
    pub created_at: u64,
}

/// SHA-256 over the JSON encoding of `(backend tag, model, payload)`.
pub fn cache_key(backend_tag: &str, model: &str, payload: &serde_json::Value) -> String {
    let material = serde_json::json!([backend_tag, model, payload]).to_string();
    let digest = Sha256::digest(material.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, CachedValue>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
    skipped_records: usize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut entries = HashMap::new();
        let mut skipped = 0;
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.value);
                    }
                    Err(_) => skipped += 1,
                }
            }
        }
        if skipped > 0 {
            log::warn!("cache {}: skipped {skipped} unreadable record(s)", path.display());
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
            skipped_records: skipped,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn skipped_records(&self) -> usize {
        self.skipped_records
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CachedValue> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn put(&self, key: String, value: CachedValue) -> std::io::Result<()> {
        if let Some(file) = &self.file {
            let entry = CacheEntry {
                key: key.clone(),
                value: value.clone(),
                created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            };
            let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
            line.push('\n');
            let mut f = file.lock().expect("cache file lock poisoned");
            // One write per record keeps lines whole for concurrent readers.
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries.write().expect("cache lock poisoned").insert(key, value);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_component() {
        let p = serde_json::json!({"x": 1});
        let k = cache_key("stub", "m", &p);
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("http", "m", &p));
        assert_ne!(k, cache_key("stub", "n", &p));
        assert_ne!(k, cache_key("stub", "m", &serde_json::json!({"x": 2})));
        assert_eq!(k, cache_key("stub", "m", &p));
    }

    #[test]
    fn persistent_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let v = vec![0.1 + 0.2, -1.0 / 3.0, 1e-300, std::f64::consts::PI];
        {
            let c = ResponseCache::open(&path).unwrap();
            c.put("k1".into(), CachedValue::Vector(v.clone())).unwrap();
            c.put("k2".into(), CachedValue::Text("hello".into())).unwrap();
        }
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get("k1"), Some(CachedValue::Vector(v)));
        assert_eq!(c.get("k2"), Some(CachedValue::Text("hello".into())));
    }

    #[test]
    fn corrupt_record_only_loses_itself() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let c = ResponseCache::open(&path).unwrap();
            c.put("a".into(), CachedValue::Text("one".into())).unwrap();
        }
        {
            let mut f = OpenOptions::new().append(true).open(&path).unwrap();
            writeln!(f, "{{\"key\":\"b\",\"val").unwrap();
        }
        {
            let c = ResponseCache::open(&path).unwrap();
            c.put("c".into(), CachedValue::Text("three".into())).unwrap();
        }
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.skipped_records(), 1);
        assert_eq!(c.get("a"), Some(CachedValue::Text("one".into())));
        assert_eq!(c.get("b"), None);
        assert_eq!(c.get("c"), Some(CachedValue::Text("three".into())));
    }
}
