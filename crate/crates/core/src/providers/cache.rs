use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ProviderError;

/// Request/response store keyed by a content hash of the request.
///
/// Always keeps an in-memory copy; with a directory configured each entry is
/// also written to `<dir>/<key>.json` through an atomic rename.
#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
    hits: AtomicU64,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    request: Value,
    response: String,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| ProviderError::Cache(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: Some(dir), ..Self::default() })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn entry_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(hit) = self.memory.lock().unwrap().get(key).cloned() {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Some(hit);
        }
        let path = self.entry_path(key)?;
        let entry: Entry = serde_json::from_slice(&std::fs::read(path).ok()?).ok()?;
        self.memory.lock().unwrap().insert(key.to_string(), entry.response.clone());
        self.hits.fetch_add(1, Ordering::Relaxed);
        Some(entry.response)
    }

    pub fn put(&self, key: &str, request: Value, response: &str) -> Result<(), ProviderError> {
        self.memory.lock().unwrap().insert(key.to_string(), response.to_string());
        let Some(path) = self.entry_path(key) else {
            return Ok(());
        };
        let body = serde_json::to_vec_pretty(&Entry { request, response: response.to_string() })
            .map_err(|e| ProviderError::Cache(e.to_string()))?;
        let tmp = path.with_extension(format!(
            "tmp{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, body)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| ProviderError::Cache(format!("cannot write {}: {e}", path.display())))
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_entries_survive_a_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::on_disk(dir.path()).unwrap();
        cache.put("k1", serde_json::json!({"prompt": "p"}), "resp \u{e9}").unwrap();
        let fresh = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(fresh.get("k1").as_deref(), Some("resp \u{e9}"));
        assert_eq!(fresh.get("missing"), None);
        let stored: Value = serde_json::from_slice(&std::fs::read(dir.path().join("k1.json")).unwrap()).unwrap();
        assert_eq!(stored["request"]["prompt"], "p");
    }
}
