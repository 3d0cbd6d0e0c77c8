//! Persistent response cache: an append-only file of JSON records, one per
//! line, keyed by a digest of the exact prompt bytes plus the model name.
//!
//! Identical chromosomes recur constantly across generations, so the cache
//! turns the dominant cost — backend calls — into lookups. The file format
//! is deliberately dumb: appends never rewrite earlier records, duplicate
//! digests resolve to the last entry, and a trailing line truncated by a
//! crash is ignored on load rather than poisoning the whole file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache record at {path}:{line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Hex SHA-256 of the prompt bytes, a NUL separator, and the model name.
///
/// The separator keeps (prompt, model) pairs unambiguous; prompts never
/// contain NUL.
pub fn prompt_digest(prompt: &str, model: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update([0u8]);
    hasher.update(model.as_bytes());
    hex::encode(hasher.finalize())
}

/// One cached backend exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub model: String,
    /// Raw response text; empty for fallbacks that never got a response.
    pub response: String,
    /// The raw parsed value (or the median fallback when `fallback`).
    pub estimate: f64,
    pub fallback: bool,
    /// ISO-8601 UTC creation time; informational only.
    pub timestamp: String,
}

impl CacheEntry {
    /// An entry stamped with the current UTC time.
    pub fn now(digest: String, model: String, response: String, estimate: f64, fallback: bool) -> Self {
        CacheEntry {
            digest,
            model,
            response,
            estimate,
            fallback,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

/// Reads a cache file in record order, duplicates included.
///
/// A final line that fails to parse is treated as a torn append and
/// skipped; a malformed record anywhere else is an error.
pub fn read_entries(path: &Path) -> Result<Vec<CacheEntry>, CacheError> {
    let io_err = |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    let mut entries = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(line) {
            Ok(entry) => entries.push(entry),
            Err(source) if idx + 1 == lines.len() => {
                let _ = source; // torn trailing append: ignore
            }
            Err(source) => {
                return Err(CacheError::Corrupt {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    source,
                })
            }
        }
    }
    Ok(entries)
}

/// Thread-safe digest-keyed cache with optional file persistence.
///
/// Reads take a shared lock on the in-memory map; writes insert under the
/// exclusive lock and append one JSON line under a separate file mutex, so
/// concurrent callers never interleave partial lines.
#[derive(Debug)]
pub struct Cache {
    entries: RwLock<HashMap<String, CacheEntry>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl Cache {
    /// A cache that lives and dies with the process.
    pub fn in_memory() -> Self {
        Cache {
            entries: RwLock::new(HashMap::new()),
            file: None,
            path: None,
        }
    }

    /// Opens (creating if absent) a persistent cache at `path`, loading any
    /// existing records with last-entry-wins on duplicate digests.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let mut map = HashMap::new();
        if path.exists() {
            for entry in read_entries(path)? {
                map.insert(entry.digest.clone(), entry);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| CacheError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Cache {
            entries: RwLock::new(map),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<CacheEntry> {
        self.entries
            .read()
            .expect("cache lock not poisoned")
            .get(digest)
            .cloned()
    }

    /// Inserts (or overwrites) an entry and appends it to the backing file.
    pub fn put(&self, entry: CacheEntry) -> Result<(), CacheError> {
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&entry).expect("cache entries serialize");
            let mut guard = file.lock().expect("cache file lock not poisoned");
            writeln!(guard, "{line}").map_err(|source| CacheError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        self.entries
            .write()
            .expect("cache lock not poisoned")
            .insert(entry.digest.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock not poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All distinct entries, sorted by digest for stable output.
    pub fn snapshot(&self) -> Vec<CacheEntry> {
        let mut entries: Vec<CacheEntry> = self
            .entries
            .read()
            .expect("cache lock not poisoned")
            .values()
            .cloned()
            .collect();
        entries.sort_by(|a, b| a.digest.cmp(&b.digest));
        entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(digest: &str, estimate: f64) -> CacheEntry {
        CacheEntry {
            digest: digest.to_owned(),
            model: "m".to_owned(),
            response: format!("{estimate}"),
            estimate,
            fallback: false,
            timestamp: "2026-08-21T00:00:00.000Z".to_owned(),
        }
    }

    #[test]
    fn digest_separates_prompt_from_model() {
        let a = prompt_digest("prompt", "model");
        let b = prompt_digest("promptmodel", "");
        let c = prompt_digest("prompt", "model");
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 64);
        assert!(a.bytes().all(|b| b.is_ascii_hexdigit()));
    }

    #[test]
    fn in_memory_round_trip() {
        let cache = Cache::in_memory();
        assert!(cache.is_empty());
        cache.put(entry("d1", 3.0)).unwrap();
        assert_eq!(cache.get("d1").unwrap().estimate, 3.0);
        assert!(cache.get("d2").is_none());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn persistent_cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.jsonl");
        {
            let cache = Cache::open(&path).unwrap();
            cache.put(entry("d1", 3.0)).unwrap();
            cache.put(entry("d2", 5.0)).unwrap();
        }
        let cache = Cache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("d2").unwrap().estimate, 5.0);
    }

    #[test]
    fn duplicate_digests_resolve_to_last_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.jsonl");
        {
            let cache = Cache::open(&path).unwrap();
            cache.put(entry("d1", 3.0)).unwrap();
            cache.put(entry("d1", 8.0)).unwrap();
        }
        let cache = Cache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.get("d1").unwrap().estimate, 8.0);
        // File order (with both records) is still visible to readers.
        assert_eq!(read_entries(&path).unwrap().len(), 2);
    }

    #[test]
    fn torn_trailing_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.jsonl");
        {
            let cache = Cache::open(&path).unwrap();
            cache.put(entry("d1", 3.0)).unwrap();
        }
        let mut raw = std::fs::read_to_string(&path).unwrap();
        raw.push_str("{\"digest\":\"d2\",\"mod");
        std::fs::write(&path, raw).unwrap();
        let cache = Cache::open(&path).unwrap();
        assert_eq!(cache.len(), 1, "partial append must not block loading");
    }

    #[test]
    fn corrupt_interior_record_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.jsonl");
        let good = serde_json::to_string(&entry("d1", 3.0)).unwrap();
        std::fs::write(&path, format!("not json\n{good}\n")).unwrap();
        let err = Cache::open(&path).unwrap_err();
        assert!(matches!(err, CacheError::Corrupt { line: 1, .. }));
    }

    #[test]
    fn snapshot_is_digest_sorted() {
        let cache = Cache::in_memory();
        cache.put(entry("zz", 1.0)).unwrap();
        cache.put(entry("aa", 2.0)).unwrap();
        let digests: Vec<String> = cache.snapshot().into_iter().map(|e| e.digest).collect();
        assert_eq!(digests, vec!["aa".to_owned(), "zz".to_owned()]);
    }

    #[test]
    fn concurrent_puts_never_tear_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.jsonl");
        let cache = std::sync::Arc::new(Cache::open(&path).unwrap());
        std::thread::scope(|scope| {
            for t in 0..8 {
                let cache = std::sync::Arc::clone(&cache);
                scope.spawn(move || {
                    for i in 0..50 {
                        cache.put(entry(&format!("d-{t}-{i}"), 1.0)).unwrap();
                    }
                });
            }
        });
        let reloaded = Cache::open(&path).unwrap();
        assert_eq!(reloaded.len(), 400);
    }
}
