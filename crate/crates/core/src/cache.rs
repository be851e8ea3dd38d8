//! On-disk store of validated code, one JSON file per spec hash.
//!
//! A record lives at `<root>/<spec_hash>` and is written to a temporary file
//! in the same directory, synced, then renamed into place, so readers only
//! ever observe complete records. Files that fail to parse are renamed to
//! `<spec_hash>.corrupt` and treated as absent.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::spec::SpecHash;

pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const CACHE_DIR_ENV: &str = "PYTHONESS_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".pythoness_cache";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationSummary {
    /// Passed checks by kind, e.g. `{"ASSERTION": 4, "COMPILE": 1}`.
    pub passed: BTreeMap<String, u32>,
    pub fuzz_seed: u64,
    pub fuzz_samples: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub format_version: u32,
    pub spec_hash: SpecHash,
    pub function_name: String,
    pub source_text: String,
    pub backend_id: String,
    #[serde(serialize_with = "write_time", deserialize_with = "read_time")]
    pub created_at: DateTime<Utc>,
    pub attempts_used: u32,
    pub validation_summary: ValidationSummary,
}

fn write_time<S: Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

fn read_time<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
    let s = String::deserialize(d)?;
    DateTime::parse_from_rfc3339(&s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(serde::de::Error::custom)
}

impl CacheRecord {
    pub fn new(
        spec_hash: SpecHash,
        function_name: impl Into<String>,
        source_text: impl Into<String>,
        backend_id: impl Into<String>,
        attempts_used: u32,
        validation_summary: ValidationSummary,
    ) -> Self {
        CacheRecord {
            format_version: CACHE_FORMAT_VERSION,
            spec_hash,
            function_name: function_name.into(),
            source_text: source_text.into(),
            backend_id: backend_id.into(),
            created_at: Utc::now(),
            attempts_used,
            validation_summary,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.source_text.is_empty() {
            return Err("record has empty source_text".into());
        }
        if self.format_version != CACHE_FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", self.format_version));
        }
        Ok(())
    }

    /// The exact bytes stored on disk.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("records serialize");
        out.push(b'\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CacheEntry {
    pub spec_hash: SpecHash,
    pub function_name: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    /// Explicit root, else `$PYTHONESS_CACHE_DIR`, else `.pythoness_cache`
    /// under the working directory.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        let root = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        Cache::new(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, hash: &SpecHash) -> PathBuf {
        self.root.join(hash.as_str())
    }

    pub fn get(&self, hash: &SpecHash) -> Result<Option<CacheRecord>> {
        let path = self.path_for(hash);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::storage(&path, e)),
        };
        Ok(self.decode(&path, hash, &bytes))
    }

    fn decode(&self, path: &Path, hash: &SpecHash, bytes: &[u8]) -> Option<CacheRecord> {
        let version = serde_json::from_slice::<serde_json::Value>(bytes)
            .ok()
            .and_then(|v| v.get("format_version").and_then(|v| v.as_u64()));
        if let Some(v) = version {
            if v != CACHE_FORMAT_VERSION as u64 {
                log::info!("ignoring cache record {} with format_version {v}", path.display());
                return None;
            }
        }
        let parsed = serde_json::from_slice::<CacheRecord>(bytes)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                r.check()?;
                if &r.spec_hash != hash {
                    return Err(format!("record claims hash {}", r.spec_hash));
                }
                Ok(r)
            });
        match parsed {
            Ok(r) => Some(r),
            Err(why) => {
                self.quarantine(path, &why);
                None
            }
        }
    }

    fn quarantine(&self, path: &Path, why: &str) {
        let target = path.with_extension("corrupt");
        log::warn!(
            "cache record {} is unreadable ({why}); moving it to {}",
            path.display(),
            target.display()
        );
        if let Err(e) = std::fs::rename(path, &target) {
            log::warn!("could not quarantine {}: {e}", path.display());
        }
    }

    pub fn put(&self, record: &CacheRecord) -> Result<()> {
        record.check().map_err(Error::Internal)?;
        std::fs::create_dir_all(&self.root).map_err(|e| Error::storage(&self.root, e))?;
        let target = self.path_for(&record.spec_hash);
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(&self.root)
            .map_err(|e| Error::storage(&self.root, e))?;
        tmp.write_all(&record.to_bytes())
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| Error::storage(tmp.path(), e))?;
        tmp.persist(&target).map_err(|e| Error::storage(&target, e.error))?;
        Ok(())
    }

    /// Every readable record, newest first.
    pub fn records(&self) -> Result<Vec<CacheRecord>> {
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
            Err(e) => return Err(Error::storage(&self.root, e)),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::storage(&self.root, e))?;
            let name = entry.file_name();
            let Some(hash) = name.to_str().and_then(SpecHash::parse) else {
                continue;
            };
            if let Some(r) = self.get(&hash)? {
                out.push(r);
            }
        }
        out.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.spec_hash.cmp(&b.spec_hash))
        });
        Ok(out)
    }

    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        Ok(self
            .records()?
            .into_iter()
            .map(|r| CacheEntry {
                spec_hash: r.spec_hash,
                function_name: r.function_name,
                created_at: r.created_at,
            })
            .collect())
    }

    /// Removes records, optionally only those for `function`. Returns the count removed.
    pub fn clear(&self, function: Option<&str>) -> Result<usize> {
        let mut removed = 0;
        for r in self.records()? {
            if function.is_some_and(|f| f != r.function_name) {
                continue;
            }
            let path = self.path_for(&r.spec_hash);
            match std::fs::remove_file(&path) {
                Ok(()) => removed += 1,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::storage(&path, e)),
            }
        }
        Ok(removed)
    }
}
