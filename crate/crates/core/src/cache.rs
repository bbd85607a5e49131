//! On-disk cache of orbit tables under `<root>/<config hash>/<table>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermo::{PeriodicOrbitTable, TABLE_SCHEMA_VERSION};

pub const CACHE_ENV: &str = "ORBITHERM_CACHE";
pub const DEFAULT_CACHE_DIR: &str = "cache";

#[derive(Serialize, Deserialize)]
struct Entry {
    config_hash: String,
    table: PeriodicOrbitTable,
}

#[derive(Clone, Debug)]
pub struct TableCache {
    dir: PathBuf,
    hash: String,
}

/// Cache root: the explicit flag, then `ORBITHERM_CACHE`, then `./cache`.
pub fn cache_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR)),
    }
}

impl TableCache {
    pub fn new(root: &Path, config_hash: &str) -> Self {
        Self { dir: root.join(config_hash), hash: config_hash.to_string() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }

    /// The cached table when it was written for this hash and still holds
    /// the requested potentials and regions.
    pub fn load(&self, name: &str, potential_ids: &[String], region_ids: &[String]) -> Option<PeriodicOrbitTable> {
        let path = self.path(name);
        let bytes = fs::read(&path).ok()?;
        let entry: Entry = match serde_json::from_slice(&bytes) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                return None;
            }
        };
        let t = entry.table;
        let fresh = entry.config_hash == self.hash
            && t.schema_version == TABLE_SCHEMA_VERSION
            && potential_ids.iter().all(|p| t.has_potential(p))
            && region_ids.iter().all(|r| t.region_ids.contains(r));
        if fresh {
            log::info!("loaded table {name} from {}", path.display());
            Some(t)
        } else {
            log::info!("stale cache entry {}", path.display());
            None
        }
    }

    /// Writes through a temporary file and a rename, so readers never see a
    /// partial table.
    pub fn store(&self, name: &str, table: &PeriodicOrbitTable) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(name);
        let tmp = self.dir.join(format!(".{name}.json.{}.tmp", std::process::id()));
        let entry = Entry { config_hash: self.hash.clone(), table: table.clone() };
        let bytes = serde_json::to_vec(&entry).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}
