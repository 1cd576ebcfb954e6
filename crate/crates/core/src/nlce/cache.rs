use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cutoff, Spacing};

use super::classes::HamiltonianClass;
use super::cluster::{Cluster, ClusterKey};
use super::expansion::ClusterTable;

const FORMAT: &str = "quench-cluster-table";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    max_order: usize,
    spacing: Spacing,
    cutoff: Cutoff,
    clusters: Vec<ClusterKey>,
    classes: Vec<HamiltonianClass>,
}

impl ClusterTable {
    pub fn to_cache_json(&self) -> Result<String> {
        let (clusters, classes) = self.cache_parts();
        let file = CacheFile {
            format: FORMAT.into(),
            version: CACHE_VERSION,
            max_order: self.max_order(),
            spacing: *self.spacing(),
            cutoff: *self.cutoff(),
            clusters,
            classes: classes.to_vec(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Restores a table written by [`ClusterTable::to_cache_json`]. Fails with a
    /// parse error when the version or any key parameter differs.
    pub fn from_cache_json(text: &str, max_order: usize, spacing: &Spacing, cutoff: &Cutoff) -> Result<Self> {
        let file: CacheFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("cluster cache: {e}")))?;
        if file.format != FORMAT || file.version != CACHE_VERSION {
            return Err(Error::Parse(format!("cluster cache has format {} v{}, expected {FORMAT} v{CACHE_VERSION}", file.format, file.version)));
        }
        if file.max_order != max_order || file.cutoff != *cutoff || (file.spacing.anisotropy() - spacing.anisotropy()).abs() > 1e-12 {
            return Err(Error::Parse("cluster cache was built for different parameters".into()));
        }
        let clusters = file.clusters.iter().map(|&k| Cluster::from_key(k)).collect::<Result<Vec<_>>>()?;
        let sorted = clusters.windows(2).all(|w| (w[0].order(), w[0].key()) < (w[1].order(), w[1].key()));
        if !sorted {
            return Err(Error::Parse("cluster cache entries are not in canonical order".into()));
        }
        let table = ClusterTable::assemble(clusters, spacing, cutoff, Some(file.classes))?;
        if table.max_order() != max_order {
            return Err(Error::Parse("cluster cache is truncated".into()));
        }
        Ok(table)
    }

    /// Loads the cache at `path` if it matches, otherwise builds the table and
    /// rewrites the file.
    pub fn load_or_build(path: &Path, max_order: usize, spacing: &Spacing, cutoff: &Cutoff) -> Result<Self> {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(table) = ClusterTable::from_cache_json(&text, max_order, spacing, cutoff) {
                return Ok(table);
            }
        }
        let table = ClusterTable::build(max_order, spacing, cutoff)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, table.to_cache_json()?)?;
        Ok(table)
    }
}

/// File name encoding the cache key.
pub fn cache_file_name(max_order: usize, spacing: &Spacing, cutoff: &Cutoff) -> String {
    let cut = match cutoff {
        Cutoff::NearestNeighbor => "nn".to_string(),
        Cutoff::NextNearestNeighbor => "nnn".to_string(),
        Cutoff::Radius { r_max } => format!("r{r_max}"),
    };
    format!("clusters-v{CACHE_VERSION}-o{max_order}-a{:.6}-{cut}.json", spacing.anisotropy())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let sp = Spacing::anisotropic(0.028).unwrap();
        let table = ClusterTable::build(5, &sp, &Cutoff::NextNearestNeighbor).unwrap();
        let text = table.to_cache_json().unwrap();
        let back = ClusterTable::from_cache_json(&text, 5, &sp, &Cutoff::NextNearestNeighbor).unwrap();
        assert_eq!(back.clusters(), table.clusters());
        assert_eq!(back.classes(), table.classes());
        for c in 0..table.clusters().len() {
            assert_eq!(back.subclusters(c), table.subclusters(c));
        }
        assert!(ClusterTable::from_cache_json(&text, 4, &sp, &Cutoff::NextNearestNeighbor).is_err());
        assert!(ClusterTable::from_cache_json(&text, 5, &Spacing::isotropic(), &Cutoff::NextNearestNeighbor).is_err());
        assert!(ClusterTable::from_cache_json(&text.replace("\"version\":1", "\"version\":9"), 5, &sp, &Cutoff::NextNearestNeighbor).is_err());
    }
}
