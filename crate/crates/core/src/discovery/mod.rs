//! Novelty search, the behavior archive and k-medoids taxonomies.

pub mod archive;
pub mod evolution;
pub mod kmedoids;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use archive::{novelty, Archive, ArchiveEntry, ArchiveWriter};
pub use evolution::{
    evolve_generation, initial_population, run_novelty_search, EvolutionConfig, GenerationOutcome,
    SearchContext,
};
pub use kmedoids::{k_medoids, Taxonomy};

use crate::error::{Error, Result};

/// Clusters the archive's behavior vectors.
pub fn archive_taxonomy(archive: &Archive, k: usize) -> Result<Taxonomy> {
    k_medoids(&archive.vectors(), k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidReport {
    pub archive_index: usize,
    pub cluster_size: usize,
    pub entry: ArchiveEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub k: usize,
    pub cost: f64,
    pub medoids: Vec<MedoidReport>,
    pub assignments: Vec<usize>,
}

impl TaxonomyReport {
    pub fn new(archive: &Archive, t: &Taxonomy) -> Self {
        let sizes = t.cluster_sizes();
        TaxonomyReport {
            k: t.k,
            cost: t.cost,
            medoids: t
                .medoids
                .iter()
                .zip(sizes)
                .map(|(&i, cluster_size)| MedoidReport {
                    archive_index: i,
                    cluster_size,
                    entry: archive.entries()[i].clone(),
                })
                .collect(),
            assignments: t.assignments.clone(),
        }
    }

    /// Writes `taxonomy.json` and copies medoid images (when `images` holds
    /// them) into `gallery/`, prefixed by cluster number.
    pub fn write(&self, out_dir: &Path, images: Option<&Path>) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("taxonomy.json");
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::format("taxonomy", e))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        if let Some(src) = images {
            let gallery = out_dir.join("gallery");
            fs::create_dir_all(&gallery).map_err(|e| Error::io(&gallery, e))?;
            for (n, m) in self.medoids.iter().enumerate() {
                let from = src.join(format!("{}.pgm", m.entry.image_id));
                if from.exists() {
                    let to = gallery.join(format!("{n:02}-{}.pgm", m.entry.image_id));
                    fs::copy(&from, &to).map_err(|e| Error::io(&from, e))?;
                }
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format("taxonomy", e))
    }
}
