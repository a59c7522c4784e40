//! Dataset manifests (one JSON record per line) and dataset building.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::heuristic::{heuristic_score, BoundaryConvention, Thresholds};
use crate::controller::{sample_discretized, Controller, SensorKind};
use crate::error::{Error, Result};
use crate::pipeline::{derive_seed, RolloutSettings};
use crate::render::{pgm, TrajectoryImage};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub controller: Controller,
    pub capability: SensorKind,
    pub seed: u64,
    /// Image path relative to the manifest's directory.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::contract(format!("duplicate manifest id {:?}", r.id)));
            }
            if r.controller.kind() != r.capability {
                return Err(Error::contract(format!(
                    "record {:?}: controller does not match capability {}",
                    r.id, r.capability
                )));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::format("manifest", e))?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let bytes = self.to_jsonl()?;
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::format("manifest", format!("line {}: {e}", n + 1)))?,
            );
        }
        let m = Manifest { records };
        m.validate()?;
        Ok(m)
    }

    /// Loads every image, resolving paths against `dir`.
    pub fn load_images(&self, dir: &Path) -> Result<Vec<TrajectoryImage>> {
        self.records
            .iter()
            .map(|r| Ok(pgm::read(&dir.join(&r.image))?.with_id(r.id.clone())))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub count: usize,
    pub sensors: SensorKind,
    pub seed: u64,
    pub filter: bool,
    pub thresholds: Thresholds,
    pub convention: BoundaryConvention,
    pub settings: RolloutSettings,
}

/// Samples `count` discretized controllers (redrawing filtered ones when
/// the filter is on), simulates and renders each, and writes
/// `images/{id}.pgm` plus the manifest under `out_dir`.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest> {
    if spec.count == 0 {
        return Err(Error::contract("dataset count must be at least 1"));
    }
    let images = out_dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let controllers: Vec<Controller> = (0..spec.count)
        .map(|_| loop {
            let c = sample_discretized(spec.sensors, &mut rng);
            if !spec.filter || heuristic_score(&c, &spec.thresholds, spec.convention).passes {
                break c;
            }
        })
        .collect();

    let records: Vec<ManifestRecord> = controllers
        .into_par_iter()
        .enumerate()
        .map(|(i, controller)| {
            let id = format!("{i:06}");
            let seed = derive_seed(spec.seed, 1, i as u64);
            let (_, img) = spec.settings.evaluate(&controller, seed)?;
            let rel: PathBuf = ["images", &format!("{id}.pgm")].iter().collect();
            pgm::write(&out_dir.join(&rel), &img)?;
            Ok(ManifestRecord {
                id,
                capability: controller.kind(),
                controller,
                seed,
                image: rel.to_string_lossy().into_owned(),
                label: None,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest { records };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(count: usize, filter: bool, seed: u64) -> DatasetSpec {
        DatasetSpec {
            count,
            sensors: SensorKind::Single,
            seed,
            filter,
            thresholds: Thresholds::default(),
            convention: BoundaryConvention::Strict,
            settings: RolloutSettings {
                horizon: 160,
                ..RolloutSettings::default()
            },
        }
    }

    #[test]
    fn filtered_dataset_only_holds_passing_controllers() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(&small(10, true, 4), dir.path()).unwrap();
        assert_eq!(m.records.len(), 10);
        for r in &m.records {
            assert!(heuristic_score(&r.controller, &Thresholds::default(), BoundaryConvention::Strict).passes);
        }
        let images = m.load_images(dir.path()).unwrap();
        assert_eq!(images.len(), 10);
        assert_eq!(Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn same_seed_gives_identical_manifest_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        build_dataset(&small(4, false, 9), a.path()).unwrap();
        build_dataset(&small(4, false, 9), b.path()).unwrap();
        let read = |d: &Path| fs::read(d.join(MANIFEST_FILE)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        let img = |d: &Path| fs::read(d.join("images/000003.pgm")).unwrap();
        assert_eq!(img(a.path()), img(b.path()));
    }

    #[test]
    fn zero_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_dataset(&small(0, true, 0), dir.path()).is_err());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let r = ManifestRecord {
            id: "a".into(),
            controller: Controller::single([0.0; 4]).unwrap(),
            capability: SensorKind::Single,
            seed: 0,
            image: "images/a.pgm".into(),
            label: Some("milling".into()),
        };
        let m = Manifest {
            records: vec![r.clone(), r],
        };
        assert!(m.validate().is_err());
    }
}
