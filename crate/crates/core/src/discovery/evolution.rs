//! Novelty-search evolution over the discretized controller space.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{novelty, Archive, ArchiveEntry, ArchiveWriter};
use crate::controller::heuristic::{heuristic_score, BoundaryConvention, Thresholds};
use crate::controller::{sample_discretized, snap_to_grid, Controller, SensorAngle, SensorKind, SENSOR_ANGLES};
use crate::error::{Error, Result};
use crate::pipeline::{derive_seed, BehaviorMapping, RolloutSettings};
use crate::render::pgm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population: usize,
    pub generations: usize,
    pub novelty_k: usize,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    /// Per-gene probability of taking the second parent's value.
    pub crossover_rate: f64,
    /// Fraction of the ranked population kept as parents.
    pub parent_fraction: f64,
    pub filter: bool,
    /// Offspring redraws before a filtered child is admitted anyway.
    pub filter_retries: usize,
    pub sensors: SensorKind,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population: 100,
            generations: 100,
            novelty_k: 15,
            mutation_rate: 0.1,
            mutation_sigma: 0.1,
            crossover_rate: 0.5,
            parent_fraction: 0.5,
            filter: true,
            filter_retries: 100,
            sensors: SensorKind::Single,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.generations == 0 {
            return Err(Error::contract("population and generations must be positive"));
        }
        if self.novelty_k == 0 {
            return Err(Error::contract("novelty_k must be at least 1"));
        }
        for (name, p) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::contract(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.parent_fraction > 0.0 && self.parent_fraction <= 1.0) {
            return Err(Error::contract("parent_fraction must lie in (0, 1]"));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::contract("mutation_sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Everything a search needs besides its configuration.
pub struct SearchContext<'a> {
    pub settings: RolloutSettings,
    pub mapping: &'a dyn BehaviorMapping,
    pub thresholds: Thresholds,
    pub convention: BoundaryConvention,
    /// Output directory for `archive.jsonl` and `images/`; nothing is
    /// written when absent.
    pub out_dir: Option<PathBuf>,
}

impl SearchContext<'_> {
    fn passes(&self, c: &Controller) -> bool {
        heuristic_score(c, &self.thresholds, self.convention).passes
    }

    fn image_dir(&self) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join("images"))
    }
}

pub fn image_id(generation: usize, index: usize) -> String {
    format!("g{generation:04}-i{index:04}")
}

/// Result of one generation.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub entries: Vec<ArchiveEntry>,
    /// Novelty of each evaluated member against the pre-generation archive.
    pub novelty: Vec<f64>,
    /// Indices of the members chosen as parents, most novel first.
    pub parents: Vec<usize>,
    pub next: Vec<Controller>,
}

/// Evaluates `pop`, scores it against the archive as it was before this
/// generation, appends every member, and breeds the next population.
pub fn evolve_generation(
    pop: &[Controller],
    archive: &mut Archive,
    generation: usize,
    cfg: &EvolutionConfig,
    ctx: &SearchContext<'_>,
) -> Result<GenerationOutcome> {
    if pop.is_empty() {
        return Err(Error::contract("empty population"));
    }
    let image_dir = ctx.image_dir();
    let entries: Vec<ArchiveEntry> = pop
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let seed = derive_seed(cfg.seed, generation as u64, i as u64);
            let (traj, img) = ctx.settings.evaluate(c, seed)?;
            let behavior_vector = ctx.mapping.embed(&traj, &img)?;
            let id = image_id(generation, i);
            if let Some(dir) = &image_dir {
                pgm::write(&dir.join(format!("{id}.pgm")), &img)?;
            }
            Ok(ArchiveEntry {
                generation,
                controller: c.clone(),
                behavior_vector,
                image_id: id,
                seed,
            })
        })
        .collect::<Result<_>>()?;

    let prior = archive.vectors();
    let scores: Vec<f64> = entries
        .iter()
        .map(|e| novelty(&e.behavior_vector.values, &prior, cfg.novelty_k))
        .collect();
    drop(prior);
    for e in &entries {
        archive.push(e.clone())?;
    }

    // stable sort keeps index order among ties
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let keep = ((pop.len() as f64 * cfg.parent_fraction).ceil() as usize).clamp(1, pop.len());
    let parents: Vec<usize> = order[..keep].to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, generation as u64, u64::MAX));
    let parent_set: Vec<&Controller> = parents.iter().map(|&i| &pop[i]).collect();
    let next = (0..cfg.population)
        .map(|_| breed(&parent_set, cfg, ctx, &mut rng))
        .collect::<Result<_>>()?;

    Ok(GenerationOutcome {
        entries,
        novelty: scores,
        parents,
        next,
    })
}

fn breed(parents: &[&Controller], cfg: &EvolutionConfig, ctx: &SearchContext<'_>, rng: &mut ChaCha8Rng) -> Result<Controller> {
    let mut child = offspring(parents, cfg, rng)?;
    if cfg.filter {
        for _ in 0..cfg.filter_retries {
            if ctx.passes(&child) {
                break;
            }
            child = offspring(parents, cfg, rng)?;
        }
    }
    Ok(child)
}

/// Uniform crossover of two random parents, then per-gene Gaussian mutation
/// snapped back onto the 0.1 grid. The sensor angle mutates by one step.
pub fn offspring<R: Rng + ?Sized>(parents: &[&Controller], cfg: &EvolutionConfig, rng: &mut R) -> Result<Controller> {
    let a = parents[rng.random_range(0..parents.len())];
    let b = parents[rng.random_range(0..parents.len())];
    let normal = Normal::new(0.0, cfg.mutation_sigma).map_err(|e| Error::contract(e.to_string()))?;
    let mut v: Vec<f64> = a
        .velocities()
        .iter()
        .zip(b.velocities())
        .map(|(&x, &y)| if rng.random_bool(cfg.crossover_rate) { y } else { x })
        .collect();
    for g in &mut v {
        if rng.random_bool(cfg.mutation_rate) {
            *g += normal.sample(rng);
        }
        *g = snap_to_grid(*g);
    }
    let angle = match (a.sensor_angle(), b.sensor_angle()) {
        (Some(x), Some(y)) => {
            let pick = if rng.random_bool(cfg.crossover_rate) { y } else { x };
            Some(if rng.random_bool(cfg.mutation_rate) {
                adjacent_angle(pick, rng)
            } else {
                pick
            })
        }
        (None, None) => None,
        _ => return Err(Error::contract("parents have different sensor counts")),
    };
    Controller::new(v, angle)
}

/// One step up or down the discrete angle list; the ends step inward.
fn adjacent_angle<R: Rng + ?Sized>(a: SensorAngle, rng: &mut R) -> SensorAngle {
    let i = a.index() as usize;
    let last = SENSOR_ANGLES.len() - 1;
    let j = match i {
        0 => 1,
        _ if i == last => last - 1,
        _ if rng.random_bool(0.5) => i - 1,
        _ => i + 1,
    };
    SensorAngle::new(j as u8).expect("index in range")
}

/// Uniform draws from the discretized space, redrawn until they pass the
/// filter when filtering is on.
pub fn initial_population(cfg: &EvolutionConfig, ctx: &SearchContext<'_>) -> Vec<Controller> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, 0));
    (0..cfg.population)
        .map(|_| loop {
            let c = sample_discretized(cfg.sensors, &mut rng);
            if !cfg.filter || ctx.passes(&c) {
                break c;
            }
        })
        .collect()
}

/// Runs `cfg.generations` generations. With an output directory, each
/// generation is appended to `archive.jsonl` as soon as it is evaluated.
pub fn run_novelty_search(cfg: &EvolutionConfig, ctx: &SearchContext<'_>) -> Result<Archive> {
    cfg.validate()?;
    let mut writer = match &ctx.out_dir {
        Some(dir) => {
            let images = dir.join("images");
            fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
            Some(ArchiveWriter::create(&archive_path(dir))?)
        }
        None => None,
    };
    let mut archive = Archive::new();
    let mut pop = initial_population(cfg, ctx);
    for generation in 0..cfg.generations {
        let out = evolve_generation(&pop, &mut archive, generation, cfg, ctx)?;
        if let Some(w) = writer.as_mut() {
            w.append(&out.entries)?;
        }
        let finite: Vec<f64> = out.novelty.iter().copied().filter(|x| x.is_finite()).collect();
        let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
        log::info!(
            "generation {generation}: archive {} entries, mean novelty {mean:.4}",
            archive.len()
        );
        pop = out.next;
    }
    Ok(archive)
}

pub fn archive_path(dir: &Path) -> PathBuf {
    dir.join("archive.jsonl")
}
