//! Human-in-the-loop labeling: query selection over an image pool, a
//! durable label journal, label-driven triplets and fine-tuning.

pub mod server;
pub mod store;
pub mod triplets;

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{BehaviorClass, ClassChoice, LabelRecord, LabelStore};
pub use triplets::TripletIndex;

use crate::behavior::euclidean;
use crate::error::Error;
use crate::eval::accuracy::network_accuracy;
use crate::nn::train::{train, TrainConfig, TrainReport, Triplet};
use crate::nn::Network;
use crate::render::TrajectoryImage;

#[derive(Debug, Error)]
pub enum HilError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Pending,
    Labeled,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryItem {
    pub query_id: u64,
    pub image_id: String,
    pub status: QueryStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
    pub budget: usize,
}

/// Default label budget: 1% of the pool, at least one image.
pub fn default_budget(pool: usize) -> usize {
    pool.div_ceil(100).max(1)
}

/// One labeling session over a fixed image pool.
#[derive(Debug)]
pub struct Session {
    pool: Vec<String>,
    embeddings: Vec<Vec<f64>>,
    store: LabelStore,
    queries: Vec<QueryItem>,
    queried: HashSet<String>,
    next_query_id: u64,
    rng: ChaCha8Rng,
    budget: usize,
}

impl Session {
    /// `embeddings[i]` is the current embedding of `pool[i]`.
    pub fn new(pool: Vec<String>, embeddings: Vec<Vec<f64>>, store: LabelStore, seed: u64, budget: usize) -> Result<Self, HilError> {
        if pool.len() != embeddings.len() {
            return Err(Error::contract("one embedding per pool image required").into());
        }
        let unique: HashSet<&String> = pool.iter().collect();
        if unique.len() != pool.len() {
            return Err(Error::contract("duplicate image ids in pool").into());
        }
        let next_query_id = store.max_query_id().map_or(1, |q| q + 1);
        Ok(Session {
            pool,
            embeddings,
            store,
            queries: Vec::new(),
            queried: HashSet::new(),
            next_query_id,
            rng: ChaCha8Rng::seed_from_u64(seed),
            budget,
        })
    }

    pub fn store(&self) -> &LabelStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut LabelStore {
        &mut self.store
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.pool.iter().any(|p| p == image_id)
    }

    pub fn set_embeddings(&mut self, embeddings: Vec<Vec<f64>>) -> Result<(), HilError> {
        if embeddings.len() != self.pool.len() {
            return Err(Error::contract("one embedding per pool image required").into());
        }
        self.embeddings = embeddings;
        Ok(())
    }

    pub fn queries(&self) -> &[QueryItem] {
        &self.queries
    }

    pub fn progress(&self) -> Progress {
        let labeled = self.pool.iter().filter(|id| self.store.label_of(id).is_some()).count();
        Progress {
            labeled,
            total: self.pool.len(),
            budget: self.budget,
        }
    }

    /// The outstanding query if there is one; otherwise the unqueried,
    /// unlabeled image farthest from its nearest labeled neighbor (uniform
    /// among unqueried images while nothing is labeled). `None` once the
    /// pool is exhausted.
    pub fn next_query(&mut self) -> Option<QueryItem> {
        if let Some(q) = self.queries.iter().find(|q| q.status == QueryStatus::Pending) {
            return Some(q.clone());
        }
        let candidates: Vec<usize> = (0..self.pool.len())
            .filter(|&i| !self.queried.contains(&self.pool[i]) && self.store.label_of(&self.pool[i]).is_none())
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let labeled: Vec<usize> = (0..self.pool.len())
            .filter(|&i| self.store.label_of(&self.pool[i]).is_some())
            .collect();
        let pick = if labeled.is_empty() {
            candidates[self.rng.random_range(0..candidates.len())]
        } else {
            let mut best = (f64::NEG_INFINITY, candidates[0]);
            for &c in &candidates {
                let d = labeled
                    .iter()
                    .map(|&l| euclidean(&self.embeddings[c], &self.embeddings[l]))
                    .fold(f64::INFINITY, f64::min);
                if d > best.0 {
                    best = (d, c);
                }
            }
            best.1
        };
        let item = QueryItem {
            query_id: self.next_query_id,
            image_id: self.pool[pick].clone(),
            status: QueryStatus::Pending,
        };
        self.next_query_id += 1;
        self.queried.insert(item.image_id.clone());
        self.queries.push(item.clone());
        Some(item)
    }

    pub fn skip(&mut self, query_id: u64) -> Result<QueryItem, HilError> {
        let q = self
            .queries
            .iter_mut()
            .find(|q| q.query_id == query_id)
            .ok_or_else(|| HilError::NotFound(format!("query {query_id}")))?;
        match q.status {
            QueryStatus::Labeled => Err(HilError::Conflict(format!("query {query_id} is already labeled"))),
            _ => {
                q.status = QueryStatus::Skipped;
                Ok(q.clone())
            }
        }
    }

    /// Records the label for a pending query. Re-submitting an answered
    /// query with the same choice returns the original record; a different
    /// choice is a conflict.
    pub fn submit_label(&mut self, query_id: u64, choice: &ClassChoice, labeler_id: &str) -> Result<(LabelRecord, bool), HilError> {
        if let Some(prior) = self.store.record_for_query(query_id) {
            return if self.store.same_submission(prior, choice) {
                Ok((prior.clone(), false))
            } else {
                Err(HilError::Conflict(format!("query {query_id} was already answered differently")))
            };
        }
        let idx = self
            .queries
            .iter()
            .position(|q| q.query_id == query_id)
            .ok_or_else(|| HilError::NotFound(format!("query {query_id}")))?;
        if self.queries[idx].status == QueryStatus::Skipped {
            return Err(HilError::Conflict(format!("query {query_id} was skipped")));
        }
        let image_id = self.queries[idx].image_id.clone();
        let out = self.store.record(query_id, &image_id, choice, labeler_id)?;
        self.queries[idx].status = QueryStatus::Labeled;
        Ok(out)
    }

    /// Labeled pool images and their class ids.
    pub fn labeled_snapshot(&self) -> (Vec<String>, Vec<u32>) {
        self.pool
            .iter()
            .filter_map(|id| self.store.label_of(id).map(|r| (id.clone(), r.class_id)))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub triplets: u64,
    pub train_images: usize,
    pub held_out_images: usize,
    pub held_out_before: Option<f64>,
    pub held_out_after: Option<f64>,
    pub training: Option<TrainReport>,
}

/// Splits labeled items into train and held-out parts: a fifth of every
/// class with at least five members is held out, chosen by `rng`.
fn split_held_out<R: Rng + ?Sized>(labels: &[u32], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut keys: Vec<u32> = by_class.keys().copied().collect();
    keys.sort_unstable();
    let (mut train_set, mut held) = (Vec::new(), Vec::new());
    for k in keys {
        let mut members = by_class.remove(&k).unwrap_or_default();
        let n_held = members.len() / 5;
        for i in (1..members.len()).rev() {
            members.swap(i, rng.random_range(0..=i));
        }
        held.extend_from_slice(&members[..n_held]);
        train_set.extend_from_slice(&members[n_held..]);
    }
    train_set.sort_unstable();
    held.sort_unstable();
    (train_set, held)
}

/// Continues training `net` on triplets synthesized from class labels.
/// With no triplets the network is returned unchanged. Accuracy on a
/// held-out fifth of the labels is logged before and after; a drop of
/// more than one point is reported as a warning.
pub fn finetune(
    net: &Network<f32>,
    images: &[TrajectoryImage],
    labels: &[u32],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Network<f32>, FinetuneReport), HilError> {
    if images.len() != labels.len() {
        return Err(Error::contract("one label per image required").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_idx, held_idx) = split_held_out(labels, &mut rng);
    let train_labels: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
    let index = TripletIndex::from_labels(&train_labels);
    let held_images: Vec<TrajectoryImage> = held_idx.iter().map(|&i| images[i].clone()).collect();
    let held_labels: Vec<u32> = held_idx.iter().map(|&i| labels[i]).collect();
    let held_accuracy = |n: &Network<f32>| network_accuracy("held-out", n, &held_images, &held_labels).ok().map(|r| r.percentage);

    let mut report = FinetuneReport {
        triplets: index.len(),
        train_images: train_idx.len(),
        held_out_images: held_idx.len(),
        held_out_before: held_accuracy(net),
        held_out_after: None,
        training: None,
    };
    if index.is_empty() {
        log::warn!("no label triplets (need two classes, one with two members); network unchanged");
        report.held_out_after = report.held_out_before;
        return Ok((net.clone(), report));
    }

    let per_epoch = (cfg.triplets_per_epoch as u64).min(index.len()) as usize;
    let cfg = TrainConfig {
        triplets_per_epoch: per_epoch,
        ..cfg.clone()
    };
    let pixels = |k: usize| images[train_idx[k]].pixels().to_vec();
    let mut queue: Vec<u64> = Vec::new();
    let mut tuned = net.clone();
    let training = train(&mut tuned, &cfg, rng.random(), |count, rng| {
        let mut batch = Vec::with_capacity(count);
        for _ in 0..count {
            if queue.is_empty() {
                queue = index.sample(per_epoch, rng);
                queue.reverse();
            }
            let i = queue.pop().expect("refilled");
            let (a, p, n) = index.get(i).expect("sampled index in range");
            batch.push(Triplet {
                anchor: pixels(a),
                positive: pixels(p),
                negative: pixels(n),
            });
        }
        Ok(batch)
    })?;
    report.training = Some(training);
    report.held_out_after = held_accuracy(&tuned);
    match (report.held_out_before, report.held_out_after) {
        (Some(b), Some(a)) if a < b - 1.0 => {
            log::warn!("fine-tuning lowered held-out accuracy from {b:.2}% to {a:.2}%")
        }
        (Some(b), Some(a)) => log::info!("held-out accuracy {b:.2}% -> {a:.2}%"),
        _ => log::info!("too few labels for a held-out accuracy check"),
    }
    Ok((tuned, report))
}
