//! L2 triplet accuracy over every admissible labeled triplet.

use serde::{Deserialize, Serialize};

use crate::behavior::euclidean;
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec};
use crate::render::TrajectoryImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mapping_id: String,
    pub admissible: u64,
    pub correct: u64,
    pub percentage: f64,
}

/// Scores every `(a, p, n)` with `a != p` in one class and `n` in another;
/// `(a, p)` is ordered. A triplet is correct iff `‖a−p‖ < ‖a−n‖`, so ties
/// count as wrong.
pub fn l2_accuracy<L: PartialEq>(mapping_id: &str, embeddings: &[Vec<f64>], labels: &[L]) -> Result<AccuracyReport> {
    if embeddings.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} embeddings for {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let m = embeddings.len();
    let mut dist = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = euclidean(&embeddings[i], &embeddings[j]);
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let (mut admissible, mut correct) = (0u64, 0u64);
    for a in 0..m {
        let row = &dist[a * m..(a + 1) * m];
        let negatives: Vec<f64> = (0..m).filter(|&n| labels[n] != labels[a]).map(|n| row[n]).collect();
        if negatives.is_empty() {
            continue;
        }
        for p in 0..m {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            admissible += negatives.len() as u64;
            correct += negatives.iter().filter(|&&dn| row[p] < dn).count() as u64;
        }
    }
    if admissible == 0 {
        return Err(Error::contract(
            "no admissible triplets: need two classes and a class with two members",
        ));
    }
    Ok(AccuracyReport {
        mapping_id: mapping_id.to_string(),
        admissible,
        correct,
        percentage: 100.0 * correct as f64 / admissible as f64,
    })
}

pub fn embed_images(net: &Network<f32>, images: &[TrajectoryImage]) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| Ok(net.forward(img.pixels())?.into_iter().map(f64::from).collect()))
        .collect()
}

/// Accuracy of a network on labeled images.
pub fn network_accuracy<L: PartialEq>(
    mapping_id: &str,
    net: &Network<f32>,
    images: &[TrajectoryImage],
    labels: &[L],
) -> Result<AccuracyReport> {
    l2_accuracy(mapping_id, &embed_images(net, images)?, labels)
}

/// Mean accuracy of freshly initialized networks, one per seed.
pub fn random_init_accuracy<L: PartialEq + Sync>(
    spec: &NetworkSpec,
    images: &[TrajectoryImage],
    labels: &[L],
    seeds: impl IntoIterator<Item = u64>,
) -> Result<(f64, Vec<f64>)> {
    use rand::SeedableRng;
    let mut per_seed = Vec::new();
    for seed in seeds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let net = Network::<f32>::init(spec.clone(), &mut rng)?;
        per_seed.push(network_accuracy("random-init", &net, images, labels)?.percentage);
    }
    if per_seed.is_empty() {
        return Err(Error::contract("random baseline needs at least one seed"));
    }
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    Ok((mean, per_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_admissible_set() {
        let e = vec![vec![0.0], vec![0.1], vec![5.0]];
        let r = l2_accuracy("t", &e, &["A", "A", "B"]).unwrap();
        assert_eq!(r.admissible, 2);
        assert_eq!(r.correct, 2);
        assert_eq!(r.percentage, 100.0);
    }

    #[test]
    fn collapsed_embedding_scores_zero() {
        let e = vec![vec![1.0, 2.0]; 6];
        let r = l2_accuracy("t", &e, &[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(r.admissible, 6 * 4);
        assert_eq!(r.correct, 0);
    }

    #[test]
    fn separated_classes_score_full() {
        let labels = [0, 1, 2, 0, 1, 2, 0];
        let e: Vec<Vec<f64>> = labels.iter().map(|&c| vec![c as f64 * 10.0, 0.0]).collect();
        assert_eq!(l2_accuracy("t", &e, &labels).unwrap().percentage, 100.0);
    }

    #[test]
    fn no_admissible_triplets_is_an_error() {
        assert!(l2_accuracy("t", &[vec![0.0], vec![1.0]], &[0, 0]).is_err());
        assert!(l2_accuracy("t", &[vec![0.0], vec![1.0]], &[0, 1]).is_err());
        assert!(l2_accuracy("t", &[vec![0.0]], &[0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn count_formula_bounds_and_relabeling(
            pts in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 2), 0u8..3), 3..25),
        ) {
            let e: Vec<Vec<f64>> = pts.iter().map(|p| p.0.clone()).collect();
            let labels: Vec<u8> = pts.iter().map(|p| p.1).collect();
            let m = labels.len() as u64;
            let expected: u64 = (0..3u8)
                .map(|c| {
                    let s = labels.iter().filter(|&&l| l == c).count() as u64;
                    s * s.saturating_sub(1) * (m - s)
                })
                .sum();
            match l2_accuracy("t", &e, &labels) {
                Ok(r) => {
                    prop_assert_eq!(r.admissible, expected);
                    prop_assert!((0.0..=100.0).contains(&r.percentage));
                    let permuted: Vec<u8> = labels.iter().map(|l| (l + 1) % 3).collect();
                    prop_assert_eq!(l2_accuracy("t", &e, &permuted).unwrap().percentage, r.percentage);
                }
                Err(_) => prop_assert_eq!(expected, 0),
            }
        }
    }
}
