//! Dataset persistence, embedding accuracy and distinct-behavior counts.

pub mod accuracy;
pub mod manifest;
pub mod signature;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use accuracy::{l2_accuracy, network_accuracy, random_init_accuracy, AccuracyReport};
pub use manifest::{build_dataset, DatasetSpec, Manifest, ManifestRecord};
pub use signature::{Signature, SignatureRules};

use crate::behavior::hand_features_over;
use crate::discovery::ArchiveEntry;
use crate::error::{Error, Result};
use crate::pipeline::RolloutSettings;

/// How medoids get their behavior names.
#[derive(Debug, Clone)]
pub enum Classifier {
    /// Re-simulate each medoid and apply the signature rules.
    Signatures(SignatureRules),
    /// Names keyed by image id; unknown medoids count as random.
    Labels(HashMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctReport {
    /// Name given to each medoid, in medoid order.
    pub names: Vec<String>,
    pub tallies: BTreeMap<String, usize>,
    pub distinct: usize,
}

impl DistinctReport {
    /// One table row: a count per known behavior, then the distinct total.
    pub fn table_row(&self, label: &str) -> String {
        let mut header = String::from("| run ");
        let mut row = format!("| {label} ");
        for s in Signature::ALL {
            let _ = write!(header, "| {} ", s.name());
            let _ = write!(row, "| {} ", self.tallies.get(s.name()).copied().unwrap_or(0));
        }
        let others: usize = self
            .tallies
            .iter()
            .filter(|(k, _)| k.parse::<Signature>().is_err())
            .map(|(_, v)| v)
            .sum();
        let _ = write!(header, "| other | distinct |");
        let _ = write!(row, "| {others} | {} |", self.distinct);
        format!("{header}\n{row}")
    }
}

/// Names each medoid and counts the distinct names.
pub fn count_distinct(medoids: &[ArchiveEntry], classifier: &Classifier, settings: &RolloutSettings) -> Result<DistinctReport> {
    if medoids.is_empty() {
        return Err(Error::contract("taxonomy has no medoids"));
    }
    let names: Vec<String> = match classifier {
        Classifier::Labels(labels) => {
            if labels.is_empty() {
                return Err(Error::contract("label file is empty and the signature classifier is off"));
            }
            medoids
                .iter()
                .map(|m| match labels.get(&m.image_id) {
                    Some(n) => n.clone(),
                    None => {
                        log::warn!("medoid {} has no label, counted as random", m.image_id);
                        Signature::Random.name().to_string()
                    }
                })
                .collect()
        }
        Classifier::Signatures(rules) => medoids
            .par_iter()
            .map(|m| Ok(classify_entry(m, rules, settings)?.name().to_string()))
            .collect::<Result<_>>()?,
    };
    let mut tallies = BTreeMap::new();
    for n in &names {
        *tallies.entry(n.clone()).or_insert(0) += 1;
    }
    Ok(DistinctReport {
        distinct: tallies.len(),
        names,
        tallies,
    })
}

/// Re-simulates an archive entry from its seed and classifies the
/// features of its final window.
pub fn classify_entry(e: &ArchiveEntry, rules: &SignatureRules, settings: &RolloutSettings) -> Result<Signature> {
    let traj = settings.simulate(&e.controller, e.seed)?;
    let f = hand_features_over(&traj, traj.frames.len() - settings.window, settings.window)?;
    Ok(rules.classify(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::BehaviorVector;
    use crate::controller::Controller;

    fn entry(id: &str) -> ArchiveEntry {
        ArchiveEntry {
            generation: 0,
            controller: Controller::single([0.0; 4]).unwrap(),
            behavior_vector: BehaviorVector::new(vec![0.0; 5], "hand").unwrap(),
            image_id: id.into(),
            seed: 0,
        }
    }

    #[test]
    fn label_file_classifier() {
        let labels: HashMap<String, String> = [("a", "milling"), ("b", "milling"), ("c", "swirl")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let r = count_distinct(
            &[entry("a"), entry("b"), entry("c"), entry("d")],
            &Classifier::Labels(labels),
            &RolloutSettings::default(),
        )
        .unwrap();
        assert_eq!(r.distinct, 3);
        assert_eq!(r.tallies["milling"], 2);
        assert_eq!(r.tallies["random"], 1);
        assert!(r.table_row("x").contains("| 1 | 3 |"));
    }

    #[test]
    fn same_class_everywhere_is_one() {
        let labels = HashMap::from([("a".to_string(), "dispersal".to_string())]);
        let r = count_distinct(&[entry("a"), entry("a")], &Classifier::Labels(labels), &RolloutSettings::default()).unwrap();
        assert_eq!(r.distinct, 1);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let s = RolloutSettings::default();
        assert!(count_distinct(&[entry("a")], &Classifier::Labels(HashMap::new()), &s).is_err());
        assert!(count_distinct(&[], &Classifier::Signatures(SignatureRules::default()), &s).is_err());
    }

    #[test]
    fn stationary_swarm_is_not_a_named_motion() {
        // the zero controller never moves; spread-out agents read as random
        let r = count_distinct(
            &[entry("z")],
            &Classifier::Signatures(SignatureRules::default()),
            &RolloutSettings::default(),
        )
        .unwrap();
        assert_eq!(r.names, vec!["random".to_string()]);
    }
}
