//! Rule-based behavior names from hand-crafted features.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behavior::HandFeatures;
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../config/signatures.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signature {
    Aggregation,
    CyclicPursuit,
    Dispersal,
    Milling,
    WallFollowing,
    Random,
}

impl Signature {
    pub const ALL: [Signature; 6] = [
        Signature::CyclicPursuit,
        Signature::Aggregation,
        Signature::Dispersal,
        Signature::Milling,
        Signature::WallFollowing,
        Signature::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signature::Aggregation => "aggregation",
            Signature::CyclicPursuit => "cyclic-pursuit",
            Signature::Dispersal => "dispersal",
            Signature::Milling => "milling",
            Signature::WallFollowing => "wall-following",
            Signature::Random => "random",
        }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Signature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Signature::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown behavior signature {s:?}")))
    }
}

/// Thresholds of the signature rules. Momentum thresholds apply to the
/// absolute value, so mirror-image behaviors share a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureRules {
    pub version: u32,
    pub aggregation_max_scatter: f64,
    pub compact_max_scatter: f64,
    pub cyclic_min_abs_momentum: f64,
    pub cyclic_max_radial_variance: f64,
    pub milling_min_abs_momentum: f64,
    pub wall_max_scatter: f64,
    pub wall_min_abs_momentum: f64,
    pub dispersal_min_scatter: f64,
    pub dispersal_max_abs_momentum: f64,
}

impl Default for SignatureRules {
    fn default() -> Self {
        Self::parse(BUILTIN).expect("built-in signature rules parse")
    }
}

impl SignatureRules {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("signature rules", e))
    }

    /// First matching rule wins; anything unmatched is `Random`.
    pub fn classify(&self, f: &HandFeatures) -> Signature {
        let am = f.angular_momentum.abs();
        let s = f.scatter;
        if s < self.aggregation_max_scatter {
            Signature::Aggregation
        } else if s < self.compact_max_scatter {
            if am >= self.cyclic_min_abs_momentum && f.radial_variance < self.cyclic_max_radial_variance {
                Signature::CyclicPursuit
            } else if am >= self.milling_min_abs_momentum {
                Signature::Milling
            } else {
                Signature::Random
            }
        } else if s < self.wall_max_scatter && am >= self.wall_min_abs_momentum {
            Signature::WallFollowing
        } else if s >= self.dispersal_min_scatter && am < self.dispersal_max_abs_momentum {
            Signature::Dispersal
        } else {
            Signature::Random
        }
    }
}
