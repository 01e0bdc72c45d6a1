//! Expert optimization algorithms and a structure-free learned baseline.

mod cnm;
mod e2e;
pub mod eigen;
mod facility;
mod newman;
mod spectral;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DistanceTable, Graph};

pub use cnm::{cnm, labels_after, CnmOutcome, Merge};
pub use e2e::{gcn_e2e, E2eConfig};
pub use facility::{gonzalez, greedy_facility};
pub use newman::newman_leading_eigenvector;
pub use spectral::{hard_kmeans, spectral_clustering_dense, spectral_clustering_modularity, KMEANS_RESTARTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineName {
    Cnm,
    Newman,
    Sc,
    Greedy,
    Gonzalez,
    GcnE2e,
}

impl BaselineName {
    pub const ALL: [BaselineName; 6] = [
        BaselineName::Cnm,
        BaselineName::Newman,
        BaselineName::Sc,
        BaselineName::Greedy,
        BaselineName::Gonzalez,
        BaselineName::GcnE2e,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineName::Cnm => "cnm",
            BaselineName::Newman => "newman",
            BaselineName::Sc => "sc",
            BaselineName::Greedy => "greedy",
            BaselineName::Gonzalez => "gonzalez",
            BaselineName::GcnE2e => "gcn-e2e",
        }
    }

    pub fn is_partition(self) -> bool {
        matches!(self, BaselineName::Cnm | BaselineName::Newman | BaselineName::Sc)
    }

    pub fn is_selection(self) -> bool {
        matches!(self, BaselineName::Greedy | BaselineName::Gonzalez)
    }
}

impl fmt::Display for BaselineName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineName::ALL.into_iter().find(|b| b.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = BaselineName::ALL.iter().map(|b| b.as_str()).collect();
            Error::Config(format!("unknown baseline {s:?}; valid: {}", valid.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub name: BaselineName,
    pub k: usize,
    pub seed: u64,
}

impl BaselineSpec {
    /// Community labels from a partition baseline.
    pub fn partition(&self, g: &Graph) -> Result<Vec<usize>> {
        match self.name {
            BaselineName::Cnm => Ok(cnm(g, self.k)?.labels),
            BaselineName::Newman => newman_leading_eigenvector(g, self.k, self.seed),
            BaselineName::Sc => spectral_clustering_modularity(g, self.k, self.seed),
            other => Err(Error::Config(format!("{other} is not a community detection baseline"))),
        }
    }

    /// Facility set from a selection baseline.
    pub fn selection(&self, dist: &DistanceTable) -> Result<Vec<usize>> {
        match self.name {
            BaselineName::Greedy => greedy_facility(dist, self.k),
            BaselineName::Gonzalez => gonzalez(dist, self.k, self.seed, None),
            other => Err(Error::Config(format!("{other} is not a facility location baseline"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_unknown_lists_valid() {
        for b in BaselineName::ALL {
            assert_eq!(b.as_str().parse::<BaselineName>().unwrap(), b);
        }
        let err = "louvain".parse::<BaselineName>().unwrap_err().to_string();
        assert!(err.contains("cnm") && err.contains("gcn-e2e"));
    }
}
