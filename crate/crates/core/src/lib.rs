//! Principal fairness auditing for binary decisions.
//!
//! Missing potential outcomes are imputed from Bayesian logistic regressions
//! fit by mean-field variational inference, rows are assigned to principal
//! strata, and the within-stratum gap in decision probability between the two
//! groups of a binary sensitive attribute is summarized over posterior draws.

pub mod artifact;
pub mod dataset;
pub mod fairness;
pub mod report;
pub mod rng;
pub mod sim;
pub mod strata;
pub mod vi;

pub use dataset::{
    split_by_treatment, validate_dataset, DataError, Dataset, PotentialOutcomes, RawTable, Source,
};
pub use strata::{stratum_from_outcomes, PerStratum, Stratum};
