//! Diversity of the base-classifier ensemble and significance of class
//! memberships.

mod diversity;
mod significance;

pub use diversity::{
    diversity, nonpairwise_diversity, oracle_outputs, pairwise_diversity, DiversityReport, OracleMatrix, ORACLE_RULE,
};
pub use significance::{membership_significance, two_sample_z, SignificanceMode, SignificanceTable};
