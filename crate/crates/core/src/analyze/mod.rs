//! Validation correlations, gender gaps, regional disparity and the
//! country-level gap regressions.

mod correlation;
mod dominance;
mod gaps;
mod geo;
mod regression;

pub use correlation::{
    spearman_bootstrap, spearman_p_value, CorrelationReport, PValueMethod, DEFAULT_REPLICATES,
};
pub use dominance::{dominance_bias_check, DominanceReport, DominanceRow, SharePair};
pub use gaps::{
    gap_inputs, gender_gap, regional_disparity, regional_inputs, GapConfig, GapInput, GapNull,
    GenderGapRecord, GenderUsers, RegionalDisparityRecord, RegionalInput, Significance,
    Standardize,
};
pub use geo::{GeoGroups, REFERENCE_GROUP};
pub use regression::{
    fit_gap_regression, interaction_name, marginal_effects, DataTable, MarginalEffect,
    RegressionReport, RegressionSpec, Transform,
};
