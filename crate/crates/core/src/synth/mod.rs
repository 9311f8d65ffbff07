//! Synthetic data with known ground truth.

mod corpus;
mod planted;

pub use corpus::{
    pseudo_word, synthetic_lexicon, CountryTruth, SyntheticCorpus, SyntheticSpec, SyntheticTruth,
};
pub use planted::{PlantedCurve, PLANTED_RANKS, PLANTED_SLOW_SCALE};
