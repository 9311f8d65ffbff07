//! Online language-fluency estimation from social media text.

pub mod aggregate;
pub mod analyze;
pub mod calibrate;
pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod lexicon;
pub mod ols;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
