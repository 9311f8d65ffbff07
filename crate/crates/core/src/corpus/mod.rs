//! Post ingestion, filtering, tokenization and per-user summaries.

mod ingest;
mod tokenize;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::FrequencyLexicon;
pub use ingest::{
    ingest, read_jsonl, read_tsv, summaries_from_records, IngestConfig, IngestOutput, IngestReport,
    LengthHistogram, LengthStats, RecordError, UserProfile,
};
pub use tokenize::tokenize;

pub const STUDY_LANGUAGES: [&str; 12] = [
    "ar", "de", "en", "es", "fr", "it", "ms", "nl", "pt", "ru", "tr", "zh",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
            Gender::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            "other" => Ok(Gender::Other),
            "unknown" | "" => Ok(Gender::Unknown),
            _ => Err(Error::InvalidInput(format!("unknown gender {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub user_id: String,
    pub country: String,
    #[serde(default)]
    pub region: Option<String>,
    pub gender: Gender,
    #[serde(rename = "lang", alias = "language")]
    pub language: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    pub drop_urls: bool,
    /// Input is assumed to contain adult users only; this cannot be verified.
    pub min_age_gate: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_chars: 2,
            max_chars: 1000,
            drop_urls: true,
            min_age_gate: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_chars >= self.max_chars {
            return Err(Error::Config(format!(
                "min_chars ({}) must be below max_chars ({})",
                self.min_chars, self.max_chars
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Empty,
    TooShort,
    TooLong,
    ContainsUrl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Accept,
    Reject(RejectReason),
}

/// A whitespace token is a URL when it holds `scheme://` or starts with `www.`.
pub fn contains_url(text: &str) -> bool {
    text.split_whitespace().any(|tok| {
        let t = tok.trim_start_matches(|c: char| !c.is_alphanumeric());
        if t.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("www.")) {
            return true;
        }
        let mut rest = tok;
        while let Some(p) = rest.find("://") {
            let scheme: Vec<char> = rest[..p]
                .chars()
                .rev()
                .take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '.' | '-'))
                .collect();
            if scheme.last().is_some_and(|c| c.is_ascii_alphabetic()) {
                return true;
            }
            rest = &rest[p + 3..];
        }
        false
    })
}

pub fn filter_post(record: &PostRecord, cfg: &FilterConfig) -> FilterDecision {
    let text = &record.text;
    if text.trim().is_empty() {
        return FilterDecision::Reject(RejectReason::Empty);
    }
    let chars = text.chars().count();
    if chars < cfg.min_chars {
        return FilterDecision::Reject(RejectReason::TooShort);
    }
    if chars > cfg.max_chars {
        return FilterDecision::Reject(RejectReason::TooLong);
    }
    if cfg.drop_urls && contains_url(text) {
        return FilterDecision::Reject(RejectReason::ContainsUrl);
    }
    FilterDecision::Accept
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: String,
    pub country: String,
    pub region: Option<String>,
    pub gender: Gender,
    pub language: String,
    pub post_count: u32,
    pub unique_unigrams: BTreeSet<String>,
}

/// Union of tokens over a single user's accepted posts.
pub fn summarize_user(
    posts: &[PostRecord],
    lexicon: Option<&FrequencyLexicon>,
) -> Result<UserSummary> {
    let first = posts.first().ok_or(Error::EmptyUser)?;
    if posts
        .iter()
        .any(|p| p.user_id != first.user_id || p.language != first.language)
    {
        return Err(Error::MixedUser);
    }
    let mut unique_unigrams = BTreeSet::new();
    for p in posts {
        unique_unigrams.extend(tokenize(&p.text, &p.language, lexicon));
    }
    Ok(UserSummary {
        user_id: first.user_id.clone(),
        country: first.country.clone(),
        region: first.region.clone(),
        gender: first.gender,
        language: first.language.clone(),
        post_count: posts.len() as u32,
        unique_unigrams,
    })
}
