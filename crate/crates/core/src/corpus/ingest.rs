use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::{
    filter_post, tokenize, FilterConfig, FilterDecision, Gender, PostRecord, RejectReason,
    UserSummary,
};
use crate::error::{Error, Result};
use crate::lexicon::FrequencyLexicon;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordError {
    Decode { line: usize },
    Parse { line: usize, message: String },
}

fn raw_lines(
    reader: impl Read,
) -> impl Iterator<Item = (usize, std::result::Result<String, RecordError>)> {
    BufReader::new(reader)
        .split(b'\n')
        .enumerate()
        .map(|(i, bytes)| {
            let line = i + 1;
            let r = match bytes {
                Ok(mut b) => {
                    if b.last() == Some(&b'\r') {
                        b.pop();
                    }
                    String::from_utf8(b).map_err(|_| RecordError::Decode { line })
                }
                Err(e) => Err(RecordError::Parse {
                    line,
                    message: e.to_string(),
                }),
            };
            (line, r)
        })
}

/// JSON-lines posts: one object per line with user_id, country, region,
/// gender, lang, text. Blank lines and `#` comment lines are skipped.
pub fn read_jsonl(
    reader: impl Read,
) -> impl Iterator<Item = std::result::Result<PostRecord, RecordError>> {
    raw_lines(reader).filter_map(|(line, r)| match r {
        Err(e) => Some(Err(e)),
        Ok(s) if s.trim().is_empty() || s.starts_with('#') => None,
        Ok(s) => Some(
            serde_json::from_str::<PostRecord>(&s).map_err(|e| RecordError::Parse {
                line,
                message: e.to_string(),
            }),
        ),
    })
}

/// Tab-separated posts with a header naming the same fields as the JSON form.
pub fn read_tsv(
    reader: impl Read,
) -> impl Iterator<Item = std::result::Result<PostRecord, RecordError>> {
    let mut columns: Option<HashMap<String, usize>> = None;
    raw_lines(reader).filter_map(move |(line, r)| {
        let s = match r {
            Err(e) => return Some(Err(e)),
            Ok(s) => s,
        };
        if s.trim().is_empty() || s.starts_with('#') {
            return None;
        }
        let fields: Vec<&str> = s.split('\t').collect();
        let Some(cols) = &columns else {
            columns = Some(
                fields
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (f.trim().to_string(), i))
                    .collect(),
            );
            return None;
        };
        let get = |name: &str| -> std::result::Result<&str, RecordError> {
            let alt = if name == "lang" { "language" } else { name };
            cols.get(name)
                .or_else(|| cols.get(alt))
                .and_then(|&i| fields.get(i).copied())
                .ok_or_else(|| RecordError::Parse {
                    line,
                    message: format!("missing field {name}"),
                })
        };
        let rec = (|| {
            let gender = get("gender")?
                .parse::<Gender>()
                .map_err(|e| RecordError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            let region = get("region")
                .ok()
                .filter(|r| !r.is_empty())
                .map(str::to_string);
            Ok(PostRecord {
                user_id: get("user_id")?.to_string(),
                country: get("country")?.to_string(),
                region,
                gender,
                language: get("lang")?.to_string(),
                text: get("text")?.replace("\\t", "\t").replace("\\n", "\n"),
            })
        })();
        Some(rec)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub filter: FilterConfig,
    pub languages: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            filter: FilterConfig::default(),
            languages: super::STUDY_LANGUAGES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Accepted post lengths, in characters, as an exact histogram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LengthHistogram {
    counts: BTreeMap<usize, u64>,
}

impl LengthHistogram {
    pub fn add(&mut self, len: usize) {
        *self.counts.entry(len).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &LengthHistogram) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += v;
        }
    }

    fn nearest_rank(&self, q: f64, total: u64) -> usize {
        let target = ((q * total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (&len, &c) in &self.counts {
            seen += c;
            if seen >= target {
                return len;
            }
        }
        0
    }

    pub fn stats(&self) -> LengthStats {
        let total: u64 = self.counts.values().sum();
        if total == 0 {
            return LengthStats::default();
        }
        let sum: u64 = self.counts.iter().map(|(l, c)| *l as u64 * c).sum();
        LengthStats {
            posts: total,
            median: self.nearest_rank(0.5, total),
            mean: sum as f64 / total as f64,
            p95: self.nearest_rank(0.95, total),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub posts: u64,
    pub median: usize,
    pub mean: f64,
    pub p95: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
    pub unsupported_language: u64,
    pub decode_errors: u64,
    pub parse_errors: u64,
    pub users: u64,
    pub users_by_language: BTreeMap<String, u64>,
    pub accepted_length: LengthStats,
}

/// Compact per-user summary: the sorted set of lexicon ranks the user used.
/// Out-of-lexicon tokens are dropped since they affect neither the
/// popularity curve nor LoFF counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub country: String,
    pub region: Option<String>,
    pub gender: Gender,
    pub language: String,
    pub post_count: u32,
    pub ranks: Vec<u32>,
}

impl UserProfile {
    pub fn from_summary(summary: &UserSummary, lexicon: &FrequencyLexicon) -> Self {
        let mut ranks: Vec<u32> = summary
            .unique_unigrams
            .iter()
            .filter_map(|w| lexicon.rank(w).map(|r| r as u32))
            .collect();
        ranks.sort_unstable();
        UserProfile {
            user_id: summary.user_id.clone(),
            country: summary.country.clone(),
            region: summary.region.clone(),
            gender: summary.gender,
            language: summary.language.clone(),
            post_count: summary.post_count,
            ranks,
        }
    }

    /// Number of distinct ranks within [k0, k1].
    pub fn count_in(&self, k0: usize, k1: usize) -> usize {
        let lo = self.ranks.partition_point(|&r| (r as usize) < k0);
        let hi = self.ranks.partition_point(|&r| (r as usize) <= k1);
        hi - lo
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    /// Sorted by (language, user_id).
    pub profiles: Vec<UserProfile>,
    pub report: IngestReport,
    lengths: LengthHistogram,
}

impl IngestOutput {
    /// Merges shards; a user appearing in several shards is combined.
    pub fn merge(mut self, other: IngestOutput) -> IngestOutput {
        let r = &mut self.report;
        let o = other.report;
        r.accepted += o.accepted;
        for (k, v) in o.rejected {
            *r.rejected.entry(k).or_insert(0) += v;
        }
        r.unsupported_language += o.unsupported_language;
        r.decode_errors += o.decode_errors;
        r.parse_errors += o.parse_errors;
        self.lengths.merge(&other.lengths);
        let mut by_key: BTreeMap<(String, String), UserProfile> = BTreeMap::new();
        for p in self.profiles.into_iter().chain(other.profiles) {
            let key = (p.language.clone(), p.user_id.clone());
            match by_key.get_mut(&key) {
                Some(q) => {
                    q.post_count += p.post_count;
                    q.ranks.extend(p.ranks);
                    q.ranks.sort_unstable();
                    q.ranks.dedup();
                }
                None => {
                    by_key.insert(key, p);
                }
            }
        }
        self.profiles = by_key.into_values().collect();
        self.finish_report();
        self
    }

    fn finish_report(&mut self) {
        self.report.users = self.profiles.len() as u64;
        self.report.users_by_language.clear();
        for p in &self.profiles {
            *self
                .report
                .users_by_language
                .entry(p.language.clone())
                .or_insert(0) += 1;
        }
        self.report.accepted_length = self.lengths.stats();
    }
}

struct Partial {
    country: String,
    region: Option<String>,
    gender: Gender,
    posts: u32,
    ranks: Vec<u32>,
}

/// Filters, tokenizes and groups posts into per-(language, user) profiles.
pub fn ingest(
    records: impl IntoIterator<Item = std::result::Result<PostRecord, RecordError>>,
    cfg: &IngestConfig,
    lexicons: &BTreeMap<String, FrequencyLexicon>,
) -> Result<IngestOutput> {
    cfg.filter.validate()?;
    let mut out = IngestOutput::default();
    let mut users: HashMap<(String, String), Partial> = HashMap::new();
    for rec in records {
        let rec = match rec {
            Ok(r) => r,
            Err(RecordError::Decode { .. }) => {
                out.report.decode_errors += 1;
                continue;
            }
            Err(RecordError::Parse { .. }) => {
                out.report.parse_errors += 1;
                continue;
            }
        };
        let Some(lexicon) = lexicons
            .get(&rec.language)
            .filter(|_| cfg.languages.contains(&rec.language))
        else {
            out.report.unsupported_language += 1;
            continue;
        };
        match filter_post(&rec, &cfg.filter) {
            FilterDecision::Reject(reason) => {
                *out.report.rejected.entry(reason).or_insert(0) += 1;
                continue;
            }
            FilterDecision::Accept => {}
        }
        out.report.accepted += 1;
        out.lengths.add(rec.text.chars().count());
        let tokens = tokenize(&rec.text, &rec.language, Some(lexicon));
        let entry = users
            .entry((rec.language.clone(), rec.user_id.clone()))
            .or_insert_with(|| Partial {
                country: rec.country.clone(),
                region: rec.region.clone(),
                gender: rec.gender,
                posts: 0,
                ranks: Vec::new(),
            });
        entry.posts += 1;
        entry.ranks.extend(
            tokens
                .iter()
                .filter_map(|t| lexicon.rank(t).map(|r| r as u32)),
        );
        if entry.ranks.len() > 4096 {
            entry.ranks.sort_unstable();
            entry.ranks.dedup();
        }
    }
    let mut keys: Vec<(String, String)> = users.keys().cloned().collect();
    keys.sort();
    out.profiles = keys
        .into_iter()
        .map(|k| {
            let mut p = users.remove(&k).expect("key present");
            p.ranks.sort_unstable();
            p.ranks.dedup();
            UserProfile {
                user_id: k.1,
                country: p.country,
                region: p.region,
                gender: p.gender,
                language: k.0,
                post_count: p.posts,
                ranks: p.ranks,
            }
        })
        .collect();
    out.finish_report();
    Ok(out)
}

/// String-level summaries grouped by (language, user), for small corpora.
pub fn summaries_from_records(
    records: impl IntoIterator<Item = PostRecord>,
    cfg: &FilterConfig,
    lexicons: &BTreeMap<String, FrequencyLexicon>,
) -> Result<Vec<UserSummary>> {
    let mut groups: BTreeMap<(String, String), Vec<PostRecord>> = BTreeMap::new();
    for r in records {
        if filter_post(&r, cfg) == FilterDecision::Accept {
            groups
                .entry((r.language.clone(), r.user_id.clone()))
                .or_default()
                .push(r);
        }
    }
    groups
        .values()
        .map(|posts| super::summarize_user(posts, lexicons.get(&posts[0].language)))
        .collect()
}

impl From<RecordError> for Error {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Decode { line } => {
                Error::InvalidInput(format!("line {line}: invalid UTF-8"))
            }
            RecordError::Parse { line, message } => {
                Error::InvalidInput(format!("line {line}: {message}"))
            }
        }
    }
}
