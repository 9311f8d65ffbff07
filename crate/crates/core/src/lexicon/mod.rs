//! Reference lexicons, word-popularity curves and LoFF range detection.

pub mod knee;
pub mod spline;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{UserProfile, UserSummary};
use crate::error::{Error, Result};
pub use knee::{kneedle_point, max_curvature_point, CurvatureFrame, Knee, KneeShape};
pub use spline::{
    fit_smoother, LambdaRule, SmoothCurve, SmootherConfig, SmootherFit, SmoothingPath,
};

pub const MAX_LEXICON_ENTRIES: usize = 200_000;

#[derive(Debug, Clone)]
pub struct FrequencyLexicon {
    pub language: String,
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    max_chars: usize,
}

impl FrequencyLexicon {
    /// Builds from (word, frequency) pairs in file order: stable sort by
    /// descending frequency, then cap.
    pub fn from_entries(language: &str, mut entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput(format!(
                "lexicon for {language} is empty"
            )));
        }
        let mut seen = HashMap::with_capacity(entries.len());
        for (line, (w, f)) in entries.iter().enumerate() {
            if *f == 0 {
                return Err(Error::InvalidInput(format!(
                    "frequency of {w:?} must be positive"
                )));
            }
            if seen.insert(w.clone(), ()).is_some() {
                return Err(Error::DuplicateWord {
                    word: w.clone(),
                    line: line + 1,
                });
            }
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1));
        entries.truncate(MAX_LEXICON_ENTRIES);
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        let max_chars = entries
            .iter()
            .map(|(w, _)| w.chars().count())
            .max()
            .unwrap_or(0);
        Ok(FrequencyLexicon {
            language: language.to_string(),
            entries,
            index,
            max_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, rank: usize) -> Option<&str> {
        self.entries.get(rank).map(|(w, _)| w.as_str())
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    /// Longest lexicon word, in characters (for greedy segmentation).
    pub fn max_word_chars(&self) -> usize {
        self.max_chars
    }
}

/// Parses a `word count` lexicon (fastText dump style). A leading line
/// holding a single integer (entry count) and a trailing `word`/`label`
/// type column are tolerated; label entries are skipped.
pub fn parse_lexicon_reader(
    reader: impl Read,
    path: &Path,
    language: &str,
) -> Result<FrequencyLexicon> {
    let mut entries = Vec::new();
    let mut lines_seen = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(path, lineno, format!("unreadable line: {e}")))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        // "# ..." lines ahead of the first entry are file headers
        if entries.is_empty() && line.starts_with("# ") && fields.len() != 2 {
            continue;
        }
        if lineno == 1 && fields.len() == 1 && fields[0].parse::<u64>().is_ok() {
            continue;
        }
        let (word, count, kind) = match fields.as_slice() {
            [w, c] => (*w, *c, None),
            [w, c, k] => (*w, *c, Some(*k)),
            _ => return Err(Error::parse(path, lineno, "expected `word count`")),
        };
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid count {count:?}")))?;
        if count == 0 {
            return Err(Error::parse(path, lineno, "count must be positive"));
        }
        match kind {
            None | Some("word") => {}
            Some("label") => continue,
            Some(k) => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown entry type {k:?}"),
                ))
            }
        }
        if let Some(first) = lines_seen.insert(word.to_string(), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate word {word:?} (first seen at line {first})"),
            ));
        }
        entries.push((word.to_string(), count));
    }
    if entries.is_empty() {
        return Err(Error::parse(path, 0, "lexicon file is empty"));
    }
    FrequencyLexicon::from_entries(language, entries)
}

pub fn parse_lexicon(path: impl AsRef<Path>, language: &str) -> Result<FrequencyLexicon> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon_reader(file, path, language)
}

/// Per-rank user counts; shards merge by addition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularityCounts {
    pub language: String,
    pub users: u64,
    pub counts: Vec<u64>,
}

impl PopularityCounts {
    pub fn new(language: &str, lexicon_size: usize) -> Self {
        PopularityCounts {
            language: language.to_string(),
            users: 0,
            counts: vec![0; lexicon_size],
        }
    }

    pub fn add_user(&mut self, summary: &UserSummary, lexicon: &FrequencyLexicon) {
        self.users += 1;
        for w in &summary.unique_unigrams {
            if let Some(r) = lexicon.rank(w) {
                self.counts[r] += 1;
            }
        }
    }

    /// Same as `add_user` for a user already reduced to lexicon ranks.
    pub fn add_profile(&mut self, profile: &UserProfile) {
        self.users += 1;
        for &r in &profile.ranks {
            self.counts[r as usize] += 1;
        }
    }

    pub fn merge(&mut self, other: &PopularityCounts) {
        assert_eq!(self.counts.len(), other.counts.len());
        self.users += other.users;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn into_curve(self) -> Result<PopularityCurve> {
        if self.users == 0 {
            return Err(Error::NoUsers);
        }
        let n = self.users as f64;
        Ok(PopularityCurve {
            language: self.language,
            users: self.users,
            points: self
                .counts
                .iter()
                .enumerate()
                .map(|(r, &c)| (r as u32, c as f64 / n))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityCurve {
    pub language: String,
    pub users: u64,
    /// (rank, popularity) with strictly increasing ranks.
    pub points: Vec<(u32, f64)>,
}

impl PopularityCurve {
    pub fn ranks(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0 as f64).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "rank,popularity")?;
        for (r, p) in &self.points {
            writeln!(out, "{r},{p}")?;
        }
        Ok(())
    }

    /// Reads `rank,popularity` rows; `#` comment lines and the header are skipped.
    pub fn read_csv(reader: impl Read, path: &Path, language: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with("rank") {
                continue;
            }
            let (r, p) = t
                .split_once(',')
                .ok_or_else(|| Error::parse(path, i + 1, "expected rank,popularity"))?;
            let r: u32 = r
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, "bad rank"))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, "bad popularity"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse(path, i + 1, "popularity outside [0, 1]"));
            }
            if points.last().is_some_and(|&(lr, _)| lr >= r) {
                return Err(Error::parse(path, i + 1, "ranks must increase"));
            }
            points.push((r, p));
        }
        Ok(PopularityCurve {
            language: language.to_string(),
            users: 0,
            points,
        })
    }
}

/// Popularity curve over all lexicon ranks, explicit zeros included.
pub fn build_popularity_curve<'a>(
    summaries: impl IntoIterator<Item = &'a UserSummary>,
    lexicon: &FrequencyLexicon,
) -> Result<PopularityCurve> {
    let mut counts = PopularityCounts::new(&lexicon.language, lexicon.len());
    for s in summaries {
        if s.language != lexicon.language {
            return Err(Error::InvalidInput(format!(
                "user {} is in {}, lexicon is {}",
                s.user_id, s.language, lexicon.language
            )));
        }
        counts.add_user(s, lexicon);
    }
    counts.into_curve()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRange {
    pub k0: usize,
    pub k1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoffRange {
    pub language: String,
    pub k0: usize,
    pub k1: usize,
    pub k0_kw: f64,
    pub k1_kw: f64,
}

impl LoffRange {
    pub fn new(language: &str, k0: usize, k1: usize) -> Result<Self> {
        if k0 >= k1 {
            return Err(Error::Inversion { k0, k1 });
        }
        if k0 == 0 {
            return Err(Error::Degenerate("elbow starts at rank 0".into()));
        }
        Ok(LoffRange {
            language: language.to_string(),
            k0,
            k1,
            k0_kw: k0 as f64 / 1000.0,
            k1_kw: k1 as f64 / 1000.0,
        })
    }

    pub fn contains_rank(&self, rank: usize) -> bool {
        self.k0 <= rank && rank <= self.k1
    }
}

/// True iff the word is ranked in the lexicon and k0 ≤ rank ≤ k1.
pub fn loff_membership(word: &str, lexicon: &FrequencyLexicon, range: &LoffRange) -> bool {
    lexicon.rank(word).is_some_and(|r| range.contains_rank(r))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub smoother: SmootherConfig,
    pub sensitivity: f64,
    /// Ranks up to `dense_limit` above the first rank are evaluated at every
    /// rank; beyond it on a log-spaced grid of `log_points` points.
    pub dense_limit: usize,
    pub log_points: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            smoother: SmootherConfig::default(),
            sensitivity: 1.0,
            dense_limit: 10_000,
            log_points: 2000,
        }
    }
}

/// Evaluation grid: unit steps up to the dense limit, log-spaced beyond.
pub fn detection_grid(lo: f64, hi: f64, dense_limit: usize, log_points: usize) -> Vec<f64> {
    let lo_i = lo.ceil() as i64;
    let hi_i = hi.floor() as i64;
    let dense_end = hi_i.min(lo_i + dense_limit as i64 - 1);
    let mut grid: Vec<f64> = (lo_i..=dense_end).map(|r| r as f64).collect();
    if hi_i > dense_end {
        let a = (dense_end as f64 + 1.0).ln();
        let b = (hi_i as f64).ln();
        for i in 0..log_points {
            let r = (a + (b - a) * i as f64 / (log_points - 1).max(1) as f64)
                .exp()
                .round();
            if r > *grid.last().unwrap() && r <= hi_i as f64 {
                grid.push(r);
            }
        }
        if *grid.last().unwrap() < hi_i as f64 {
            grid.push(hi_i as f64);
        }
    }
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoffDetection {
    pub range: LoffRange,
    /// Smoothing parameters used for the curvature and Kneedle fits.
    pub lambda_curvature: f64,
    pub lambda_kneedle: f64,
    pub fold_seed: u64,
}

/// Detects [k0, k1]: k0 = maximum curvature of the one-SE smooth (restricted to
/// ranks ≤ k1), k1 = Kneedle on the CV-optimal smooth.
pub fn detect_loff_range(curve: &PopularityCurve, cfg: &DetectConfig) -> Result<LoffDetection> {
    let xs = curve.ranks();
    let ys = curve.values();
    let path = SmoothingPath::new(&xs, &ys, &cfg.smoother)?;
    let fit_knee = path.select(LambdaRule::MinCv)?;
    let fit_curv = path.select(LambdaRule::OneSe)?;
    if fit_knee.degenerate {
        return Err(Error::NoElbow);
    }
    let grid = detection_grid(xs[0], xs[xs.len() - 1], cfg.dense_limit, cfg.log_points);
    let values: Vec<f64> = grid.iter().map(|&x| fit_knee.value(x)).collect();
    let knee = kneedle_point(&grid, &values, cfg.sensitivity, KneeShape::ConvexDecreasing)?;
    let mut kappa = knee::curvature_profile(&fit_curv, &grid, CurvatureFrame::UnitSquare);
    kappa.truncate(knee.index + 1);
    let i0 = knee::argmax_curvature(&kappa)?;
    let range = LoffRange::new(&curve.language, grid[i0] as usize, knee.x as usize)?;
    Ok(LoffDetection {
        range,
        lambda_curvature: fit_curv.lambda,
        lambda_kneedle: fit_knee.lambda,
        fold_seed: cfg.smoother.seed,
    })
}
