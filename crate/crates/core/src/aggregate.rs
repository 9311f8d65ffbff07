//! Per-user relative LoFF counts and privacy-thresholded group aggregates.
//!
//! Per-user statistics deliberately have no serialized form: only
//! [`PopulationAggregate`] rows leave this module, and a suppressed row
//! carries nothing but its key.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, UserProfile, UserSummary};
use crate::error::{Error, Result};
use crate::lexicon::{loff_membership, FrequencyLexicon, LoffRange};
use crate::stats::ExactSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub min_group_size: u64,
    pub heavy_poster_quantile: f64,
    pub drop_intermediates: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            min_group_size: 1000,
            heavy_poster_quantile: 0.75,
            drop_intermediates: true,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.heavy_poster_quantile > 0.0 && self.heavy_poster_quantile < 1.0) {
            return Err(Error::Config(format!(
                "heavy_poster_quantile must lie in (0, 1), got {}",
                self.heavy_poster_quantile
            )));
        }
        if self.min_group_size == 0 {
            return Err(Error::Config("min_group_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A user's relative LoFF count `w_u` = distinct LoFF words / posts.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLoffStat {
    pub user_id: String,
    pub country: String,
    pub region: Option<String>,
    pub gender: Gender,
    pub language: String,
    pub post_count: u32,
    pub w_u: f64,
}

fn stat(
    user_id: &str,
    country: &str,
    region: &Option<String>,
    gender: Gender,
    language: &str,
    post_count: u32,
    loff_words: usize,
) -> Result<UserLoffStat> {
    if post_count == 0 {
        return Err(Error::EmptyUser);
    }
    Ok(UserLoffStat {
        user_id: user_id.to_string(),
        country: country.to_string(),
        region: region.clone(),
        gender,
        language: language.to_string(),
        post_count,
        w_u: loff_words as f64 / post_count as f64,
    })
}

pub fn user_loff_stat(
    summary: &UserSummary,
    lexicon: &FrequencyLexicon,
    range: &LoffRange,
) -> Result<UserLoffStat> {
    let loff = summary
        .unique_unigrams
        .iter()
        .filter(|w| loff_membership(w, lexicon, range))
        .count();
    stat(
        &summary.user_id,
        &summary.country,
        &summary.region,
        summary.gender,
        &summary.language,
        summary.post_count,
        loff,
    )
}

/// Same statistic from the compact rank-set form.
pub fn profile_loff_stat(profile: &UserProfile, range: &LoffRange) -> Result<UserLoffStat> {
    stat(
        &profile.user_id,
        &profile.country,
        &profile.region,
        profile.gender,
        &profile.language,
        profile.post_count,
        profile.count_in(range.k0, range.k1),
    )
}

/// Nearest-rank `q`-quantile of post counts per (country, language).
pub fn heavy_poster_thresholds(stats: &[UserLoffStat], q: f64) -> BTreeMap<(String, String), u32> {
    let mut counts: BTreeMap<(String, String), Vec<u32>> = BTreeMap::new();
    for s in stats {
        counts
            .entry((s.country.clone(), s.language.clone()))
            .or_default()
            .push(s.post_count);
    }
    counts
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_unstable();
            let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
            (k, v[idx - 1])
        })
        .collect()
}

/// Drops users whose post count is strictly above their population's
/// threshold.
pub fn apply_thresholds(
    stats: Vec<UserLoffStat>,
    thresholds: &BTreeMap<(String, String), u32>,
) -> Vec<UserLoffStat> {
    stats
        .into_iter()
        .filter(|s| {
            thresholds
                .get(&(s.country.clone(), s.language.clone()))
                .is_none_or(|&t| s.post_count <= t)
        })
        .collect()
}

/// Removes heavy posters: users above the nearest-rank `q`-quantile of post
/// counts within their (country, language) population.
pub fn exclude_heavy_posters(stats: Vec<UserLoffStat>, q: f64) -> Vec<UserLoffStat> {
    let t = heavy_poster_thresholds(&stats, q);
    apply_thresholds(stats, &t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupBy {
    pub gender: bool,
    pub region: bool,
}

impl GroupBy {
    pub const COUNTRY: GroupBy = GroupBy {
        gender: false,
        region: false,
    };
    pub const GENDER: GroupBy = GroupBy {
        gender: true,
        region: false,
    };
    pub const REGION: GroupBy = GroupBy {
        gender: false,
        region: true,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub country: String,
    pub language: String,
    pub gender: Option<Gender>,
    pub region: Option<String>,
}

impl GroupKey {
    fn of(s: &UserLoffStat, by: GroupBy) -> Option<GroupKey> {
        let region = if by.region {
            Some(s.region.clone()?)
        } else {
            None
        };
        Some(GroupKey {
            country: s.country.clone(),
            language: s.language.clone(),
            gender: by.gender.then_some(s.gender),
            region,
        })
    }
}

/// Mergeable exact accumulator for one group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupAccumulator {
    n: u64,
    sum: ExactSum,
    sum_sq: ExactSum,
    min: Option<f64>,
    max: Option<f64>,
}

impl GroupAccumulator {
    pub fn add(&mut self, w: f64) {
        self.n += 1;
        self.sum.add(w);
        self.sum_sq.add_product(w, w);
        self.min = Some(self.min.map_or(w, |m| m.min(w)));
        self.max = Some(self.max.map_or(w, |m| m.max(w)));
    }

    pub fn merge(&mut self, other: &GroupAccumulator) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.min = match (self.min, other.min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.max = match (self.max, other.max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Mean and n−1 standard deviation; the sd is 0 for a single user.
    fn moments(&self) -> (f64, f64) {
        let (lo, hi) = (self.min.unwrap_or(0.0), self.max.unwrap_or(0.0));
        let n = self.n as f64;
        if lo == hi {
            return (lo, 0.0);
        }
        let mean = (self.sum.value() / n).clamp(lo, hi);
        // n·Σw² − (Σw)², formed exactly
        let mut d = ExactSum::new();
        for &p in self.sum_sq.partials() {
            d.add_product(n, p);
        }
        let s = self.sum.partials();
        for &a in s {
            for &b in s {
                d.add_product(-a, b);
            }
        }
        let var = (d.value() / (n * (n - 1.0))).max(0.0);
        (mean, var.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroupStats {
    Released { n_users: u64, w_bar: f64, w_sd: f64 },
    Suppressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationAggregate {
    pub key: GroupKey,
    pub stats: GroupStats,
}

impl PopulationAggregate {
    pub fn suppressed(&self) -> bool {
        matches!(self.stats, GroupStats::Suppressed)
    }

    pub fn w_bar(&self) -> Option<f64> {
        match self.stats {
            GroupStats::Released { w_bar, .. } => Some(w_bar),
            GroupStats::Suppressed => None,
        }
    }

    pub fn n_users(&self) -> Option<u64> {
        match self.stats {
            GroupStats::Released { n_users, .. } => Some(n_users),
            GroupStats::Suppressed => None,
        }
    }

    fn from_acc(key: GroupKey, acc: &GroupAccumulator, min_group_size: u64) -> Self {
        let stats = if acc.n < min_group_size {
            GroupStats::Suppressed
        } else {
            let (w_bar, w_sd) = acc.moments();
            GroupStats::Released {
                n_users: acc.n,
                w_bar,
                w_sd,
            }
        };
        PopulationAggregate { key, stats }
    }
}

/// Shard-level partial aggregation; shards merge exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialAggregate {
    by: GroupBy,
    groups: BTreeMap<GroupKey, GroupAccumulator>,
}

impl PartialAggregate {
    pub fn new(by: GroupBy) -> Self {
        PartialAggregate {
            by,
            groups: BTreeMap::new(),
        }
    }

    /// Users without a region are skipped when grouping by region.
    pub fn add(&mut self, s: &UserLoffStat) {
        if let Some(key) = GroupKey::of(s, self.by) {
            self.groups.entry(key).or_default().add(s.w_u);
        }
    }

    pub fn merge(&mut self, other: &PartialAggregate) {
        assert_eq!(
            self.by, other.by,
            "merging aggregates with different groupings"
        );
        for (k, acc) in &other.groups {
            self.groups.entry(k.clone()).or_default().merge(acc);
        }
    }

    pub fn finish(&self, cfg: &AggregationConfig) -> Vec<PopulationAggregate> {
        self.groups
            .iter()
            .map(|(k, acc)| PopulationAggregate::from_acc(k.clone(), acc, cfg.min_group_size))
            .collect()
    }
}

/// Aggregates per group key; expects heavy posters to be excluded already.
pub fn aggregate_population(
    stats: &[UserLoffStat],
    by: GroupBy,
    cfg: &AggregationConfig,
) -> Vec<PopulationAggregate> {
    let mut p = PartialAggregate::new(by);
    for s in stats {
        p.add(s);
    }
    p.finish(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderPair {
    pub country: String,
    pub language: String,
    pub female: PopulationAggregate,
    pub male: PopulationAggregate,
    /// Both groups released.
    pub eligible: bool,
}

/// Female and male aggregates per (country, language); other labels are
/// left out of the gender analysis.
pub fn disaggregate_gender(stats: &[UserLoffStat], cfg: &AggregationConfig) -> Vec<GenderPair> {
    let binary: Vec<UserLoffStat> = stats
        .iter()
        .filter(|s| matches!(s.gender, Gender::Female | Gender::Male))
        .cloned()
        .collect();
    let aggs = aggregate_population(&binary, GroupBy::GENDER, cfg);
    let mut by_country: BTreeMap<(String, String), [Option<PopulationAggregate>; 2]> =
        BTreeMap::new();
    for a in aggs {
        let slot = usize::from(a.key.gender == Some(Gender::Male));
        let key = (a.key.country.clone(), a.key.language.clone());
        by_country.entry(key).or_default()[slot] = Some(a);
    }
    by_country
        .into_iter()
        .map(|((country, language), [f, m])| {
            let empty = |g| PopulationAggregate {
                key: GroupKey {
                    country: country.clone(),
                    language: language.clone(),
                    gender: Some(g),
                    region: None,
                },
                stats: GroupStats::Suppressed,
            };
            let female = f.unwrap_or_else(|| empty(Gender::Female));
            let male = m.unwrap_or_else(|| empty(Gender::Male));
            let eligible = !female.suppressed() && !male.suppressed();
            GenderPair {
                country,
                language,
                female,
                male,
                eligible,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGroup {
    pub country: String,
    pub language: String,
    pub regions: Vec<PopulationAggregate>,
    /// At least two regions released.
    pub eligible: bool,
}

pub fn disaggregate_region(stats: &[UserLoffStat], cfg: &AggregationConfig) -> Vec<RegionGroup> {
    let mut groups: BTreeMap<(String, String), Vec<PopulationAggregate>> = BTreeMap::new();
    for s in stats {
        groups
            .entry((s.country.clone(), s.language.clone()))
            .or_default();
    }
    for a in aggregate_population(stats, GroupBy::REGION, cfg) {
        groups
            .get_mut(&(a.key.country.clone(), a.key.language.clone()))
            .expect("group seen")
            .push(a);
    }
    groups
        .into_iter()
        .map(|((country, language), regions)| {
            let eligible = regions.iter().filter(|r| !r.suppressed()).count() >= 2;
            RegionGroup {
                country,
                language,
                regions,
                eligible,
            }
        })
        .collect()
}

/// CSV of aggregates; suppressed rows carry the key and the flag only.
pub fn write_aggregates_csv(
    out: &mut impl Write,
    aggs: &[PopulationAggregate],
) -> std::io::Result<()> {
    writeln!(
        out,
        "country,language,gender,region,n_users,w_bar,w_sd,suppressed"
    )?;
    for a in aggs {
        let k = &a.key;
        let gender = k.gender.map_or("", |g| g.as_str());
        let region = k.region.as_deref().unwrap_or("");
        match a.stats {
            GroupStats::Released {
                n_users,
                w_bar,
                w_sd,
            } => writeln!(
                out,
                "{},{},{gender},{region},{n_users},{w_bar},{w_sd},false",
                k.country, k.language
            )?,
            GroupStats::Suppressed => writeln!(
                out,
                "{},{},{gender},{region},,,,true",
                k.country, k.language
            )?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn s(country: &str, gender: Gender, region: Option<&str>, posts: u32, w: f64) -> UserLoffStat {
        UserLoffStat {
            user_id: format!("{country}-{posts}-{w}"),
            country: country.into(),
            region: region.map(Into::into),
            gender,
            language: "en".into(),
            post_count: posts,
            w_u: w,
        }
    }

    fn cfg(min: u64) -> AggregationConfig {
        AggregationConfig {
            min_group_size: min,
            ..Default::default()
        }
    }

    #[test]
    fn user_stat_examples() {
        let lex = FrequencyLexicon::from_entries(
            "en",
            (0..20).map(|i| (format!("w{i}"), 100 - i as u64)).collect(),
        )
        .unwrap();
        let range = LoffRange::new("en", 5, 14).unwrap();
        let words: BTreeSet<String> = ["w0", "w5", "w6", "w7", "w8", "w9", "w10", "zzz"]
            .iter()
            .map(|w| w.to_string())
            .collect();
        let sum = UserSummary {
            user_id: "u".into(),
            country: "GB".into(),
            region: None,
            gender: Gender::Female,
            language: "en".into(),
            post_count: 4,
            unique_unigrams: words,
        };
        assert_eq!(user_loff_stat(&sum, &lex, &range).unwrap().w_u, 1.5);
        let prof = UserProfile::from_summary(&sum, &lex);
        assert_eq!(profile_loff_stat(&prof, &range).unwrap().w_u, 1.5);
        // a word used in every one of 10 posts still counts once
        let once = UserSummary {
            post_count: 10,
            unique_unigrams: ["w7".to_string()].into(),
            ..sum.clone()
        };
        assert_eq!(user_loff_stat(&once, &lex, &range).unwrap().w_u, 0.1);
        let none = UserSummary {
            unique_unigrams: ["w0".to_string()].into(),
            ..sum.clone()
        };
        assert_eq!(user_loff_stat(&none, &lex, &range).unwrap().w_u, 0.0);
        let empty = UserSummary {
            post_count: 0,
            ..sum
        };
        assert!(user_loff_stat(&empty, &lex, &range).is_err());
    }

    #[test]
    fn heavy_poster_examples() {
        let v: Vec<_> = [1, 1, 2, 10]
            .iter()
            .map(|&p| s("GB", Gender::Male, None, p, 0.1))
            .collect();
        let t = heavy_poster_thresholds(&v, 0.75);
        assert_eq!(t[&("GB".to_string(), "en".to_string())], 2);
        let kept = exclude_heavy_posters(v, 0.75);
        assert_eq!(
            kept.iter().map(|s| s.post_count).collect::<Vec<_>>(),
            vec![1, 1, 2]
        );
        let same: Vec<_> = (0..5)
            .map(|_| s("GB", Gender::Male, None, 3, 0.1))
            .collect();
        assert_eq!(exclude_heavy_posters(same, 0.75).len(), 5);
        assert_eq!(
            exclude_heavy_posters(vec![s("GB", Gender::Male, None, 99, 0.1)], 0.75).len(),
            1
        );
        // scoped per population
        let mixed = vec![
            s("GB", Gender::Male, None, 50, 0.1),
            s("FR", Gender::Male, None, 1, 0.1),
        ];
        assert_eq!(exclude_heavy_posters(mixed, 0.75).len(), 2);
    }

    #[test]
    fn suppression_boundary() {
        let mk = |n: usize| -> Vec<UserLoffStat> {
            (0..n)
                .map(|i| s("GB", Gender::Male, None, 1, i as f64))
                .collect()
        };
        assert!(!aggregate_population(&mk(1000), GroupBy::COUNTRY, &cfg(1000))[0].suppressed());
        let a = &aggregate_population(&mk(999), GroupBy::COUNTRY, &cfg(1000))[0];
        assert!(a.suppressed() && a.n_users().is_none() && a.w_bar().is_none());
    }

    #[test]
    fn constant_group_has_zero_sd() {
        let v: Vec<_> = (0..7)
            .map(|_| s("GB", Gender::Male, None, 1, 0.2))
            .collect();
        let a = &aggregate_population(&v, GroupBy::COUNTRY, &cfg(1))[0];
        assert_eq!(
            a.stats,
            GroupStats::Released {
                n_users: 7,
                w_bar: 0.2,
                w_sd: 0.0
            }
        );
    }

    #[test]
    fn moments_match_two_pass() {
        let ws = [0.3, 1.7, 0.0, 2.25, 0.9, 1.1];
        let v: Vec<_> = ws
            .iter()
            .map(|&w| s("GB", Gender::Male, None, 1, w))
            .collect();
        let GroupStats::Released { w_bar, w_sd, .. } =
            aggregate_population(&v, GroupBy::COUNTRY, &cfg(1))[0].stats
        else {
            panic!()
        };
        assert!((w_bar - crate::stats::mean(&ws)).abs() < 1e-15);
        assert!((w_sd - crate::stats::sample_sd(&ws)).abs() < 1e-14);
    }

    #[test]
    fn gender_eligibility() {
        let mut v: Vec<_> = (0..1500)
            .map(|_| s("A", Gender::Female, None, 1, 0.1))
            .collect();
        v.extend((0..800).map(|_| s("A", Gender::Male, None, 1, 0.1)));
        v.extend((0..1000).map(|_| s("B", Gender::Female, None, 1, 0.1)));
        v.extend((0..1000).map(|_| s("B", Gender::Male, None, 1, 0.1)));
        v.extend((0..3000).map(|_| s("C", Gender::Unknown, None, 1, 0.1)));
        let pairs = disaggregate_gender(&v, &cfg(1000));
        let e: Vec<(String, bool)> = pairs
            .iter()
            .map(|p| (p.country.clone(), p.eligible))
            .collect();
        assert_eq!(e, vec![("A".into(), false), ("B".into(), true)]);
    }

    #[test]
    fn region_eligibility() {
        let mut v = Vec::new();
        for (r, n) in [("r1", 1200), ("r2", 1100), ("r3", 400)] {
            v.extend((0..n).map(|_| s("A", Gender::Male, Some(r), 1, 0.1)));
        }
        v.extend((0..1500).map(|_| s("B", Gender::Male, Some("r1"), 1, 0.1)));
        v.extend((0..3000).map(|_| s("C", Gender::Male, None, 1, 0.1)));
        let g = disaggregate_region(&v, &cfg(1000));
        let e: Vec<(String, bool)> = g.iter().map(|p| (p.country.clone(), p.eligible)).collect();
        assert_eq!(
            e,
            vec![("A".into(), true), ("B".into(), false), ("C".into(), false)]
        );
    }

    #[test]
    fn csv_hides_suppressed_statistics() {
        let mut v: Vec<_> = (0..3)
            .map(|i| s("A", Gender::Male, None, 1, 0.123456789 + i as f64))
            .collect();
        v.extend((0..5).map(|_| s("B", Gender::Male, None, 1, 0.5)));
        let aggs = aggregate_population(&v, GroupBy::COUNTRY, &cfg(4));
        let mut buf = Vec::new();
        write_aggregates_csv(&mut buf, &aggs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("A,en,,,,,,true"));
        assert!(!text.contains("0.123"));
        assert!(text.contains("B,en,,,5,0.5,0,false"));
    }

    proptest! {
        #[test]
        fn shard_merge_is_exact(ws in proptest::collection::vec((0u8..3, 0.0f64..50.0), 1..200), cuts in proptest::collection::vec(0usize..200, 0..6)) {
            let stats: Vec<_> = ws.iter().map(|&(c, w)| s(["A", "B", "C"][c as usize], Gender::Female, None, 1, w)).collect();
            let whole = aggregate_population(&stats, GroupBy::COUNTRY, &cfg(1));
            let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c.min(stats.len())).collect();
            cuts.push(0);
            cuts.push(stats.len());
            cuts.sort();
            let mut merged = PartialAggregate::new(GroupBy::COUNTRY);
            for w in cuts.windows(2).rev() {
                let mut p = PartialAggregate::new(GroupBy::COUNTRY);
                stats[w[0]..w[1]].iter().for_each(|x| p.add(x));
                merged.merge(&p);
            }
            prop_assert_eq!(merged.finish(&cfg(1)), whole);
        }

        #[test]
        fn mean_within_range_and_mixture(a in proptest::collection::vec(0.0f64..10.0, 1..50), b in proptest::collection::vec(0.0f64..10.0, 1..50)) {
            let mk = |ws: &[f64]| -> f64 {
                let v: Vec<_> = ws.iter().map(|&w| s("A", Gender::Male, None, 1, w)).collect();
                aggregate_population(&v, GroupBy::COUNTRY, &cfg(1))[0].w_bar().unwrap()
            };
            let (ma, mb) = (mk(&a), mk(&b));
            let all: Vec<f64> = a.iter().chain(&b).copied().collect();
            let m = mk(&all);
            // up to final rounding of each mean
            prop_assert!(m >= ma.min(mb) - 1e-13 && m <= ma.max(mb) + 1e-13);
            let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo && m <= hi);
        }

        #[test]
        fn exclusion_shrinks_and_is_idempotent(posts in proptest::collection::vec((0u8..2, 1u32..30), 1..80), q in 0.05f64..0.95) {
            let v: Vec<_> = posts.iter().map(|&(c, p)| s(["A", "B"][c as usize], Gender::Male, None, p, 0.1)).collect();
            let t = heavy_poster_thresholds(&v, q);
            let once = apply_thresholds(v.clone(), &t);
            prop_assert!(once.len() <= v.len());
            let twice = apply_thresholds(once.clone(), &t);
            prop_assert_eq!(once, twice);
        }
    }
}
