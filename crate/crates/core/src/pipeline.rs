//! Stage orchestration shared by the command-line tool, the acceptance suite
//! and the benchmarks: per-user statistics, country estimates with
//! leave-one-out calibration, and the gap analyses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate_population, disaggregate_gender, disaggregate_region, exclude_heavy_posters,
    profile_loff_stat, AggregationConfig, GroupBy, PopulationAggregate, UserLoffStat,
};
use crate::analyze::{
    gap_inputs, gender_gap, regional_disparity, regional_inputs, spearman_bootstrap,
    CorrelationReport, GapConfig, GenderGapRecord, RegionalDisparityRecord,
};
use crate::calibrate::{
    loo_calibrate, BenchmarkTable, CalibratedScale, CountryObservation, LooCalibration,
};
use crate::corpus::UserProfile;
use crate::error::{Error, Result};
use crate::lexicon::LoffRange;

/// Per-user LoFF statistics for every profile whose language has a range.
/// Returns the statistics and the number of profiles skipped.
pub fn user_stats(
    profiles: &[UserProfile],
    ranges: &[LoffRange],
) -> Result<(Vec<UserLoffStat>, usize)> {
    let by_lang: BTreeMap<&str, &LoffRange> =
        ranges.iter().map(|r| (r.language.as_str(), r)).collect();
    let mut out = Vec::with_capacity(profiles.len());
    let mut skipped = 0;
    for p in profiles {
        match by_lang.get(p.language.as_str()) {
            Some(r) => out.push(profile_loff_stat(p, r)?),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub aggregation: AggregationConfig,
    /// Countries with recorded Internet penetration below this are left out
    /// of calibration and scored with the full-sample fit.
    pub min_internet: f64,
    /// Country to language; countries not listed use their largest language.
    pub representative_language: BTreeMap<String, String>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            aggregation: AggregationConfig::default(),
            min_internet: 0.25,
            representative_language: BTreeMap::new(),
            replicates: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    LowInternet,
    NoBenchmark,
}

impl Exclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Exclusion::LowInternet => "low_internet",
            Exclusion::NoBenchmark => "no_benchmark",
        }
    }
}

/// Headline estimate for one country in its representative language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryEstimate {
    pub country: String,
    pub language: String,
    pub n_users: u64,
    pub raw: f64,
    pub olle: f64,
    /// Leave-one-out prediction (training country) or full-sample fit.
    pub in_training: bool,
    pub exclusion: Option<Exclusion>,
    /// Users of the representative language over all released users of the
    /// country.
    pub language_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    /// Every (country, language) population, suppressed ones flagged.
    pub aggregates: Vec<PopulationAggregate>,
    pub calibration: LooCalibration,
    pub countries: Vec<CountryEstimate>,
    /// Spearman of OLLE against the benchmark over training countries.
    pub validation: CorrelationReport,
    /// Countries whose representative population was suppressed.
    pub suppressed_countries: Vec<String>,
}

impl Estimate {
    pub fn representative(&self) -> BTreeMap<String, String> {
        self.countries
            .iter()
            .map(|c| (c.country.clone(), c.language.clone()))
            .collect()
    }
}

/// Chooses each country's language: the configured one, else the one with
/// most users before suppression (ties to the alphabetically first).
fn representative(
    stats: &[UserLoffStat],
    fixed: &BTreeMap<String, String>,
) -> BTreeMap<String, String> {
    let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for s in stats {
        *counts
            .entry(&s.country)
            .or_default()
            .entry(&s.language)
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(country, langs)| {
            let lang = fixed.get(country).cloned().unwrap_or_else(|| {
                let mut best = ("", 0);
                for (l, n) in langs {
                    if n > best.1 {
                        best = (l, n);
                    }
                }
                best.0.to_string()
            });
            (country.to_string(), lang)
        })
        .collect()
}

/// Aggregation, representative-language choice, leave-one-out calibration
/// on the Internet-qualified benchmark countries and scoring of the rest.
///
/// `stats` are all users' statistics; heavy posters are removed here.
pub fn estimate(
    stats: Vec<UserLoffStat>,
    bench: &BenchmarkTable,
    cfg: &EstimateConfig,
) -> Result<Estimate> {
    cfg.aggregation.validate()?;
    if !(0.0..=1.0).contains(&cfg.min_internet) {
        return Err(Error::Config(format!(
            "min_internet must lie in [0, 1], got {}",
            cfg.min_internet
        )));
    }
    if stats.is_empty() {
        return Err(Error::NoUsers);
    }
    let kept = exclude_heavy_posters(stats, cfg.aggregation.heavy_poster_quantile);
    let aggregates = aggregate_population(&kept, GroupBy::COUNTRY, &cfg.aggregation);
    let released: Vec<&PopulationAggregate> =
        aggregates.iter().filter(|a| !a.suppressed()).collect();
    if released.is_empty() {
        return Err(Error::AllSuppressed {
            suppressed: aggregates.len(),
            users: kept.len(),
        });
    }
    let rep = representative(&kept, &cfg.representative_language);
    let mut released_users: BTreeMap<&str, u64> = BTreeMap::new();
    for a in &released {
        *released_users.entry(&a.key.country).or_default() += a.n_users().expect("released");
    }

    let qualified = bench.with_min_internet(cfg.min_internet);
    let mut obs = Vec::new();
    let mut chosen = Vec::new();
    let mut suppressed_countries = Vec::new();
    for (country, language) in &rep {
        let Some(a) = released
            .iter()
            .find(|a| &a.key.country == country && &a.key.language == language)
        else {
            suppressed_countries.push(country.clone());
            continue;
        };
        let raw = a.w_bar().expect("released");
        let n = a.n_users().expect("released");
        let exclusion = match (bench.rows.get(country), qualified.rows.get(country)) {
            (None, _) => Some(Exclusion::NoBenchmark),
            (Some(_), None) => Some(Exclusion::LowInternet),
            (Some(_), Some(row)) => {
                obs.push(CountryObservation {
                    country: country.clone(),
                    language: language.clone(),
                    raw,
                    benchmark: row.literacy_rate,
                });
                None
            }
        };
        chosen.push((
            country.clone(),
            language.clone(),
            raw,
            n,
            exclusion,
            n as f64 / released_users[country.as_str()] as f64,
        ));
    }
    if obs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "only {} calibration countries after exclusions; at least 2 are needed",
            obs.len()
        )));
    }
    let calibration = loo_calibrate(&obs)?;
    let loo: BTreeMap<&str, f64> = calibration
        .table
        .iter()
        .map(|r| (r.country.as_str(), r.olle))
        .collect();
    let countries = chosen
        .into_iter()
        .map(
            |(country, language, raw, n_users, exclusion, language_share)| {
                let (olle, in_training) = match loo.get(country.as_str()) {
                    Some(v) => (*v, true),
                    None => (calibration.scale.olle(raw, &language)?, false),
                };
                Ok(CountryEstimate {
                    country,
                    language,
                    n_users,
                    raw,
                    olle,
                    in_training,
                    exclusion,
                    language_share,
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let olle: Vec<f64> = calibration.table.iter().map(|r| r.olle).collect();
    let truth: Vec<f64> = calibration
        .table
        .iter()
        .map(|r| bench.rows[&r.country].literacy_rate)
        .collect();
    let validation = spearman_bootstrap(&olle, &truth, cfg.replicates, cfg.seed)?;
    Ok(Estimate {
        aggregates,
        calibration,
        countries,
        validation,
        suppressed_countries,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GapsOutput {
    pub gender: Vec<GenderGapRecord>,
    pub disparity: Vec<RegionalDisparityRecord>,
}

/// Gender gaps and regional disparities in each country's representative
/// language, on the calibrated scale.
///
/// With `bootstrap` false the user-level values are treated as discarded and
/// gender gaps carry no interval.
pub fn gaps(
    stats: Vec<UserLoffStat>,
    scale: &CalibratedScale,
    representative: &BTreeMap<String, String>,
    aggregation: &AggregationConfig,
    gap: &GapConfig,
    bootstrap: bool,
) -> Result<GapsOutput> {
    aggregation.validate()?;
    let kept: Vec<UserLoffStat> = exclude_heavy_posters(stats, aggregation.heavy_poster_quantile)
        .into_iter()
        .filter(|s| representative.get(&s.country) == Some(&s.language))
        .collect();
    let olle = |w: f64, lang: &str| scale.olle(w, lang);
    let pairs = disaggregate_gender(&kept, aggregation);
    let inputs = gap_inputs(&pairs, bootstrap.then_some(kept.as_slice()));
    let gender = gender_gap(&inputs, olle, gap)?;
    let regions = disaggregate_region(&kept, aggregation);
    let disparity = regional_disparity(&regional_inputs(&regions, olle)?);
    Ok(GapsOutput { gender, disparity })
}

/// Weighted mean over the countries present in both maps, with the
/// countries that had no weight.
pub fn population_weighted_mean(
    values: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<(Option<f64>, Vec<String>)> {
    if let Some((c, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "population weight for {c} is {w}"
        )));
    }
    let mut missing = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (c, v) in values {
        match weights.get(c) {
            Some(w) => {
                num += w * v;
                den += w;
            }
            None => missing.push(c.clone()),
        }
    }
    Ok(((den > 0.0).then(|| num / den), missing))
}
