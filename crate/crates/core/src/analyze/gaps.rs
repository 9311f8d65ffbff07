//! Female-male gaps and within-country regional disparity.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{GenderPair, RegionGroup, UserLoffStat};
use crate::corpus::Gender;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{mean, norm_ppf, quantile_linear, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    FemaleFavoring,
    MaleFavoring,
    None,
}

impl Significance {
    pub fn as_str(self) -> &'static str {
        match self {
            Significance::FemaleFavoring => "female_favoring",
            Significance::MaleFavoring => "male_favoring",
            Significance::None => "none",
        }
    }
}

/// What a gap is tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapNull {
    /// The country's own user-bootstrap interval must exclude zero.
    #[default]
    WithinCountry,
    /// The standardized gap must fall outside the central 95% of a standard
    /// normal, i.e. outside the spread of gaps across countries.
    CrossCountry,
}

/// Which countries the z-scores are standardized over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    /// Every gap-eligible country.
    #[default]
    AllEligible,
    /// Only countries that received a bootstrap interval.
    WithIntervals,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub null: GapNull,
    pub standardize: Standardize,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig {
            replicates: 1000,
            seed: 0,
            null: GapNull::default(),
            standardize: Standardize::default(),
        }
    }
}

/// User-level values of one country, each gender in user-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct GenderUsers {
    pub female: Vec<f64>,
    pub male: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapInput {
    pub country: String,
    pub language: String,
    pub female_w_bar: f64,
    pub male_w_bar: f64,
    /// `None` when user-level intermediates were not kept.
    pub users: Option<GenderUsers>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderGapRecord {
    pub country: String,
    pub language: String,
    /// Female minus male on the normalized scale.
    pub raw_gap: f64,
    pub z_gap: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub significance: Significance,
    pub bootstrap_unavailable: bool,
}

/// Builds gap inputs for the eligible pairs. With `users`, each country also
/// carries its user-level values for the bootstrap.
pub fn gap_inputs(pairs: &[GenderPair], users: Option<&[UserLoffStat]>) -> Vec<GapInput> {
    let mut by_country: BTreeMap<(&str, &str), Vec<&UserLoffStat>> = BTreeMap::new();
    if let Some(users) = users {
        for u in users {
            by_country
                .entry((u.country.as_str(), u.language.as_str()))
                .or_default()
                .push(u);
        }
    }
    pairs
        .iter()
        .filter(|p| p.eligible)
        .map(|p| {
            let users = users.map(|_| {
                let mut rows = by_country
                    .get(&(p.country.as_str(), p.language.as_str()))
                    .cloned()
                    .unwrap_or_default();
                rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
                let pick = |g: Gender| {
                    rows.iter()
                        .filter(|u| u.gender == g)
                        .map(|u| u.w_u)
                        .collect()
                };
                GenderUsers {
                    female: pick(Gender::Female),
                    male: pick(Gender::Male),
                }
            });
            GapInput {
                country: p.country.clone(),
                language: p.language.clone(),
                female_w_bar: p.female.w_bar().expect("eligible pair is released"),
                male_w_bar: p.male.w_bar().expect("eligible pair is released"),
                users,
            }
        })
        .collect()
}

fn resample_mean(rng: &mut impl Rng, xs: &[f64]) -> f64 {
    let n = xs.len();
    (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

fn bootstrap_gap<F>(
    input: &GapInput,
    users: &GenderUsers,
    scale: &F,
    cfg: &GapConfig,
) -> Result<(f64, f64)>
where
    F: Fn(f64, &str) -> Result<f64> + Sync,
{
    if users.female.is_empty() || users.male.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: bootstrap source has no users for one gender",
            input.country
        )));
    }
    let stream = format!("gender-gap/{}/{}", input.country, input.language);
    let lang = input.language.as_str();
    let mut reps = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(cfg.seed, &stream, b);
            let f = resample_mean(&mut rng, &users.female);
            let m = resample_mean(&mut rng, &users.male);
            Ok(scale(f, lang)? - scale(m, lang)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    reps.sort_by(f64::total_cmp);
    Ok((quantile_linear(&reps, 0.025), quantile_linear(&reps, 0.975)))
}

/// Gender gaps for gap-eligible countries.
///
/// `scale` maps a raw population mean to the normalized scale for the
/// country's language.
pub fn gender_gap<F>(inputs: &[GapInput], scale: F, cfg: &GapConfig) -> Result<Vec<GenderGapRecord>>
where
    F: Fn(f64, &str) -> Result<f64> + Sync,
{
    if cfg.replicates == 0 {
        return Err(Error::Config(
            "gap bootstrap needs at least one replicate".into(),
        ));
    }
    let mut out = Vec::with_capacity(inputs.len());
    for input in inputs {
        let raw_gap =
            scale(input.female_w_bar, &input.language)? - scale(input.male_w_bar, &input.language)?;
        let ci = match &input.users {
            Some(u) => Some(bootstrap_gap(input, u, &scale, cfg)?),
            None => None,
        };
        out.push(GenderGapRecord {
            country: input.country.clone(),
            language: input.language.clone(),
            raw_gap,
            z_gap: None,
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
            significance: Significance::None,
            bootstrap_unavailable: ci.is_none(),
        });
    }
    standardize(&mut out, cfg.standardize);
    for r in &mut out {
        r.significance = match cfg.null {
            GapNull::WithinCountry => match (r.ci_low, r.ci_high) {
                (Some(lo), _) if lo > 0.0 => Significance::FemaleFavoring,
                (_, Some(hi)) if hi < 0.0 => Significance::MaleFavoring,
                _ => Significance::None,
            },
            GapNull::CrossCountry => {
                let crit = norm_ppf(0.975);
                match r.z_gap {
                    Some(z) if z > crit => Significance::FemaleFavoring,
                    Some(z) if z < -crit => Significance::MaleFavoring,
                    _ => Significance::None,
                }
            }
        };
    }
    Ok(out)
}

fn standardize(records: &mut [GenderGapRecord], over: Standardize) {
    let pool: Vec<f64> = records
        .iter()
        .filter(|r| over == Standardize::AllEligible || r.ci_low.is_some())
        .map(|r| r.raw_gap)
        .collect();
    if pool.len() < 2 {
        return;
    }
    let (m, sd) = (mean(&pool), sample_sd(&pool));
    if !(sd > 0.0) {
        return;
    }
    for r in records {
        r.z_gap = Some((r.raw_gap - m) / sd);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalDisparityRecord {
    pub country: String,
    pub language: String,
    pub disparity: f64,
    pub n_regions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalInput {
    pub country: String,
    pub language: String,
    /// Normalized values of released regions.
    pub values: Vec<f64>,
}

/// Maps released regional means through `scale`; groups with fewer than two
/// released regions are left out.
pub fn regional_inputs<F>(groups: &[RegionGroup], scale: F) -> Result<Vec<RegionalInput>>
where
    F: Fn(f64, &str) -> Result<f64>,
{
    groups
        .iter()
        .filter(|g| g.eligible)
        .map(|g| {
            let values = g
                .regions
                .iter()
                .filter_map(|r| r.w_bar())
                .map(|w| scale(w, &g.language))
                .collect::<Result<Vec<f64>>>()?;
            Ok(RegionalInput {
                country: g.country.clone(),
                language: g.language.clone(),
                values,
            })
        })
        .collect()
}

/// Sample standard deviation of regional values; countries with fewer than
/// two regions are excluded.
pub fn regional_disparity(inputs: &[RegionalInput]) -> Vec<RegionalDisparityRecord> {
    inputs
        .iter()
        .filter(|r| r.values.len() >= 2)
        .map(|r| {
            let first = r.values[0];
            let disparity = if r.values.iter().all(|v| *v == first) {
                0.0
            } else {
                sample_sd(&r.values)
            };
            RegionalDisparityRecord {
                country: r.country.clone(),
                language: r.language.clone(),
                disparity,
                n_regions: r.values.len(),
            }
        })
        .collect()
}
