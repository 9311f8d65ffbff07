//! Rank-based normalization, language fixed-effect calibration against
//! benchmark literacy rates, and leave-one-out OLLE estimates.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ols::{fit_ols, Design, OlsFit};
use crate::stats::{average_ranks, norm_ppf, spearman};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub literacy_rate: f64,
    pub schooling_years: Option<f64>,
    pub internet_penetration: Option<f64>,
}

/// Official literacy rates (fractions in [0, 1]) keyed by country.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: BTreeMap<String, BenchmarkRow>,
}

impl BenchmarkTable {
    /// CSV with header `country,literacy_rate[,schooling_years][,internet_penetration]`;
    /// `#` lines are comments and empty optional cells are missing values.
    pub fn read_csv(reader: impl Read, path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let mut header: Option<Vec<String>> = None;
        let mut rows = BTreeMap::new();
        for (i, line) in &mut lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            let Some(h) = &header else {
                if !fields.contains(&"country") || !fields.contains(&"literacy_rate") {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        "header needs country and literacy_rate",
                    ));
                }
                header = Some(fields.iter().map(|s| s.to_string()).collect());
                continue;
            };
            let get = |name: &str| {
                h.iter()
                    .position(|c| c == name)
                    .and_then(|j| fields.get(j).copied())
            };
            let num = |name: &str| -> Result<Option<f64>> {
                match get(name) {
                    None | Some("") => Ok(None),
                    Some(v) => v
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(Some)
                        .ok_or_else(|| Error::parse(path, i + 1, format!("bad {name} {v:?}"))),
                }
            };
            let country = get("country")
                .filter(|c| !c.is_empty())
                .ok_or_else(|| Error::parse(path, i + 1, "missing country"))?
                .to_string();
            let literacy_rate = num("literacy_rate")?
                .ok_or_else(|| Error::parse(path, i + 1, "missing literacy_rate"))?;
            if !(0.0..=1.0).contains(&literacy_rate) {
                return Err(Error::parse(path, i + 1, "literacy_rate outside [0, 1]"));
            }
            let internet_penetration = num("internet_penetration")?;
            if internet_penetration.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "internet_penetration outside [0, 1]",
                ));
            }
            let row = BenchmarkRow {
                literacy_rate,
                schooling_years: num("schooling_years")?,
                internet_penetration,
            };
            if rows.insert(country.clone(), row).is_some() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("duplicate country {country}"),
                ));
            }
        }
        Ok(BenchmarkTable { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, path)
    }

    /// Drops countries whose recorded Internet penetration is below `min`;
    /// countries without a recorded value are kept.
    pub fn with_min_internet(&self, min: f64) -> BenchmarkTable {
        BenchmarkTable {
            rows: self
                .rows
                .iter()
                .filter(|(_, r)| r.internet_penetration.is_none_or(|p| p >= min))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "country,literacy_rate,schooling_years,internet_penetration"
        )?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for (c, r) in &self.rows {
            writeln!(
                out,
                "{c},{},{},{}",
                r.literacy_rate,
                opt(r.schooling_years),
                opt(r.internet_penetration)
            )?;
        }
        Ok(())
    }
}

/// Rank-based ordered-quantile normalization `g(x) = Φ⁻¹((r − 0.5)/n)`.
///
/// Between training values the rank is interpolated linearly. Outside the
/// training range the least-squares slope of g(x) on x continues from the
/// nearest training extreme, which keeps the transform monotone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrqTransform {
    /// Distinct training values, ascending, with their average ranks.
    values: Vec<f64>,
    ranks: Vec<f64>,
    n: usize,
    pub slope: f64,
    pub intercept: f64,
}

fn score(rank: f64, n: usize) -> f64 {
    norm_ppf((rank - 0.5) / n as f64)
}

pub fn orq_fit(values: &[f64]) -> Result<OrqTransform> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "ORQ training values must be finite".into(),
        ));
    }
    let n = values.len();
    let r = average_ranks(values);
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(r).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.dedup_by(|a, b| a.0 == b.0);
    if pairs.len() < 2 {
        return Err(Error::InvalidInput(
            "ORQ needs at least two distinct training values".into(),
        ));
    }
    // least-squares line of g(x) on x over all training pairs
    let g: Vec<f64> = values
        .iter()
        .map(|v| {
            let j = pairs.partition_point(|p| p.0 < *v);
            score(pairs[j].1, n)
        })
        .collect();
    let mx = values.iter().sum::<f64>() / n as f64;
    let mg = g.iter().sum::<f64>() / n as f64;
    let sxy: f64 = values
        .iter()
        .zip(&g)
        .map(|(x, y)| (x - mx) * (y - mg))
        .sum();
    let sxx: f64 = values.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(OrqTransform {
        values: pairs.iter().map(|p| p.0).collect(),
        ranks: pairs.iter().map(|p| p.1).collect(),
        n,
        slope,
        intercept: mg - slope * mx,
    })
}

impl OrqTransform {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot normalize non-finite value {x}"
            )));
        }
        let v = &self.values;
        let last = v.len() - 1;
        if x > v[last] {
            return Ok(score(self.ranks[last], self.n) + self.slope * (x - v[last]));
        }
        if x < v[0] {
            return Ok(score(self.ranks[0], self.n) + self.slope * (x - v[0]));
        }
        let j = v.partition_point(|&t| t < x);
        if v[j] == x {
            return Ok(score(self.ranks[j], self.n));
        }
        let t = (x - v[j - 1]) / (v[j] - v[j - 1]);
        let r = self.ranks[j - 1] + t * (self.ranks[j] - self.ranks[j - 1]);
        Ok(score(r, self.n))
    }

    pub fn apply_all(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

/// One country's inputs to calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub country: String,
    pub language: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub beta: f64,
    pub intercept: f64,
    /// Language effects relative to the reference language.
    pub alpha: BTreeMap<String, f64>,
    pub reference: String,
    pub sigma_eps: f64,
    pub fit: OlsFit,
}

pub const X_COLUMN: &str = "x";

pub fn language_column(language: &str) -> String {
    format!("language [{language}]")
}

/// `y = intercept + β·x + α_language`, reference language = alphabetically first.
pub fn fit_calibration(rows: &[CalibrationRow]) -> Result<CalibrationModel> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput(
            "calibration needs at least two countries".into(),
        ));
    }
    if rows.iter().any(|r| !(r.x.is_finite() && r.y.is_finite())) {
        return Err(Error::InvalidInput("non-finite calibration input".into()));
    }
    let languages: BTreeSet<&str> = rows.iter().map(|r| r.language.as_str()).collect();
    let reference = languages.iter().next().expect("non-empty").to_string();
    let mut d = Design::new(rows.len(), true);
    d.push(X_COLUMN, rows.iter().map(|r| r.x).collect());
    for l in languages.iter().skip(1) {
        d.push(
            language_column(l),
            rows.iter()
                .map(|r| f64::from(u8::from(r.language == *l)))
                .collect(),
        );
    }
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let fit = fit_ols(&d, &y)?;
    let alpha = languages
        .iter()
        .skip(1)
        .map(|l| {
            let j = fit.index_of(&language_column(l)).expect("column present");
            (l.to_string(), fit.coefficients[j].estimate)
        })
        .collect();
    Ok(CalibrationModel {
        beta: fit.coefficients[1].estimate,
        intercept: fit.coefficients[0].estimate,
        alpha,
        reference,
        sigma_eps: fit.sigma,
        fit,
    })
}

impl CalibrationModel {
    pub fn knows(&self, language: &str) -> bool {
        language == self.reference || self.alpha.contains_key(language)
    }

    /// Prediction; a language unseen in training gets no language effect.
    pub fn predict(&self, x: f64, language: &str) -> f64 {
        self.intercept + self.beta * x + self.alpha.get(language).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleBounds {
    pub min: f64,
    pub max: f64,
}

impl RescaleBounds {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(min.is_finite() && max.is_finite()) || min == max {
            return Err(Error::InvalidInput(
                "rescaling needs at least two distinct finite values".into(),
            ));
        }
        Ok(RescaleBounds { min, max })
    }

    /// `(v − min)/(max − min)`, clamped to [0, 1].
    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

pub fn rescale_unit(values: &[f64]) -> Result<Vec<f64>> {
    let b = RescaleBounds::from_values(values)?;
    Ok(values.iter().map(|&v| b.apply(v)).collect())
}

/// Raw country-level input to leave-one-out calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryObservation {
    pub country: String,
    pub language: String,
    /// Population mean relative LoFF count.
    pub raw: f64,
    /// Benchmark literacy rate.
    pub benchmark: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlleRow {
    pub country: String,
    pub language: String,
    pub raw: f64,
    /// Raw value under the full-sample normalization.
    pub normalized: f64,
    /// Leave-one-out prediction on the normalized benchmark scale.
    pub predicted: f64,
    /// Held-out benchmark under the fold's normalization.
    pub target: f64,
    pub olle: f64,
    /// The country's language had no other country in its training fold.
    pub loo_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OosMetrics {
    pub n: usize,
    pub rho: f64,
    pub rmse: f64,
    pub r_squared: f64,
}

/// Maps raw w̄ for a language onto the OLLE scale using the full-sample fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibratedScale {
    pub x_orq: OrqTransform,
    pub model: CalibrationModel,
    pub bounds: RescaleBounds,
}

impl CalibratedScale {
    pub fn olle(&self, raw: f64, language: &str) -> Result<f64> {
        let x = self.x_orq.apply(raw)?;
        Ok(self.bounds.apply(self.model.predict(x, language)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooCalibration {
    pub table: Vec<OlleRow>,
    pub metrics: OosMetrics,
    /// Fit on all countries, for reporting and for scoring new groups.
    pub scale: CalibratedScale,
}

struct Fold {
    predicted: f64,
    target: f64,
    flag: bool,
}

fn loo_fold(obs: &[CountryObservation], i: usize) -> Result<Fold> {
    let train: Vec<&CountryObservation> = obs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, o)| o)
        .collect();
    let raw: Vec<f64> = train.iter().map(|o| o.raw).collect();
    let bench: Vec<f64> = train.iter().map(|o| o.benchmark).collect();
    let x_orq = orq_fit(&raw)?;
    let y_orq = orq_fit(&bench)?;
    let rows: Vec<CalibrationRow> = train
        .iter()
        .map(|o| {
            Ok(CalibrationRow {
                country: o.country.clone(),
                language: o.language.clone(),
                x: x_orq.apply(o.raw)?,
                y: y_orq.apply(o.benchmark)?,
            })
        })
        .collect::<Result<_>>()?;
    let model = fit_calibration(&rows)?;
    let held = &obs[i];
    Ok(Fold {
        predicted: model.predict(x_orq.apply(held.raw)?, &held.language),
        target: y_orq.apply(held.benchmark)?,
        flag: !model.knows(&held.language),
    })
}

/// Leave-one-out calibration: each country is predicted from a model whose
/// normalizations and coefficients never saw it.
pub fn loo_calibrate(obs: &[CountryObservation]) -> Result<LooCalibration> {
    if obs.len() < 4 {
        return Err(Error::InvalidInput(
            "leave-one-out calibration needs at least four countries".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for o in obs {
        if !seen.insert(o.country.as_str()) {
            return Err(Error::InvalidInput(format!(
                "country {} appears twice",
                o.country
            )));
        }
    }
    let folds: Vec<Fold> = (0..obs.len())
        .into_par_iter()
        .map(|i| loo_fold(obs, i))
        .collect::<Result<_>>()?;
    let predicted: Vec<f64> = folds.iter().map(|f| f.predicted).collect();
    let target: Vec<f64> = folds.iter().map(|f| f.target).collect();
    let bounds = RescaleBounds::from_values(&predicted)?;

    let n = obs.len() as f64;
    let sse: f64 = predicted
        .iter()
        .zip(&target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let mt = target.iter().sum::<f64>() / n;
    let sst: f64 = target.iter().map(|t| (t - mt) * (t - mt)).sum();
    let metrics = OosMetrics {
        n: obs.len(),
        rho: spearman(&predicted, &target).unwrap_or(f64::NAN),
        rmse: (sse / n).sqrt(),
        r_squared: 1.0 - sse / sst,
    };

    let raw: Vec<f64> = obs.iter().map(|o| o.raw).collect();
    let bench: Vec<f64> = obs.iter().map(|o| o.benchmark).collect();
    let x_orq = orq_fit(&raw)?;
    let y_orq = orq_fit(&bench)?;
    let rows: Vec<CalibrationRow> = obs
        .iter()
        .map(|o| {
            Ok(CalibrationRow {
                country: o.country.clone(),
                language: o.language.clone(),
                x: x_orq.apply(o.raw)?,
                y: y_orq.apply(o.benchmark)?,
            })
        })
        .collect::<Result<_>>()?;
    let model = fit_calibration(&rows)?;

    let table = obs
        .iter()
        .zip(&folds)
        .zip(&rows)
        .map(|((o, f), r)| OlleRow {
            country: o.country.clone(),
            language: o.language.clone(),
            raw: o.raw,
            normalized: r.x,
            predicted: f.predicted,
            target: f.target,
            olle: bounds.apply(f.predicted),
            loo_flag: f.flag,
        })
        .collect();
    Ok(LooCalibration {
        table,
        metrics,
        scale: CalibratedScale {
            x_orq,
            model,
            bounds,
        },
    })
}

pub fn write_olle_csv(out: &mut impl Write, rows: &[OlleRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "country,language,raw,normalized,predicted,olle,loo_flag"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.country, r.language, r.raw, r.normalized, r.predicted, r.olle, r.loo_flag
        )?;
    }
    Ok(())
}

/// One language's estimate in one region, with its share of the region's users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLanguageEstimate {
    pub region: String,
    pub language: String,
    /// `None` when the group is suppressed.
    pub w_bar: Option<f64>,
    pub share: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiLanguageEstimate {
    pub combined: BTreeMap<String, f64>,
    /// Regions with no usable language, and languages that could not be
    /// normalized, with the reason.
    pub notes: Vec<String>,
}

/// Share-weighted combination of per-language estimates, each language first
/// normalized over its own regional values. Shares are renormalized over the
/// languages available in each region.
pub fn multi_language_estimate(inputs: &[RegionLanguageEstimate]) -> Result<MultiLanguageEstimate> {
    if inputs
        .iter()
        .any(|e| !(e.share.is_finite() && e.share >= 0.0))
    {
        return Err(Error::InvalidInput(
            "language shares must be finite and non-negative".into(),
        ));
    }
    let mut by_language: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in inputs {
        if let Some(w) = e.w_bar {
            by_language.entry(&e.language).or_default().push(w);
        }
    }
    let mut notes = Vec::new();
    let mut transforms: BTreeMap<&str, OrqTransform> = BTreeMap::new();
    for (l, vals) in by_language {
        match orq_fit(&vals) {
            Ok(t) => {
                transforms.insert(l, t);
            }
            Err(_) => notes.push(format!(
                "language {l}: fewer than two distinct regional values"
            )),
        }
    }
    let mut regions: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for e in inputs {
        let entry = regions.entry(&e.region).or_default();
        if let (Some(w), Some(t)) = (e.w_bar, transforms.get(e.language.as_str())) {
            if e.share > 0.0 {
                entry.push((t.apply(w)?, e.share));
            }
        }
    }
    let mut combined = BTreeMap::new();
    for (region, parts) in regions {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        if parts.is_empty() || total <= 0.0 {
            notes.push(format!("region {region}: no released language"));
            continue;
        }
        combined.insert(
            region.to_string(),
            parts.iter().map(|(v, s)| v * s / total).sum(),
        );
    }
    Ok(MultiLanguageEstimate { combined, notes })
}
