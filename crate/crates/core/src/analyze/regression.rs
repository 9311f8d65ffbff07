//! Country-level OLS models of gaps and disparities, with transformed
//! predictors, product interactions and geographic-group controls.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geo::GeoGroups;
use crate::calibrate::orq_fit;
use crate::error::{Error, Result};
use crate::ols::{fit_ols, Coefficient, Design};
use crate::stats::{mean, t_quantile};

/// Country-by-variable table; missing cells are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    countries: Vec<String>,
    columns: BTreeMap<String, Vec<Option<f64>>>,
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, String> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("not a number: {t:?}")),
    }
}

impl DataTable {
    /// CSV with a `country` column followed by numeric columns. Empty, `NA`
    /// and `NaN` cells are missing.
    pub fn read_csv(reader: impl Read, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .clone();
        let key = header
            .iter()
            .position(|h| h == "country")
            .ok_or_else(|| Error::parse(path, 1, "missing country column"))?;
        let mut table = DataTable::default();
        let names: Vec<String> = header.iter().map(str::to_string).collect();
        for (j, name) in names.iter().enumerate() {
            if j != key && table.columns.insert(name.clone(), Vec::new()).is_some() {
                return Err(Error::parse(path, 1, format!("duplicate column {name:?}")));
            }
        }
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
            let country = rec[key].to_string();
            if table.countries.contains(&country) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicate country {country}"),
                ));
            }
            table.countries.push(country);
            for (j, name) in names.iter().enumerate() {
                if j == key {
                    continue;
                }
                let v = parse_cell(&rec[j])
                    .map_err(|m| Error::parse(path, line, format!("{name}: {m}")))?;
                table.columns.get_mut(name).expect("header column").push(v);
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, path)
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Adds or replaces a column from per-country values. Countries not yet
    /// in the table are appended with other cells missing.
    pub fn set_column(&mut self, name: &str, values: &BTreeMap<String, f64>) {
        for c in values.keys() {
            if !self.countries.contains(c) {
                self.countries.push(c.clone());
                for col in self.columns.values_mut() {
                    col.push(None);
                }
            }
        }
        let col = self
            .countries
            .iter()
            .map(|c| values.get(c).copied())
            .collect();
        self.columns.insert(name.to_string(), col);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// Ordered-quantile normalization.
    #[default]
    Orq,
    Log,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dv: String,
    pub ivs: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    #[serde(default)]
    pub geo_controls: bool,
    /// Per-variable overrides of `default_transform`.
    #[serde(default)]
    pub transforms: BTreeMap<String, Transform>,
    #[serde(default)]
    pub default_transform: Transform,
    /// Mean-center every variable that enters an interaction.
    #[serde(default)]
    pub center_interactions: bool,
}

impl RegressionSpec {
    pub fn transform_of(&self, var: &str) -> Transform {
        self.transforms
            .get(var)
            .copied()
            .unwrap_or(self.default_transform)
    }

    /// Every variable the model reads, response first.
    pub fn variables(&self) -> Vec<&str> {
        let mut v: Vec<&str> = vec![self.dv.as_str()];
        for name in self
            .ivs
            .iter()
            .chain(self.interactions.iter().flat_map(|(a, b)| [a, b]))
        {
            if !v.contains(&name.as_str()) {
                v.push(name);
            }
        }
        v
    }

    pub fn validate(&self, table: &DataTable) -> Result<()> {
        for v in self.variables() {
            if table.column(v).is_none() {
                return Err(Error::Config(format!(
                    "regression spec references unknown variable {v:?}"
                )));
            }
        }
        for (a, b) in &self.interactions {
            if a == b {
                return Err(Error::Config(format!("interaction of {a:?} with itself")));
            }
        }
        Ok(())
    }
}

pub fn interaction_name(a: &str, b: &str) -> String {
    format!("{a}:{b}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    #[serde(default)]
    pub name: Option<String>,
    pub dv: String,
    pub n: usize,
    #[serde(default)]
    pub dropped_rows: usize,
    pub coefficients: Vec<Coefficient>,
    /// Row-major covariance of the estimates; empty for coefficient fixtures.
    #[serde(default)]
    pub covariance: Vec<Vec<f64>>,
    /// Means subtracted from centered variables.
    #[serde(default)]
    pub centers: BTreeMap<String, f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub aic: f64,
    pub bic: f64,
    pub f_statistic: f64,
    pub f_df: (usize, usize),
    #[serde(default)]
    pub f_p_value: f64,
    pub residual_se: f64,
    pub df_resid: usize,
    pub loo_rmse: f64,
    pub loo_r_squared: f64,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.coefficients.iter().position(|c| c.name == name)
    }
}

fn transform_column(name: &str, values: &[f64], t: Transform) -> Result<Vec<f64>> {
    match t {
        Transform::None => Ok(values.to_vec()),
        Transform::Log => values
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::InvalidInput(format!(
                        "log transform of {name} needs positive values, got {v}"
                    )))
                }
            })
            .collect(),
        Transform::Orq => orq_fit(values)
            .and_then(|o| o.apply_all(values))
            .map_err(|e| Error::InvalidInput(format!("{name}: {e}"))),
    }
}

/// Fits the specified model on the complete rows of `table`.
///
/// With `geo_controls`, each country's group comes from `geo` and enters as
/// dummies against the reference group.
pub fn fit_gap_regression(
    spec: &RegressionSpec,
    table: &DataTable,
    geo: Option<&GeoGroups>,
) -> Result<RegressionReport> {
    spec.validate(table)?;
    let vars = spec.variables();
    let cols: Vec<&[Option<f64>]> = vars
        .iter()
        .map(|v| table.column(v).expect("validated"))
        .collect();
    let keep: Vec<usize> = (0..table.countries.len())
        .filter(|&i| cols.iter().all(|c| c[i].is_some()))
        .collect();
    let n = keep.len();
    let dropped_rows = table.countries.len() - n;
    let geo = match (spec.geo_controls, geo) {
        (true, None) => {
            return Err(Error::Config(
                "geo_controls requested without a geo map".into(),
            ))
        }
        (true, Some(g)) => Some(g),
        (false, _) => None,
    };
    let mut data: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (v, c) in vars.iter().zip(&cols) {
        let raw: Vec<f64> = keep.iter().map(|&i| c[i].expect("complete row")).collect();
        data.insert(v, transform_column(v, &raw, spec.transform_of(v))?);
    }
    let mut centers = BTreeMap::new();
    if spec.center_interactions {
        for (a, b) in &spec.interactions {
            for v in [a, b] {
                if !centers.contains_key(v) {
                    let col = data.get_mut(v.as_str()).expect("spec variable");
                    let m = mean(col);
                    col.iter_mut().for_each(|x| *x -= m);
                    centers.insert(v.clone(), m);
                }
            }
        }
    }

    let mut design = Design::new(n, true);
    for v in &spec.ivs {
        design.push(v.clone(), data[v.as_str()].clone());
    }
    for (a, b) in &spec.interactions {
        let prod = data[a.as_str()]
            .iter()
            .zip(&data[b.as_str()])
            .map(|(x, y)| x * y)
            .collect();
        design.push(interaction_name(a, b), prod);
    }
    if let Some(g) = geo {
        let labels: Vec<&str> = keep
            .iter()
            .map(|&i| {
                let c = &table.countries[i];
                g.group_of(c).ok_or_else(|| {
                    Error::InvalidInput(format!("country {c} has no geographic group"))
                })
            })
            .collect::<Result<_>>()?;
        for group in g.dummy_labels() {
            design.push(
                group,
                labels
                    .iter()
                    .map(|l| f64::from(u8::from(*l == group)))
                    .collect(),
            );
        }
    }
    let y = &data[spec.dv.as_str()];
    let fit = fit_ols(&design, y)?;
    let press = fit.loo_residuals();
    if press.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical(
            "an observation has leverage 1; leave-one-out is undefined".into(),
        ));
    }
    let my = mean(y);
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let press_ss: f64 = press.iter().map(|e| e * e).sum();
    Ok(RegressionReport {
        name: spec.name.clone(),
        dv: spec.dv.clone(),
        n,
        dropped_rows,
        coefficients: fit.coefficients,
        covariance: fit.covariance,
        centers,
        r_squared: fit.r_squared,
        adj_r_squared: fit.adj_r_squared,
        aic: fit.aic,
        bic: fit.bic,
        f_statistic: fit.f_statistic,
        f_df: fit.f_df,
        f_p_value: fit.f_p_value,
        residual_se: fit.sigma,
        df_resid: fit.df_resid,
        loo_rmse: (press_ss / n as f64).sqrt(),
        loo_r_squared: 1.0 - press_ss / sst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    /// Level of the moderator on its transformed (uncentered) scale.
    pub at: f64,
    pub effect: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// d y / d a at levels of `b`: β_a + β_ab·(b − c_b), with delta-method
/// standard errors and t-based 95% intervals. `c_b` is the centering
/// constant of `b`, zero when uncentered.
pub fn marginal_effects(
    report: &RegressionReport,
    a: &str,
    b: &str,
    grid: &[f64],
) -> Result<Vec<MarginalEffect>> {
    let ia = report
        .index_of(a)
        .ok_or_else(|| Error::InvalidInput(format!("model has no term {a:?}")))?;
    let iab = report
        .index_of(&interaction_name(a, b))
        .or_else(|| report.index_of(&interaction_name(b, a)))
        .ok_or_else(|| {
            Error::InvalidInput(format!("model has no interaction between {a:?} and {b:?}"))
        })?;
    let v = &report.covariance;
    if v.len() != report.coefficients.len() {
        return Err(Error::InvalidInput(
            "report carries no coefficient covariance".into(),
        ));
    }
    let ba = report.coefficients[ia].estimate;
    let bab = report.coefficients[iab].estimate;
    let c = report.centers.get(b).copied().unwrap_or(0.0);
    let tq = t_quantile(0.975, report.df_resid as f64);
    Ok(grid
        .iter()
        .map(|&at| {
            let z = at - c;
            let effect = ba + bab * z;
            let var = v[ia][ia] + z * z * v[iab][iab] + 2.0 * z * v[ia][iab];
            let se = var.max(0.0).sqrt();
            MarginalEffect {
                at,
                effect,
                std_error: se,
                ci_low: effect - tq * se,
                ci_high: effect + tq * se,
            }
        })
        .collect())
}
