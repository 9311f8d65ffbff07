//! Regression tables in the LaTeX layout used for supplementary material,
//! plus plot-ready CSV writers for the analysis outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyze::{
    GenderGapRecord, MarginalEffect, RegionalDisparityRecord, RegressionReport, SharePair,
};
use crate::calibrate::LooCalibration;
use crate::error::{Error, Result};
use crate::ols::OlsFit;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Everything one table column needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub label: String,
    pub coefficients: Vec<CoefRow>,
    pub n: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub aic: f64,
    pub bic: f64,
    pub residual_se: f64,
    pub df_resid: usize,
    pub f_statistic: f64,
    pub f_df: (usize, usize),
    pub f_p_value: f64,
    #[serde(default)]
    pub oos_rho: Option<f64>,
    #[serde(default)]
    pub oos_rmse: Option<f64>,
    #[serde(default)]
    pub oos_r_squared: Option<f64>,
}

fn rows_of(coefs: &[crate::ols::Coefficient]) -> Vec<CoefRow> {
    coefs
        .iter()
        .map(|c| CoefRow {
            name: c.name.clone(),
            estimate: c.estimate,
            ci_low: c.ci_low,
            ci_high: c.ci_high,
            p_value: c.p_value,
        })
        .collect()
}

impl ModelSummary {
    pub fn from_fit(label: &str, fit: &OlsFit) -> Self {
        ModelSummary {
            label: label.to_string(),
            coefficients: rows_of(&fit.coefficients),
            n: fit.n,
            r_squared: fit.r_squared,
            adj_r_squared: fit.adj_r_squared,
            aic: fit.aic,
            bic: fit.bic,
            residual_se: fit.sigma,
            df_resid: fit.df_resid,
            f_statistic: fit.f_statistic,
            f_df: fit.f_df,
            f_p_value: fit.f_p_value,
            oos_rho: None,
            oos_rmse: None,
            oos_r_squared: None,
        }
    }

    /// Full-sample calibration fit with its leave-one-out metrics.
    pub fn from_calibration(label: &str, cal: &LooCalibration) -> Self {
        ModelSummary {
            oos_rho: Some(cal.metrics.rho),
            oos_rmse: Some(cal.metrics.rmse),
            oos_r_squared: Some(cal.metrics.r_squared),
            ..Self::from_fit(label, &cal.scale.model.fit)
        }
    }

    pub fn from_regression(label: &str, r: &RegressionReport) -> Self {
        ModelSummary {
            label: label.to_string(),
            coefficients: rows_of(&r.coefficients),
            n: r.n,
            r_squared: r.r_squared,
            adj_r_squared: r.adj_r_squared,
            aic: r.aic,
            bic: r.bic,
            residual_se: r.residual_se,
            df_resid: r.df_resid,
            f_statistic: r.f_statistic,
            f_df: r.f_df,
            f_p_value: r.f_p_value,
            oos_rho: None,
            oos_rmse: Some(r.loo_rmse),
            oos_r_squared: Some(r.loo_r_squared),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiLayout {
    /// `est (lo, hi)` in one cell.
    #[default]
    Inline,
    /// Interval on its own line below the estimate, then a spacer line.
    Stacked,
}

/// Selects the wording of the out-of-sample rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableStyle {
    #[default]
    Calibration,
    Gap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    #[serde(default)]
    pub title: String,
    pub dv_label: String,
    #[serde(default)]
    pub ci_layout: CiLayout,
    #[serde(default)]
    pub style: TableStyle,
    /// Display names keyed by coefficient name; unlisted interactions are
    /// rendered as `(a):(b)` from their parts.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    pub models: Vec<ModelSummary>,
}

impl TableSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    fn label(&self, name: &str) -> String {
        if let Some(l) = self.labels.get(name) {
            return escape(l);
        }
        if name == INTERCEPT {
            return "Constant".into();
        }
        if let Some((a, b)) = name.split_once(':') {
            return format!("({}):({})", self.label(a), self.label(b));
        }
        if name == crate::calibrate::X_COLUMN {
            return "est. literacy".into();
        }
        escape(name)
    }

    /// Coefficient names in first-seen order with the intercept last.
    fn row_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for m in &self.models {
            for c in &m.coefficients {
                if c.name != INTERCEPT && !names.contains(&c.name.as_str()) {
                    names.push(&c.name);
                }
            }
        }
        if self
            .models
            .iter()
            .any(|m| m.coefficients.iter().any(|c| c.name == INTERCEPT))
        {
            names.push(INTERCEPT);
        }
        names
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev = '\0';
    for ch in s.chars() {
        if matches!(ch, '&' | '%' | '_' | '#') && prev != '\\' {
            out.push('\\');
        }
        out.push(ch);
        prev = ch;
    }
    out
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "$^{***}$"
    } else if p < 0.05 {
        "$^{**}$"
    } else if p < 0.1 {
        "$^{*}$"
    } else {
        ""
    }
}

fn latex_sign(s: String) -> String {
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().any(|c| c.is_ascii_digit() && c != '0') => format!("$-${rest}"),
        Some(rest) => rest.to_string(),
        None => s,
    }
}

/// Two decimals; a nonzero value that would print as zero keeps one
/// significant digit instead.
pub fn fmt_num(x: f64) -> String {
    let mut s = format!("{x:.2}");
    if x != 0.0
        && s.trim_start_matches('-')
            .chars()
            .all(|c| c == '0' || c == '.')
    {
        let digits = (-x.abs().log10().floor()) as usize;
        s = format!("{x:.digits$}");
    }
    latex_sign(s)
}

/// Rounded to two decimals with trailing zeros dropped (0.70 -> 0.7).
pub fn fmt_short(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    latex_sign(s)
}

pub fn fmt_ci(lo: f64, hi: f64) -> String {
    format!("({}, {})", fmt_num(lo), fmt_num(hi))
}

pub fn fmt_estimate(c: &CoefRow) -> String {
    format!("{}{}", fmt_num(c.estimate), stars(c.p_value))
}

fn push_row(out: &mut String, label: &str, cells: &[String]) {
    let _ = write!(out, " {label} & {} \\\\ \n", cells.join(" & "));
}

fn push_stat(out: &mut String, label: &str, cells: &[String]) {
    let _ = write!(out, "{label} & {} \\\\ \n", cells.join(" & "));
}

/// Renders the tabular environment for `spec`.
pub fn format_table(spec: &TableSpec) -> String {
    let k = spec.models.len();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\begin{{tabular}}{{@{{\\extracolsep{{-10pt}}}}l{}}} ",
        "c".repeat(k)
    );
    out.push_str("\\\\[-1.8ex]\\hline \n\\hline \\\\[-1.8ex] \n");
    let _ = writeln!(
        out,
        "\\\\[-1.8ex] & \\multicolumn{{{k}}}{{c}}{{DV: {}}} \\\\ ",
        escape(&spec.dv_label)
    );
    let heads: Vec<String> = spec.models.iter().map(|m| m.label.clone()).collect();
    push_row(&mut out, "", &heads);
    out.push_str("\\hline \\\\[-1.8ex] \n");

    for name in spec.row_names() {
        let found: Vec<Option<&CoefRow>> = spec
            .models
            .iter()
            .map(|m| m.coefficients.iter().find(|c| c.name == name))
            .collect();
        let label = spec.label(name);
        match spec.ci_layout {
            CiLayout::Inline => {
                let cells: Vec<String> = found
                    .iter()
                    .map(|c| {
                        c.map_or(String::new(), |c| {
                            format!("{} {}", fmt_estimate(c), fmt_ci(c.ci_low, c.ci_high))
                        })
                    })
                    .collect();
                push_row(&mut out, &label, &cells);
            }
            CiLayout::Stacked => {
                let est: Vec<String> = found
                    .iter()
                    .map(|c| c.map_or(String::new(), fmt_estimate))
                    .collect();
                let ci: Vec<String> = found
                    .iter()
                    .map(|c| c.map_or(String::new(), |c| fmt_ci(c.ci_low, c.ci_high)))
                    .collect();
                push_row(&mut out, &label, &est);
                push_row(&mut out, "", &ci);
                let _ = writeln!(out, "  &{} \\\\ ", " &".repeat(k.saturating_sub(1)));
            }
        }
    }
    out.push_str("\\hline \\\\[-1.8ex] \n");

    let optional = |f: fn(&ModelSummary) -> Option<f64>| -> Option<Vec<String>> {
        spec.models.iter().any(|m| f(m).is_some()).then(|| {
            spec.models
                .iter()
                .map(|m| f(m).map_or(String::new(), fmt_short))
                .collect()
        })
    };
    let (rho_l, rmse_l, r2_l) = match spec.style {
        TableStyle::Calibration => ("OOS correlation $\\rho$", "OOS RMSE", "OOS R$^{2}$"),
        TableStyle::Gap => (
            "Out-of-sample correlation $\\rho$",
            "Out-of-sample RMSE",
            "Out-of-sample R2",
        ),
    };
    for (label, row) in [
        (rho_l, optional(|m| m.oos_rho)),
        (rmse_l, optional(|m| m.oos_rmse)),
        (r2_l, optional(|m| m.oos_r_squared)),
    ] {
        if let Some(cells) = row {
            push_stat(&mut out, label, &cells);
        }
    }
    let all = |f: &dyn Fn(&ModelSummary) -> String| -> Vec<String> {
        spec.models.iter().map(f).collect()
    };
    push_stat(&mut out, "Observations", &all(&|m| m.n.to_string()));
    push_stat(&mut out, "R$^{2}$", &all(&|m| fmt_num(m.r_squared)));
    push_stat(
        &mut out,
        "Adjusted R$^{2}$",
        &all(&|m| fmt_num(m.adj_r_squared)),
    );
    push_stat(&mut out, "AIC", &all(&|m| fmt_num(m.aic)));
    push_stat(&mut out, "BIC", &all(&|m| fmt_num(m.bic)));
    push_stat(
        &mut out,
        "Residual Std. Error",
        &all(&|m| format!("{} (df = {})", fmt_num(m.residual_se), m.df_resid)),
    );
    push_stat(
        &mut out,
        "F Statistic",
        &all(&|m| {
            format!(
                "{}{} (df = {}; {})",
                fmt_num(m.f_statistic),
                stars(m.f_p_value),
                m.f_df.0,
                m.f_df.1
            )
        }),
    );
    out.push_str("\\hline \n\\hline \\\\[-1.8ex] \n");
    let _ = writeln!(
        out,
        "\\textit{{Note:}}  & \\multicolumn{{{k}}}{{r}}{{$^{{*}}$p$<$0.1; $^{{**}}$p$<$0.05; $^{{***}}$p$<$0.01}} \\\\ "
    );
    out.push_str("\\end{tabular}\n");
    out
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(out)
}

fn flush<W: Write>(w: csv::Writer<W>) -> std::io::Result<()> {
    w.into_inner().map_err(|e| e.into_error())?.flush()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_gender_gap_csv(out: &mut impl Write, rows: &[GenderGapRecord]) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "country",
        "language",
        "raw_gap",
        "z_gap",
        "ci_low",
        "ci_high",
        "significance",
        "bootstrap_unavailable",
    ])?;
    for r in rows {
        w.write_record([
            r.country.clone(),
            r.language.clone(),
            r.raw_gap.to_string(),
            opt(r.z_gap),
            opt(r.ci_low),
            opt(r.ci_high),
            r.significance.as_str().to_string(),
            r.bootstrap_unavailable.to_string(),
        ])?;
    }
    flush(w)
}

pub fn write_disparity_csv(
    out: &mut impl Write,
    rows: &[RegionalDisparityRecord],
) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["country", "language", "disparity", "n_regions"])?;
    for r in rows {
        w.write_record([
            r.country.clone(),
            r.language.clone(),
            r.disparity.to_string(),
            r.n_regions.to_string(),
        ])?;
    }
    flush(w)
}

pub fn write_marginal_effects_csv(
    out: &mut impl Write,
    rows: &[MarginalEffect],
) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["at", "effect", "std_error", "ci_low", "ci_high"])?;
    for r in rows {
        w.write_record([r.at, r.effect, r.std_error, r.ci_low, r.ci_high].map(|v| v.to_string()))?;
    }
    flush(w)
}

pub fn write_share_pairs_csv(out: &mut impl Write, rows: &[SharePair]) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["country", "share", "value"])?;
    for r in rows {
        w.write_record([r.country.clone(), r.share.to_string(), r.value.to_string()])?;
    }
    flush(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, est: f64, lo: f64, hi: f64, p: f64) -> CoefRow {
        CoefRow {
            name: name.into(),
            estimate: est,
            ci_low: lo,
            ci_high: hi,
            p_value: p,
        }
    }

    fn model(coefs: Vec<CoefRow>) -> ModelSummary {
        ModelSummary {
            label: "(a)".into(),
            coefficients: coefs,
            n: 98,
            r_squared: 0.64,
            adj_r_squared: 0.59,
            aic: 205.52,
            bic: 241.7,
            residual_se: 0.64,
            df_resid: 85,
            f_statistic: 12.49,
            f_df: (12, 85),
            f_p_value: 1e-10,
            oos_rho: Some(0.78),
            oos_rmse: Some(0.7),
            oos_r_squared: Some(0.51),
        }
    }

    #[test]
    fn numbers() {
        assert_eq!(fmt_num(0.8), "0.80");
        assert_eq!(fmt_num(-0.02), "$-$0.02");
        assert_eq!(fmt_num(0.004), "0.004");
        assert_eq!(fmt_num(-0.0004), "$-$0.0004");
        assert_eq!(fmt_num(0.0), "0.00");
        assert_eq!(fmt_num(241.7), "241.70");
        assert_eq!(fmt_short(0.7), "0.7");
        assert_eq!(fmt_short(0.78), "0.78");
        assert_eq!(fmt_short(1.0), "1");
        assert_eq!(fmt_short(-0.2), "$-$0.2");
        assert_eq!(fmt_short(-0.001), "0");
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.009), "$^{***}$");
        assert_eq!(stars(0.01), "$^{**}$");
        assert_eq!(stars(0.0499), "$^{**}$");
        assert_eq!(stars(0.05), "$^{*}$");
        assert_eq!(stars(0.1), "");
    }

    #[test]
    fn labels_and_escaping() {
        let mut spec = TableSpec {
            title: String::new(),
            dv_label: "gap".into(),
            ci_layout: CiLayout::Inline,
            style: TableStyle::Gap,
            labels: BTreeMap::from([("net".to_string(), "% Internet".to_string())]),
            models: vec![],
        };
        assert_eq!(spec.label("x"), "est. literacy");
        assert_eq!(spec.label(INTERCEPT), "Constant");
        assert_eq!(spec.label("civic:net"), "(civic):(\\% Internet)");
        assert_eq!(
            spec.label("Latin America & the Caribbean"),
            "Latin America \\& the Caribbean"
        );
        assert_eq!(spec.label("women_civic"), "women\\_civic");
        spec.labels.insert("civic:net".into(), "custom".into());
        assert_eq!(spec.label("civic:net"), "custom");
    }

    #[test]
    fn inline_and_stacked_layouts() {
        let a = model(vec![
            row(INTERCEPT, -0.94, -1.27, -0.61, 1e-6),
            row("x", 0.8, 0.61, 0.99, 1e-9),
        ]);
        let mut b = model(vec![
            row(INTERCEPT, 0.1, -0.2, 0.4, 0.5),
            row("z", 0.3, 0.1, 0.5, 0.02),
        ]);
        b.label = "(b)".into();
        b.oos_rho = None;
        let mut spec = TableSpec {
            title: String::new(),
            dv_label: "reported literacy rate".into(),
            ci_layout: CiLayout::Inline,
            style: TableStyle::Calibration,
            labels: BTreeMap::new(),
            models: vec![a, b],
        };
        let t = format_table(&spec);
        assert!(
            t.contains(" est. literacy & 0.80$^{***}$ (0.61, 0.99) &  \\\\"),
            "{t}"
        );
        assert!(t.contains(" z &  & 0.30$^{**}$ (0.10, 0.50) \\\\"));
        // intercept after every slope
        assert!(t.find("Constant").unwrap() > t.find(" z &").unwrap());
        assert!(t.contains("OOS correlation $\\rho$ & 0.78 &  \\\\"));
        assert!(t.contains("F Statistic & 12.49$^{***}$ (df = 12; 85)"));
        assert!(t.contains("Residual Std. Error & 0.64 (df = 85)"));

        spec.ci_layout = CiLayout::Stacked;
        let t = format_table(&spec);
        assert!(
            t.contains(
                " est. literacy & 0.80$^{***}$ &  \\\\ \n  & (0.61, 0.99) &  \\\\ \n  & & \\\\"
            ),
            "{t}"
        );
    }

    #[test]
    fn summary_json_round_trip() {
        let m = model(vec![row("x", 0.8, 0.61, 0.99, 1e-9)]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<ModelSummary>(&s).unwrap(), m);
    }
}
