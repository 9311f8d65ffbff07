//! The five subcommands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use olle_core::aggregate::{write_aggregates_csv, UserLoffStat};
use olle_core::analyze::{
    fit_gap_regression, interaction_name, marginal_effects, CorrelationReport, DataTable,
    GeoGroups, RegressionReport, RegressionSpec, Significance, Transform,
};
use olle_core::calibrate::{orq_fit, write_olle_csv, BenchmarkTable, LooCalibration};
use olle_core::corpus::{IngestReport, UserProfile};
use olle_core::lexicon::{detect_loff_range, LoffDetection, LoffRange, PopularityCounts};
use olle_core::pipeline::{self, population_weighted_mean, user_stats, CountryEstimate};
use olle_core::report::{
    format_table, write_disparity_csv, write_gender_gap_csv, write_marginal_effects_csv,
    ModelSummary, TableSpec, TableStyle,
};
use olle_core::synth::{SyntheticCorpus, SyntheticSpec};
use olle_core::{Error, Result};

use crate::artifacts::{
    ingest_posts, load_lexicons, read_json, read_weights, Dyn, Header, Outputs,
};
use crate::config::{PipelineConfig, RunHash};

pub const RANGES_FILE: &str = "loff_ranges.json";
pub const ESTIMATE_FILE: &str = "estimate.json";

// ---------------------------------------------------------------- synth

#[derive(Debug, Default)]
pub struct SynthArgs {
    pub spec: Option<PathBuf>,
    pub seed: Option<u64>,
    pub countries: Option<usize>,
    pub users: Option<usize>,
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<SyntheticSpec>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.countries {
        spec.n_countries = n;
    }
    if let Some(n) = args.users {
        spec.users_per_country = (n, n);
    }
    spec.validate()?;
    let hash = RunHash::new("synth", &spec).finish();
    let out = Outputs::new(args.out.clone(), Header::new("synth", hash, spec.seed))?;
    let corpus = SyntheticCorpus::generate(&spec)?;

    let mut posts = 0usize;
    out.text("posts.jsonl", "#", |w| {
        for i in 0..spec.n_countries {
            for p in corpus.country_posts(i) {
                serde_json::to_writer(&mut *w, &p)?;
                w.write_all(b"\n")?;
                posts += 1;
            }
        }
        Ok(())
    })?;
    for (lang, lex) in &corpus.lexicons {
        out.text(&format!("lexicons/{lang}.txt"), "#", |w| {
            for (word, count) in lex.entries() {
                writeln!(w, "{word} {count}")?;
            }
            Ok(())
        })?;
    }
    let bench = corpus.truth.benchmark();
    out.csv("benchmark.csv", |w| bench.write_csv(&mut Dyn(w)))?;
    out.json("truth.json", &corpus.truth)?;
    // the generator's own LoFF band, usable in place of detect-loff output
    out.json(
        "true_ranges.json",
        &RangesFile {
            ranges: corpus.truth.loff_ranges.clone(),
            languages: corpus
                .truth
                .loff_ranges
                .iter()
                .map(|r| LanguageStatus {
                    language: r.language.clone(),
                    users: 0,
                    status: "planted".into(),
                    detection: None,
                })
                .collect(),
            ingest: IngestReport::default(),
        },
    )?;
    let languages: Vec<String> = spec.languages.iter().map(|l| format!("{l:?}")).collect();
    out.text("olle.toml", "#", |w| {
        writeln!(w, "languages = [{}]", languages.join(", "))?;
        writeln!(w, "seed = {}", spec.seed)?;
        writeln!(w)?;
        writeln!(w, "[paths]")?;
        writeln!(w, "posts = \"posts.jsonl\"")?;
        writeln!(w, "lexicons = \"lexicons\"")?;
        writeln!(w, "benchmark = \"benchmark.csv\"")?;
        writeln!(w, "out = \"results\"")
    })?;
    eprintln!(
        "synth: {} countries, {posts} posts, languages {} -> {}",
        spec.n_countries,
        spec.languages.join(","),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- detect-loff

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageStatus {
    pub language: String,
    pub users: u64,
    /// "ok" or the failure message.
    pub status: String,
    #[serde(default)]
    pub detection: Option<LoffDetection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangesFile {
    pub ranges: Vec<LoffRange>,
    pub languages: Vec<LanguageStatus>,
    pub ingest: IngestReport,
}

fn curve_counts(language: &str, size: usize, profiles: &[UserProfile]) -> PopularityCounts {
    let mut counts = PopularityCounts::new(language, size);
    for p in profiles.iter().filter(|p| p.language == language) {
        counts.add_profile(p);
    }
    counts
}

pub fn detect_loff(cfg: &PipelineConfig) -> Result<()> {
    let mut hash = RunHash::new("detect-loff", &cfg.settings());
    hash.file(&cfg.input(&cfg.paths.posts, "posts")?)?;
    hash.file(&cfg.input(&cfg.paths.lexicons, "lexicons")?)?;
    let out = Outputs::new(
        cfg.out_dir(),
        Header::new("detect-loff", hash.finish(), cfg.seed),
    )?;

    let lexicons = load_lexicons(cfg)?;
    let ingested = ingest_posts(cfg, &lexicons)?;
    let dcfg = cfg.detect_config();
    let results: Vec<(
        String,
        u64,
        Result<(olle_core::lexicon::PopularityCurve, LoffDetection)>,
    )> = cfg
        .languages
        .par_iter()
        .map(|lang| {
            let counts = curve_counts(lang, lexicons[lang].len(), &ingested.profiles);
            let users = counts.users;
            let r = counts
                .into_curve()
                .and_then(|curve| detect_loff_range(&curve, &dcfg).map(|d| (curve, d)));
            (lang.clone(), users, r)
        })
        .collect();

    let mut ranges = Vec::new();
    let mut statuses = Vec::new();
    let mut first_error = None;
    for (lang, users, r) in results {
        match r {
            Ok((curve, d)) => {
                out.csv(&format!("curves/{lang}.csv"), |w| {
                    curve.write_csv(&mut Dyn(w))
                })?;
                eprintln!(
                    "detect-loff: {lang}: {users} users, k0 = {}, k1 = {}",
                    d.range.k0, d.range.k1
                );
                ranges.push(d.range.clone());
                statuses.push(LanguageStatus {
                    language: lang,
                    users,
                    status: "ok".into(),
                    detection: Some(d),
                });
            }
            Err(e) => {
                eprintln!("detect-loff: {lang}: {users} users, failed: {e}");
                statuses.push(LanguageStatus {
                    language: lang,
                    users,
                    status: e.to_string(),
                    detection: None,
                });
                first_error.get_or_insert(e);
            }
        }
    }
    out.json(
        RANGES_FILE,
        &RangesFile {
            ranges,
            languages: statuses,
            ingest: ingested.report,
        },
    )?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateFile {
    /// Country to the language its estimates are reported in.
    pub representative: BTreeMap<String, String>,
    pub calibration: LooCalibration,
    pub countries: Vec<CountryEstimate>,
    pub validation: CorrelationReport,
    pub suppressed_countries: Vec<String>,
}

fn load_ranges(path: &Path) -> Result<Vec<LoffRange>> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} does not exist; run detect-loff first or pass --ranges",
            path.display()
        )));
    }
    Ok(read_json::<RangesFile>(path)?.body.ranges)
}

/// Ingest and per-user LoFF statistics under the detected ranges.
fn loff_stats(cfg: &PipelineConfig, ranges: &[LoffRange]) -> Result<Vec<UserLoffStat>> {
    let lexicons = load_lexicons(cfg)?;
    let ingested = ingest_posts(cfg, &lexicons)?;
    let (stats, skipped) = user_stats(&ingested.profiles, ranges)?;
    if skipped > 0 {
        eprintln!("warning: {skipped} users are in languages without a LoFF range");
    }
    Ok(stats)
}

fn write_user_stats(w: &mut dyn Write, stats: &[UserLoffStat]) -> std::io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "user_id",
        "country",
        "region",
        "gender",
        "language",
        "post_count",
        "w_u",
    ])?;
    for s in stats {
        wr.write_record([
            s.user_id.as_str(),
            &s.country,
            s.region.as_deref().unwrap_or(""),
            s.gender.as_str(),
            &s.language,
            &s.post_count.to_string(),
            &s.w_u.to_string(),
        ])?;
    }
    wr.flush()
}

fn write_countries(w: &mut dyn Write, rows: &[CountryEstimate]) -> std::io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "country",
        "language",
        "n_users",
        "raw",
        "olle",
        "in_training",
        "exclusion",
        "language_share",
    ])?;
    for c in rows {
        wr.write_record([
            c.country.as_str(),
            &c.language,
            &c.n_users.to_string(),
            &c.raw.to_string(),
            &c.olle.to_string(),
            &c.in_training.to_string(),
            c.exclusion.map_or("", |e| e.as_str()),
            &c.language_share.to_string(),
        ])?;
    }
    wr.flush()
}

pub fn estimate(cfg: &PipelineConfig, ranges: Option<&Path>) -> Result<()> {
    let ranges_path = ranges.map_or_else(|| cfg.out_dir().join(RANGES_FILE), Path::to_path_buf);
    let loff = load_ranges(&ranges_path)?;
    let bench_path = cfg.input(&cfg.paths.benchmark, "benchmark")?;
    let mut hash = RunHash::new("estimate", &cfg.settings());
    hash.file(&cfg.input(&cfg.paths.posts, "posts")?)?;
    hash.file(&cfg.input(&cfg.paths.lexicons, "lexicons")?)?;
    hash.file(&bench_path)?;
    hash.value(&loff);
    let out = Outputs::new(
        cfg.out_dir(),
        Header::new("estimate", hash.finish(), cfg.seed),
    )?;

    let bench = BenchmarkTable::load(&bench_path)?;
    let stats = loff_stats(cfg, &loff)?;
    if !cfg.aggregation.drop_intermediates {
        out.csv("user_stats.csv", |w| write_user_stats(w, &stats))?;
    }
    let est = pipeline::estimate(stats, &bench, &cfg.estimate_config())?;

    out.csv("aggregates.csv", |w| {
        write_aggregates_csv(&mut Dyn(w), &est.aggregates)
    })?;
    out.csv("olle.csv", |w| {
        write_olle_csv(&mut Dyn(w), &est.calibration.table)
    })?;
    out.csv("countries.csv", |w| write_countries(w, &est.countries))?;
    let m = &est.calibration.metrics;
    eprintln!(
        "estimate: {} calibration countries, OOS rho {:.3}, RMSE {:.3}, R2 {:.3}; Spearman vs benchmark {:.3} [{:.3}, {:.3}]; {} countries suppressed",
        m.n,
        m.rho,
        m.rmse,
        m.r_squared,
        est.validation.rho,
        est.validation.ci_low,
        est.validation.ci_high,
        est.suppressed_countries.len()
    );
    out.json(
        ESTIMATE_FILE,
        &EstimateFile {
            representative: est.representative(),
            calibration: est.calibration,
            countries: est.countries,
            validation: est.validation,
            suppressed_countries: est.suppressed_countries,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------- gaps

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapSummary {
    pub countries_with_gap: usize,
    pub female_favoring: usize,
    pub male_favoring: usize,
    pub not_significant: usize,
    pub bootstrap_unavailable: usize,
    /// Population-weighted mean standardized gap, when weights are given.
    pub weighted_z_gap: Option<f64>,
    pub weighted_disparity: Option<f64>,
    /// Countries with a value but no population weight.
    pub unweighted_countries: Vec<String>,
    pub countries_with_disparity: usize,
    pub regressions: Vec<String>,
}

/// Moderator levels for marginal effects: 21 points across the observed
/// range of `b` on the model's transformed scale.
fn moderator_grid(spec: &RegressionSpec, table: &DataTable, b: &str) -> Result<Vec<f64>> {
    let raw: Vec<f64> = table
        .column(b)
        .into_iter()
        .flatten()
        .flatten()
        .copied()
        .collect();
    let values = match spec.transform_of(b) {
        Transform::None => raw,
        Transform::Log => raw.iter().filter(|v| **v > 0.0).map(|v| v.ln()).collect(),
        Transform::Orq => orq_fit(&raw)?.apply_all(&raw)?,
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("moderator {b} has no values")));
    }
    Ok((0..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect())
}

fn file_stem(spec: &RegressionSpec, index: usize) -> String {
    let name = spec
        .name
        .clone()
        .unwrap_or_else(|| format!("model{}", index + 1));
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn run_regressions(
    cfg: &PipelineConfig,
    out: &Outputs,
    est: &EstimateFile,
    columns: &[(&str, BTreeMap<String, f64>)],
) -> Result<Vec<String>> {
    let cov = cfg.optional_input(&cfg.paths.covariates, "covariates")?;
    let specs = cfg.optional_input(&cfg.paths.regressions, "regressions")?;
    let (cov, specs_path) = match (cov, specs) {
        (None, None) => return Ok(Vec::new()),
        (Some(c), Some(s)) => (c, s),
        _ => {
            return Err(Error::Config(
                "gap regressions need both paths.covariates and paths.regressions".into(),
            ))
        }
    };
    let text = std::fs::read_to_string(&specs_path).map_err(|e| Error::io(&specs_path, e))?;
    let specs: Vec<RegressionSpec> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", specs_path.display())))?;
    let mut table = DataTable::load(&cov)?;
    let olle: BTreeMap<String, f64> = est
        .countries
        .iter()
        .map(|c| (c.country.clone(), c.olle))
        .collect();
    table.set_column("olle", &olle);
    for (name, values) in columns {
        table.set_column(name, values);
    }
    let geo = match cfg.optional_input(&cfg.paths.geo_groups, "geo_groups")? {
        Some(p) => GeoGroups::load(p)?,
        None => GeoGroups::builtin(),
    };
    for (i, spec) in specs.iter().enumerate() {
        spec.validate(&table).map_err(|e| match e {
            Error::Config(m) => {
                Error::Config(format!("{}: model {}: {m}", specs_path.display(), i + 1))
            }
            other => other,
        })?;
    }
    let mut written = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let report: RegressionReport = fit_gap_regression(spec, &table, Some(&geo))?;
        let stem = file_stem(spec, i);
        out.json(&format!("regression_{stem}.json"), &report)?;
        for (a, b) in &spec.interactions {
            let grid = moderator_grid(spec, &table, b)?;
            let effects = marginal_effects(&report, a, b, &grid)?;
            out.csv(
                &format!(
                    "marginal_{stem}_{}.csv",
                    interaction_name(a, b).replace(':', "_by_")
                ),
                |w| write_marginal_effects_csv(&mut Dyn(w), &effects),
            )?;
        }
        eprintln!(
            "gaps: regression {stem}: n = {}, R2 = {:.3}, LOO RMSE = {:.3}",
            report.n, report.r_squared, report.loo_rmse
        );
        written.push(format!("regression_{stem}.json"));
    }
    Ok(written)
}

pub fn gaps(cfg: &PipelineConfig, ranges: Option<&Path>, estimate: Option<&Path>) -> Result<()> {
    let ranges_path = ranges.map_or_else(|| cfg.out_dir().join(RANGES_FILE), Path::to_path_buf);
    let est_path = estimate.map_or_else(|| cfg.out_dir().join(ESTIMATE_FILE), Path::to_path_buf);
    if !est_path.exists() {
        return Err(Error::Config(format!(
            "{} does not exist; run estimate first or pass --estimate",
            est_path.display()
        )));
    }
    let loff = load_ranges(&ranges_path)?;
    let mut hash = RunHash::new("gaps", &cfg.settings());
    hash.file(&cfg.input(&cfg.paths.posts, "posts")?)?;
    hash.file(&cfg.input(&cfg.paths.lexicons, "lexicons")?)?;
    hash.file(&est_path)?;
    hash.value(&loff);
    for (slot, key) in [
        (&cfg.paths.population_weights, "population_weights"),
        (&cfg.paths.geo_groups, "geo_groups"),
        (&cfg.paths.covariates, "covariates"),
        (&cfg.paths.regressions, "regressions"),
    ] {
        if let Some(p) = cfg.optional_input(slot, key)? {
            hash.file(&p)?;
        }
    }
    let out = Outputs::new(cfg.out_dir(), Header::new("gaps", hash.finish(), cfg.seed))?;

    let est = read_json::<EstimateFile>(&est_path)?.body;
    let stats = loff_stats(cfg, &loff)?;
    let result = pipeline::gaps(
        stats,
        &est.calibration.scale,
        &est.representative,
        &cfg.aggregation,
        &cfg.gap_config(),
        true,
    )?;
    out.csv("gender_gap.csv", |w| {
        write_gender_gap_csv(&mut Dyn(w), &result.gender)
    })?;
    out.csv("regional_disparity.csv", |w| {
        write_disparity_csv(&mut Dyn(w), &result.disparity)
    })?;
    if result.gender.is_empty() && result.disparity.is_empty() {
        eprintln!(
            "warning: no country has releasable gender or regional groups; wrote header-only CSVs"
        );
    }

    let z: BTreeMap<String, f64> = result
        .gender
        .iter()
        .filter_map(|g| g.z_gap.map(|z| (g.country.clone(), z)))
        .collect();
    let raw: BTreeMap<String, f64> = result
        .gender
        .iter()
        .map(|g| (g.country.clone(), g.raw_gap))
        .collect();
    let disparity: BTreeMap<String, f64> = result
        .disparity
        .iter()
        .map(|d| (d.country.clone(), d.disparity))
        .collect();

    let (mut weighted_z_gap, mut weighted_disparity, mut unweighted) = (None, None, Vec::new());
    if let Some(p) = cfg.optional_input(&cfg.paths.population_weights, "population_weights")? {
        let weights = read_weights(&p)?;
        let (zg, mut m1) = population_weighted_mean(&z, &weights)?;
        let (dg, m2) = population_weighted_mean(&disparity, &weights)?;
        m1.extend(m2);
        m1.sort();
        m1.dedup();
        (weighted_z_gap, weighted_disparity, unweighted) = (zg, dg, m1);
    }
    let columns = [
        ("gender_gap", z),
        ("raw_gap", raw),
        ("disparity", disparity),
    ];
    let regressions = run_regressions(cfg, &out, &est, &columns)?;

    let count = |s: Significance| result.gender.iter().filter(|g| g.significance == s).count();
    let summary = GapSummary {
        countries_with_gap: result.gender.len(),
        female_favoring: count(Significance::FemaleFavoring),
        male_favoring: count(Significance::MaleFavoring),
        not_significant: count(Significance::None),
        bootstrap_unavailable: result
            .gender
            .iter()
            .filter(|g| g.bootstrap_unavailable)
            .count(),
        weighted_z_gap,
        weighted_disparity,
        unweighted_countries: unweighted,
        countries_with_disparity: result.disparity.len(),
        regressions,
    };
    eprintln!(
        "gaps: {} countries with a gender gap ({} female-favoring, {} male-favoring), {} with a regional disparity",
        summary.countries_with_gap, summary.female_favoring, summary.male_favoring, summary.countries_with_disparity
    );
    out.json("gaps_summary.json", &summary)?;
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Default)]
pub struct ReportArgs {
    pub table: Vec<PathBuf>,
    pub estimate: Option<PathBuf>,
    pub regression: Vec<PathBuf>,
    pub output: Option<PathBuf>,
}

fn model_label(i: usize) -> String {
    format!("({})", (b'a' + (i % 26) as u8) as char)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    if args.table.is_empty() && args.estimate.is_none() && args.regression.is_empty() {
        return Err(Error::Config(
            "report needs --table, --estimate or --regression".into(),
        ));
    }
    let mut hash = RunHash::new("report", &());
    let mut tables = Vec::new();
    for p in &args.table {
        hash.file(p)?;
        tables.push(TableSpec::load(p)?);
    }
    if let Some(p) = &args.estimate {
        hash.file(p)?;
        let est = read_json::<EstimateFile>(p)?.body;
        tables.push(TableSpec {
            title: "Calibration of OLLE against benchmark literacy".into(),
            dv_label: "benchmark literacy (normalized)".into(),
            models: vec![ModelSummary::from_calibration(
                &model_label(0),
                &est.calibration,
            )],
            ..TableSpec::default()
        });
    }
    if !args.regression.is_empty() {
        let mut models = Vec::new();
        let mut dvs = Vec::new();
        for (i, p) in args.regression.iter().enumerate() {
            hash.file(p)?;
            let r = read_json::<RegressionReport>(p)?.body;
            if !dvs.contains(&r.dv) {
                dvs.push(r.dv.clone());
            }
            models.push(ModelSummary::from_regression(&model_label(i), &r));
        }
        tables.push(TableSpec {
            title: "Gap regressions".into(),
            dv_label: dvs.join(", "),
            style: TableStyle::Gap,
            models,
            ..TableSpec::default()
        });
    }
    let header = Header::new("report", hash.finish(), 0);
    let mut text = header.comment("%");
    text.push('\n');
    for t in &tables {
        text.push_str(&format_table(t));
        text.push('\n');
    }
    match &args.output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
