//! Pipeline configuration: a TOML file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use olle_core::aggregate::AggregationConfig;
use olle_core::analyze::{GapConfig, GapNull, Standardize};
use olle_core::corpus::{FilterConfig, STUDY_LANGUAGES};
use olle_core::lexicon::DetectConfig;
use olle_core::pipeline::EstimateConfig;
use olle_core::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Posts as JSON lines, or tab-separated when the name ends in `.tsv`.
    pub posts: Option<PathBuf>,
    /// Directory holding one `<language>.txt` lexicon per language.
    pub lexicons: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    /// `country,weight` CSV for population-weighted summaries.
    pub population_weights: Option<PathBuf>,
    /// `iso2,group` CSV; the bundled map is used when absent.
    pub geo_groups: Option<PathBuf>,
    /// Country-level covariates for the gap regressions.
    pub covariates: Option<PathBuf>,
    /// JSON list of regression specifications.
    pub regressions: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub languages: Vec<String>,
    pub representative_language: BTreeMap<String, String>,
    pub aggregation: AggregationConfig,
    pub filter: FilterConfig,
    pub detect: DetectConfig,
    pub min_internet: f64,
    pub gap_null: GapNull,
    pub standardize: Standardize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            languages: STUDY_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            representative_language: BTreeMap::new(),
            aggregation: AggregationConfig::default(),
            filter: FilterConfig::default(),
            detect: DetectConfig::default(),
            min_internet: 0.25,
            gap_null: GapNull::default(),
            standardize: Standardize::default(),
            replicates: 1000,
            seed: 0,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub posts: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub population_weights: Option<PathBuf>,
    pub geo_groups: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub regressions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub languages: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub sensitivity: Option<f64>,
    pub min_group_size: Option<u64>,
    pub min_internet: Option<f64>,
}

impl PipelineConfig {
    /// Reads the file (relative paths inside it are taken from its
    /// directory) and applies the overrides.
    pub fn resolve(file: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mut cfg: PipelineConfig = toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.paths.rebase(base);
                cfg
            }
            None => PipelineConfig::default(),
        };
        let p = &mut cfg.paths;
        for (slot, value) in [
            (&mut p.posts, &o.posts),
            (&mut p.lexicons, &o.lexicons),
            (&mut p.benchmark, &o.benchmark),
            (&mut p.population_weights, &o.population_weights),
            (&mut p.geo_groups, &o.geo_groups),
            (&mut p.covariates, &o.covariates),
            (&mut p.regressions, &o.regressions),
            (&mut p.out, &o.out),
        ] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        if let Some(v) = &o.languages {
            cfg.languages.clone_from(v);
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = o.sensitivity {
            cfg.detect.sensitivity = v;
        }
        if let Some(v) = o.min_group_size {
            cfg.aggregation.min_group_size = v;
        }
        if let Some(v) = o.min_internet {
            cfg.min_internet = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.aggregation.validate()?;
        self.filter.validate()?;
        if self.languages.is_empty() {
            return Err(Error::Config("no languages configured".into()));
        }
        if !(self.detect.sensitivity > 0.0 && self.detect.sensitivity.is_finite()) {
            return Err(Error::Config(format!(
                "kneedle sensitivity must be positive, got {}",
                self.detect.sensitivity
            )));
        }
        if !(0.0..=1.0).contains(&self.min_internet) {
            return Err(Error::Config(format!(
                "min_internet must lie in [0, 1], got {}",
                self.min_internet
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("olle-out"))
    }

    /// A configured input path, checked to exist.
    pub fn input(&self, slot: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let path = slot.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "paths.{key} is not set (config file or --{})",
                key.replace('_', "-")
            ))
        })?;
        if !path.exists() {
            return Err(Error::Config(format!(
                "paths.{key}: {} does not exist",
                path.display()
            )));
        }
        Ok(path.clone())
    }

    /// An optional input path; when set it must exist.
    pub fn optional_input(&self, slot: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        match slot {
            None => Ok(None),
            Some(_) => self.input(slot, key).map(Some),
        }
    }

    pub fn estimate_config(&self) -> EstimateConfig {
        EstimateConfig {
            aggregation: self.aggregation.clone(),
            min_internet: self.min_internet,
            representative_language: self.representative_language.clone(),
            replicates: self.replicates,
            seed: self.seed,
        }
    }

    pub fn gap_config(&self) -> GapConfig {
        GapConfig {
            replicates: self.replicates,
            seed: self.seed,
            null: self.gap_null,
            standardize: self.standardize,
        }
    }

    pub fn detect_config(&self) -> DetectConfig {
        let mut d = self.detect.clone();
        d.smoother.seed = self.seed;
        d
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.posts,
            &mut self.lexicons,
            &mut self.benchmark,
            &mut self.population_weights,
            &mut self.geo_groups,
            &mut self.covariates,
            &mut self.regressions,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fingerprint of a run: command, effective settings and the bytes of
/// every input file. Paths are left out so that moving inputs around does
/// not change it.
pub struct RunHash(Sha256);

impl RunHash {
    pub fn new(command: &str, settings: &impl Serialize) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(settings).expect("settings serialize"));
        RunHash(h)
    }

    pub fn file(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
                .collect::<Result<_>>()?;
            entries.sort();
            for e in entries.iter().filter(|e| e.is_file()) {
                self.0.update(
                    e.file_name()
                        .map(|n| n.as_encoded_bytes())
                        .unwrap_or_default(),
                );
                self.file(e)?;
            }
            return Ok(());
        }
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            self.0.update(&buf[..n]);
        }
        self.0.update([0]);
        Ok(())
    }

    /// Folds in an input that is already parsed.
    pub fn value(&mut self, v: &impl Serialize) {
        self.0
            .update(serde_json::to_vec(v).expect("value serializes"));
        self.0.update([0]);
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

/// Settings that affect results; paths are excluded.
#[derive(Serialize)]
pub struct Settings<'a> {
    pub languages: &'a [String],
    pub representative_language: &'a BTreeMap<String, String>,
    pub aggregation: &'a AggregationConfig,
    pub filter: &'a FilterConfig,
    pub detect: &'a DetectConfig,
    pub min_internet: f64,
    pub gap_null: GapNull,
    pub standardize: Standardize,
    pub replicates: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn settings(&self) -> Settings<'_> {
        Settings {
            languages: &self.languages,
            representative_language: &self.representative_language,
            aggregation: &self.aggregation,
            filter: &self.filter,
            detect: &self.detect,
            min_internet: self.min_internet,
            gap_null: self.gap_null,
            standardize: self.standardize,
            replicates: self.replicates,
            seed: self.seed,
        }
    }
}
