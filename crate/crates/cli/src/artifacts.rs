//! Reading pipeline inputs and writing headed output files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use olle_core::corpus::{ingest, read_jsonl, read_tsv, IngestConfig, IngestOutput};
use olle_core::lexicon::{parse_lexicon, FrequencyLexicon};
use olle_core::{Error, Result};

use crate::config::PipelineConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    pub fn new(command: &str, config_sha256: String, seed: u64) -> Self {
        Header {
            tool: "olle".into(),
            version: VERSION.into(),
            command: command.into(),
            config_sha256,
            seed,
        }
    }

    /// The header as a one-line comment after `prefix`.
    pub fn comment(&self, prefix: &str) -> String {
        format!(
            "{prefix} {} {} command={} config_sha256={} seed={}",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        )
    }
}

/// JSON artifact: `{"header": ..., <payload fields>}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub header: Header,
    #[serde(flatten)]
    pub body: T,
}

pub struct Outputs {
    pub dir: PathBuf,
    pub header: Header,
}

impl Outputs {
    pub fn new(dir: PathBuf, header: Header) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Outputs { dir, header })
    }

    /// Writes `name` under the output directory, starting with the header
    /// comment.
    pub fn text(
        &self,
        name: &str,
        prefix: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{}", self.header.comment(prefix))
            .and_then(|_| body(&mut w))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<PathBuf> {
        self.text(name, "#", body)
    }

    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let env = Envelope {
            header: self.header.clone(),
            body,
        };
        let mut text =
            serde_json::to_string_pretty(&env).map_err(|e| Error::InvalidInput(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Small adapter so writers taking `impl Write` accept a trait object.
pub struct Dyn<'a>(pub &'a mut dyn Write);

impl Write for Dyn<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Envelope<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

pub fn lexicon_path(dir: &Path, language: &str) -> PathBuf {
    dir.join(format!("{language}.txt"))
}

/// One lexicon per configured language, in parallel.
pub fn load_lexicons(cfg: &PipelineConfig) -> Result<BTreeMap<String, FrequencyLexicon>> {
    use rayon::prelude::*;
    let dir = cfg.input(&cfg.paths.lexicons, "lexicons")?;
    for lang in &cfg.languages {
        let p = lexicon_path(&dir, lang);
        if !p.is_file() {
            return Err(Error::Config(format!(
                "no lexicon for {lang}: {} does not exist",
                p.display()
            )));
        }
    }
    cfg.languages
        .par_iter()
        .map(|lang| parse_lexicon(lexicon_path(&dir, lang), lang).map(|l| (lang.clone(), l)))
        .collect()
}

/// Streams the posts file through ingestion.
pub fn ingest_posts(
    cfg: &PipelineConfig,
    lexicons: &BTreeMap<String, FrequencyLexicon>,
) -> Result<IngestOutput> {
    let path = cfg.input(&cfg.paths.posts, "posts")?;
    let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let icfg = IngestConfig {
        filter: cfg.filter.clone(),
        languages: cfg.languages.clone(),
    };
    let out = if path.extension().is_some_and(|e| e == "tsv") {
        ingest(read_tsv(f), &icfg, lexicons)?
    } else {
        ingest(read_jsonl(f), &icfg, lexicons)?
    };
    let r = &out.report;
    if r.parse_errors + r.decode_errors > 0 {
        eprintln!(
            "warning: {}: skipped {} unparsable and {} undecodable lines",
            path.display(),
            r.parse_errors,
            r.decode_errors
        );
    }
    if out.profiles.is_empty() {
        return Err(Error::NoUsers);
    }
    Ok(out)
}

/// `country,weight` rows.
pub fn read_weights(path: &Path) -> Result<BTreeMap<String, f64>> {
    #[derive(Deserialize)]
    struct Row {
        country: String,
        weight: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        if out.insert(row.country.clone(), row.weight).is_some() {
            return Err(Error::parse(
                path,
                i + 2,
                format!("duplicate country {}", row.country),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let out = Outputs::new(
            dir.path().to_path_buf(),
            Header::new("estimate", "ab".into(), 3),
        )
        .unwrap();
        let p = out
            .json("x.json", &BTreeMap::from([("value", 1.5)]))
            .unwrap();
        let back: Envelope<BTreeMap<String, f64>> = read_json(&p).unwrap();
        assert_eq!(back.header, out.header);
        assert_eq!(back.body["value"], 1.5);
        let p = out.csv("x.csv", |w| writeln!(w, "a,b")).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(
            text,
            "# olle 0.1.0 command=estimate config_sha256=ab seed=3\na,b\n"
                .replace("0.1.0", VERSION)
        );
    }

    #[test]
    fn weights_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        std::fs::write(&p, "country,weight\nFR,2\nDE,3\n").unwrap();
        assert_eq!(read_weights(&p).unwrap()["DE"], 3.0);
        std::fs::write(&p, "country,weight\nFR,2\nFR,3\n").unwrap();
        assert!(read_weights(&p).is_err());
    }
}
