//! Zipf-vocabulary corpora with known country literacy.
//!
//! Each country has a latent literacy level. A user's skill is that level
//! plus gender, region and individual noise; the user can only use the
//! `⌈V·skill⌉` most frequent words of the language and samples post tokens
//! from a Zipf law truncated there.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::analyze::GeoGroups;
use crate::calibrate::{BenchmarkRow, BenchmarkTable};
use crate::corpus::{Gender, PostRecord};
use crate::error::{Error, Result};
use crate::lexicon::{FrequencyLexicon, LoffRange};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_countries: usize,
    /// Inclusive range of users per country.
    pub users_per_country: (usize, usize),
    pub languages: Vec<String>,
    /// Mean tokens-per-post multiplier per language, parallel to `languages`.
    pub language_verbosity: Vec<f64>,
    /// Latent literacy is drawn uniformly from this range unless `latent` is set.
    pub latent_range: (f64, f64),
    pub latent: Option<Vec<f64>>,
    pub zipf_exponent: f64,
    pub vocab_size: usize,
    /// The LoFF band the generator is built around, as 0-based ranks.
    pub loff_band: (usize, usize),
    /// Per-user skill noise sd.
    pub skill_noise: f64,
    /// Benchmark literacy = latent + noise of this sd, clipped to [0, 1].
    pub benchmark_noise: f64,
    /// Skill shift applied to female users.
    pub gender_effect: f64,
    /// Sd of per-region skill offsets.
    pub region_effect: f64,
    pub regions_per_country: usize,
    pub posts_per_user: (u32, u32),
    pub tokens_per_post: (u32, u32),
    /// Probability that a post carries a link (and is later filtered).
    pub url_post_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 1,
            n_countries: 100,
            users_per_country: (2000, 2000),
            languages: vec!["en".into(), "es".into(), "fr".into()],
            language_verbosity: vec![1.0, 1.25, 0.8],
            latent_range: (0.15, 0.9),
            latent: None,
            zipf_exponent: 1.0,
            vocab_size: 10_000,
            loff_band: (1500, 9000),
            skill_noise: 0.05,
            benchmark_noise: 0.05,
            gender_effect: 0.0,
            region_effect: 0.0,
            regions_per_country: 4,
            posts_per_user: (2, 8),
            tokens_per_post: (6, 14),
            url_post_rate: 0.01,
        }
    }
}

fn range_ok<T: PartialOrd>(r: (T, T)) -> bool {
    r.0 <= r.1
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let max_countries = GeoGroups::builtin().countries().len();
        if self.n_countries == 0 || self.n_countries > max_countries {
            return bad(format!("n_countries must be in 1..={max_countries}"));
        }
        if self.languages.is_empty() || self.language_verbosity.len() != self.languages.len() {
            return bad("language_verbosity needs one entry per language".into());
        }
        if self.language_verbosity.iter().any(|v| !(*v > 0.0)) {
            return bad("language_verbosity must be positive".into());
        }
        if self.users_per_country.0 == 0 || !range_ok(self.users_per_country) {
            return bad("users_per_country must be a non-empty positive range".into());
        }
        if !range_ok(self.posts_per_user) || self.posts_per_user.0 == 0 {
            return bad("posts_per_user must be a positive range".into());
        }
        if !range_ok(self.tokens_per_post) || self.tokens_per_post.0 == 0 {
            return bad("tokens_per_post must be a positive range".into());
        }
        let (lo, hi) = self.latent_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("latent_range must lie in [0, 1]".into());
        }
        if let Some(l) = &self.latent {
            if l.len() != self.n_countries || l.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad("latent needs n_countries values in [0, 1]".into());
            }
        }
        let (k0, k1) = self.loff_band;
        if k0 == 0 || k0 >= k1 {
            return bad(format!("loff_band ({k0}, {k1}) must satisfy 0 < k0 < k1"));
        }
        if self.vocab_size <= k1 {
            return bad(format!(
                "vocab_size {} does not cover the LoFF band ending at {k1}",
                self.vocab_size
            ));
        }
        if !(self.zipf_exponent > 0.0) {
            return bad("zipf_exponent must be positive".into());
        }
        for (name, v) in [
            ("skill_noise", self.skill_noise),
            ("benchmark_noise", self.benchmark_noise),
            ("region_effect", self.region_effect),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !self.gender_effect.is_finite() {
            return bad("gender_effect must be finite".into());
        }
        if self.regions_per_country == 0 {
            return bad("regions_per_country must be positive".into());
        }
        if !(0.0..1.0).contains(&self.url_post_rate) {
            return bad("url_post_rate must be in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryTruth {
    pub country: String,
    pub language: String,
    pub latent: f64,
    pub benchmark: f64,
    pub internet_penetration: f64,
    pub n_users: usize,
    pub region_offsets: Vec<f64>,
}

/// Everything the generator decided, for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub spec: SyntheticSpec,
    pub countries: Vec<CountryTruth>,
    pub loff_ranges: Vec<LoffRange>,
}

impl SyntheticTruth {
    pub fn benchmark(&self) -> BenchmarkTable {
        BenchmarkTable {
            rows: self
                .countries
                .iter()
                .map(|c| {
                    (
                        c.country.clone(),
                        BenchmarkRow {
                            literacy_rate: c.benchmark,
                            schooling_years: None,
                            internet_penetration: Some(c.internet_penetration),
                        },
                    )
                })
                .collect(),
        }
    }
}

const ONSETS: [&str; 3] = ["bdfgklmnprstvz", "bcdfglmnprstv", "bcdfjlmnprstv"];
const VOWELS: [&str; 3] = ["aeiou", "aeiou", "aeiouy"];

/// Pseudo-word for a 0-based rank: base-B digits over consonant-vowel
/// syllables, which decode uniquely because every syllable has two letters.
pub fn pseudo_word(language_index: usize, rank: usize) -> String {
    let k = language_index % ONSETS.len();
    let (onsets, vowels) = (ONSETS[k].as_bytes(), VOWELS[k].as_bytes());
    let b = onsets.len() * vowels.len();
    let mut n = rank;
    let mut out = String::new();
    loop {
        let s = n % b;
        out.push(onsets[s / vowels.len()] as char);
        out.push(vowels[s % vowels.len()] as char);
        n /= b;
        if n == 0 {
            break;
        }
    }
    out
}

/// Lexicon of `vocab_size` pseudo-words with Zipf frequencies.
pub fn synthetic_lexicon(
    language: &str,
    language_index: usize,
    vocab_size: usize,
    exponent: f64,
) -> Result<FrequencyLexicon> {
    let entries = (0..vocab_size)
        .map(|r| {
            let f = (1e12 / ((r + 1) as f64).powf(exponent)).round().max(1.0) as u64;
            (pseudo_word(language_index, r), f)
        })
        .collect();
    FrequencyLexicon::from_entries(language, entries)
}

pub struct SyntheticCorpus {
    pub truth: SyntheticTruth,
    pub lexicons: BTreeMap<String, FrequencyLexicon>,
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
        spec.validate()?;
        let geo = GeoGroups::builtin();
        let all = geo.countries();
        let codes: Vec<String> = (0..spec.n_countries)
            .map(|i| all[i * all.len() / spec.n_countries].to_string())
            .collect();
        let mut latent_rng = stream_rng(spec.seed, "synth-latent", 0);
        let mut bench_rng = stream_rng(spec.seed, "synth-benchmark", 0);
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let countries = codes
            .into_iter()
            .enumerate()
            .map(|(i, country)| {
                let latent = match &spec.latent {
                    Some(l) => l[i],
                    None => latent_rng.random_range(spec.latent_range.0..=spec.latent_range.1),
                };
                let benchmark =
                    (latent + spec.benchmark_noise * noise.sample(&mut bench_rng)).clamp(0.0, 1.0);
                let internet_penetration = bench_rng.random_range(0.1..1.0);
                let mut crng = stream_rng(spec.seed, "synth-country", i as u64);
                let n_users =
                    crng.random_range(spec.users_per_country.0..=spec.users_per_country.1);
                let region_offsets = (0..spec.regions_per_country)
                    .map(|_| spec.region_effect * noise.sample(&mut crng))
                    .collect();
                CountryTruth {
                    country,
                    language: spec.languages[i % spec.languages.len()].clone(),
                    latent,
                    benchmark,
                    internet_penetration,
                    n_users,
                    region_offsets,
                }
            })
            .collect();
        let mut lexicons = BTreeMap::new();
        let mut loff_ranges = Vec::new();
        for (k, lang) in spec.languages.iter().enumerate() {
            lexicons.insert(
                lang.clone(),
                synthetic_lexicon(lang, k, spec.vocab_size, spec.zipf_exponent)?,
            );
            loff_ranges.push(LoffRange::new(lang, spec.loff_band.0, spec.loff_band.1)?);
        }
        Ok(SyntheticCorpus {
            truth: SyntheticTruth {
                spec: spec.clone(),
                countries,
                loff_ranges,
            },
            lexicons,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.truth.spec
    }

    /// Skill of one user before clipping.
    fn skill(&self, c: &CountryTruth, gender: Gender, region: usize, rng: &mut impl Rng) -> f64 {
        let spec = self.spec();
        let g = if gender == Gender::Female {
            spec.gender_effect
        } else {
            0.0
        };
        let e: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        c.latent + g + c.region_offsets[region] + spec.skill_noise * e
    }

    /// Posts of country `index`, user by user. Seeded per country, so
    /// countries can be generated independently and in any order.
    pub fn country_posts(&self, index: usize) -> Vec<PostRecord> {
        let spec = self.spec();
        let c = &self.truth.countries[index];
        let lang_index = spec
            .languages
            .iter()
            .position(|l| *l == c.language)
            .expect("known language");
        let verbosity = spec.language_verbosity[lang_index];
        let lexicon = &self.lexicons[&c.language];
        let mut rng = stream_rng(spec.seed, "synth-users", index as u64);
        let mut out = Vec::new();
        for u in 0..c.n_users {
            let gender = if rng.random_bool(0.5) {
                Gender::Female
            } else {
                Gender::Male
            };
            let region = rng.random_range(0..spec.regions_per_country);
            let skill = self.skill(c, gender, region, &mut rng).clamp(0.0, 1.0);
            let reach =
                ((spec.vocab_size as f64 * skill).ceil() as usize).clamp(1, spec.vocab_size);
            let zipf = Zipf::new(reach as f64, spec.zipf_exponent).expect("valid Zipf");
            let posts = rng.random_range(spec.posts_per_user.0..=spec.posts_per_user.1);
            let user_id = format!("{}-{u:05}", c.country);
            for _ in 0..posts {
                let base = rng.random_range(spec.tokens_per_post.0..=spec.tokens_per_post.1);
                let n_tok = ((base as f64 * verbosity).round() as usize).max(1);
                let mut text = String::with_capacity(n_tok * 7);
                for t in 0..n_tok {
                    if t > 0 {
                        text.push(' ');
                    }
                    let r = zipf.sample(&mut rng) as usize - 1;
                    text.push_str(lexicon.word(r).expect("rank within vocabulary"));
                }
                if spec.url_post_rate > 0.0 && rng.random_bool(spec.url_post_rate) {
                    text.push_str(" https://example.org/p");
                }
                out.push(PostRecord {
                    user_id: user_id.clone(),
                    country: c.country.clone(),
                    region: Some(format!("{}-R{}", c.country, region + 1)),
                    gender,
                    language: c.language.clone(),
                    text,
                });
            }
        }
        out
    }

    pub fn posts(&self) -> impl Iterator<Item = PostRecord> + '_ {
        (0..self.truth.countries.len()).flat_map(move |i| self.country_posts(i))
    }
}
