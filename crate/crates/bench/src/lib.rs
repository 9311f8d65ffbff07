//! Inputs shared by the benchmarks.

use std::collections::BTreeMap;

use olle_core::aggregate::UserLoffStat;
use olle_core::corpus::{Gender, PostRecord};
use olle_core::lexicon::FrequencyLexicon;
use olle_core::synth::{SyntheticCorpus, SyntheticSpec};
use rand::Rng;

/// A corpus of `countries` countries with 1000 users each.
pub fn small_corpus(
    countries: usize,
) -> (
    Vec<PostRecord>,
    BTreeMap<String, FrequencyLexicon>,
    SyntheticSpec,
) {
    let spec = SyntheticSpec {
        n_countries: countries,
        users_per_country: (1000, 1000),
        ..SyntheticSpec::default()
    };
    let corpus = SyntheticCorpus::generate(&spec).expect("feasible spec");
    let posts = corpus.posts().collect();
    (posts, corpus.lexicons.clone(), spec)
}

/// `n` user statistics spread over 20 countries, 2 languages and 4 regions.
pub fn user_population(n: usize, seed: u64) -> Vec<UserLoffStat> {
    let mut rng = olle_core::rng::stream_rng(seed, "bench-population", 0);
    (0..n)
        .map(|i| UserLoffStat {
            user_id: format!("u{i}"),
            country: format!("C{:02}", i % 20),
            region: Some(format!("R{}", i % 4)),
            gender: if i % 2 == 0 {
                Gender::Female
            } else {
                Gender::Male
            },
            language: if i % 7 == 0 { "fr".into() } else { "en".into() },
            post_count: rng.random_range(1..20),
            w_u: rng.random_range(0.0..2.0),
        })
        .collect()
}
