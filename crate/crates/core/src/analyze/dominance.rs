//! Does the representative language's user share drive a country's
//! estimate or its regional spread?

use serde::{Deserialize, Serialize};

use super::correlation::{spearman_bootstrap, CorrelationReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub country: String,
    /// Share of users writing in the representative language, in (0, 1].
    pub share: f64,
    pub olle: Option<f64>,
    pub disparity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharePair {
    pub country: String,
    pub share: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub olle_pairs: Vec<SharePair>,
    pub disparity_pairs: Vec<SharePair>,
    /// Omitted below three pairs or when either side is constant.
    pub olle_correlation: Option<CorrelationReport>,
    pub disparity_correlation: Option<CorrelationReport>,
}

fn correlate(
    pairs: &[SharePair],
    replicates: usize,
    seed: u64,
) -> Result<Option<CorrelationReport>> {
    if pairs.len() < 3 {
        return Ok(None);
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.share).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    match spearman_bootstrap(&x, &y, replicates, seed) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Pairs of (share, OLLE) and (share, disparity) over multilingual countries
/// (share below 1), with Spearman reports where there is enough data.
pub fn dominance_bias_check(
    rows: &[DominanceRow],
    replicates: usize,
    seed: u64,
) -> Result<DominanceReport> {
    if let Some(r) = rows.iter().find(|r| !(r.share > 0.0 && r.share <= 1.0)) {
        return Err(Error::InvalidInput(format!(
            "{}: language share {} outside (0, 1]",
            r.country, r.share
        )));
    }
    let multi: Vec<&DominanceRow> = rows.iter().filter(|r| r.share < 1.0).collect();
    let pairs = |pick: fn(&DominanceRow) -> Option<f64>| -> Vec<SharePair> {
        multi
            .iter()
            .filter_map(|r| {
                pick(r).map(|value| SharePair {
                    country: r.country.clone(),
                    share: r.share,
                    value,
                })
            })
            .collect()
    };
    let olle_pairs = pairs(|r| r.olle);
    let disparity_pairs = pairs(|r| r.disparity);
    Ok(DominanceReport {
        olle_correlation: correlate(&olle_pairs, replicates, seed)?,
        disparity_correlation: correlate(&disparity_pairs, replicates, seed)?,
        olle_pairs,
        disparity_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::stats::spearman;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn row(c: &str, share: f64, olle: f64) -> DominanceRow {
        DominanceRow {
            country: c.into(),
            share,
            olle: Some(olle),
            disparity: None,
        }
    }

    #[test]
    fn single_country_emits_pairs_only() {
        let r = dominance_bias_check(&[row("AA", 0.6, 0.4), row("BB", 1.0, 0.5)], 100, 1).unwrap();
        assert_eq!(r.olle_pairs.len(), 1);
        assert!(r.olle_correlation.is_none());
        assert!(r.disparity_pairs.is_empty());
    }

    #[test]
    fn monolingual_countries_are_excluded() {
        let rows: Vec<DominanceRow> = (0..5)
            .map(|i| row(&format!("C{i}"), 1.0, i as f64))
            .collect();
        let r = dominance_bias_check(&rows, 100, 1).unwrap();
        assert!(r.olle_pairs.is_empty());
        assert!(dominance_bias_check(&[row("X", 1.2, 0.1)], 10, 1).is_err());
    }

    #[test]
    fn unbiased_data_stays_inside_permutation_null() {
        // independent share and OLLE: the observed rho must sit inside the
        // central 99% of its permutation distribution
        let mut rng = stream_rng(3, "dominance", 0);
        let rows: Vec<DominanceRow> = (0..13)
            .map(|i| {
                row(
                    &format!("C{i:02}"),
                    rng.random_range(0.3..0.99),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let r = dominance_bias_check(&rows, 500, 2).unwrap();
        let rho = r.olle_correlation.unwrap().rho;
        let x: Vec<f64> = r.olle_pairs.iter().map(|p| p.share).collect();
        let mut y: Vec<f64> = r.olle_pairs.iter().map(|p| p.value).collect();
        let mut null: Vec<f64> = (0..4000)
            .map(|_| {
                y.shuffle(&mut rng);
                spearman(&x, &y).unwrap().abs()
            })
            .collect();
        null.sort_by(f64::total_cmp);
        assert!(rho.abs() <= null[(0.99 * null.len() as f64) as usize]);
    }
}
