//! Spearman correlation with percentile-bootstrap intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{average_ranks, quantile_linear, spearman, t_two_sided_p};

pub const DEFAULT_REPLICATES: usize = 1000;
/// Largest sample for which the permutation p-value is enumerated.
pub const EXACT_P_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    TApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub p_value: f64,
    pub p_method: PValueMethod,
    pub replicates: usize,
    /// Resamples where x or y came out constant.
    pub dropped: usize,
    pub seed: u64,
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "correlation needs n ≥ 3, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "correlation input must be finite".into(),
        ));
    }
    Ok(())
}

/// Counts of T = Σ i·π(i) over all permutations π of 1..=n.
fn permutation_sums(n: usize) -> Vec<u64> {
    let max: usize = (1..=n).map(|i| i * i).sum();
    let full = 1usize << n;
    let mut dp = vec![vec![0u64; max + 1]; full];
    dp[0][0] = 1;
    for mask in 0..full {
        let pos = mask.count_ones() as usize + 1;
        if pos > n {
            continue;
        }
        for v in 0..n {
            if mask & (1 << v) != 0 {
                continue;
            }
            let add = pos * (v + 1);
            let next = mask | (1 << v);
            for s in 0..=max - add {
                let c = dp[mask][s];
                if c != 0 {
                    dp[next][s + add] += c;
                }
            }
        }
    }
    dp.pop().expect("non-empty")
}

/// Two-sided permutation p-value for untied samples of size ≤ 12.
fn exact_p(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len();
    let t_obs: i64 = rx
        .iter()
        .zip(ry)
        .map(|(a, b)| (*a as i64) * (*b as i64))
        .sum();
    let centre = (n * (n + 1) * (n + 1)) as i64;
    let d_obs = (4 * t_obs - centre).abs();
    let counts = permutation_sums(n);
    let total: u64 = counts.iter().sum();
    let hit: u64 = counts
        .iter()
        .enumerate()
        .filter(|(t, _)| (4 * *t as i64 - centre).abs() >= d_obs)
        .map(|(_, c)| c)
        .sum();
    hit as f64 / total as f64
}

fn t_approx_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    t_two_sided_p(rho * (df / (1.0 - rho * rho)).sqrt(), df)
}

/// Spearman p-value: permutation-exact for small untied samples, t otherwise.
pub fn spearman_p_value(x: &[f64], y: &[f64]) -> Result<(f64, PValueMethod)> {
    check_pairs(x, y)?;
    let rho = spearman(x, y)
        .ok_or_else(|| Error::Degenerate("Spearman rho undefined for constant input".into()))?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let untied = |r: &[f64]| {
        r.iter().all(|v| v.fract() == 0.0) && {
            let mut s: Vec<i64> = r.iter().map(|v| *v as i64).collect();
            s.sort_unstable();
            s.windows(2).all(|w| w[0] != w[1])
        }
    };
    if x.len() <= EXACT_P_MAX_N && untied(&rx) && untied(&ry) {
        Ok((exact_p(&rx, &ry), PValueMethod::Exact))
    } else {
        Ok((t_approx_p(rho, x.len()), PValueMethod::TApproximation))
    }
}

/// Spearman rho on the full sample with a 95% percentile-bootstrap interval.
///
/// Replicate `b` draws its resample from its own counter-seeded stream, so
/// the interval does not depend on thread count.
pub fn spearman_bootstrap(
    x: &[f64],
    y: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    check_pairs(x, y)?;
    if replicates == 0 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    let (p_value, p_method) = spearman_p_value(x, y)?;
    let rho = spearman(x, y).expect("checked above");
    let n = x.len();
    let reps: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, "spearman-bootstrap", b);
            let mut bx = Vec::with_capacity(n);
            let mut by = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                bx.push(x[i]);
                by.push(y[i]);
            }
            spearman(&bx, &by)
        })
        .collect();
    let mut kept: Vec<f64> = reps.iter().flatten().copied().collect();
    let dropped = replicates - kept.len();
    if kept.is_empty() {
        return Err(Error::Degenerate(
            "every bootstrap resample was constant".into(),
        ));
    }
    kept.sort_by(f64::total_cmp);
    Ok(CorrelationReport {
        rho,
        ci_low: quantile_linear(&kept, 0.025),
        ci_high: quantile_linear(&kept, 0.975),
        n,
        p_value,
        p_method,
        replicates,
        dropped,
        seed,
    })
}
