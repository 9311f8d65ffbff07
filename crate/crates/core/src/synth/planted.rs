//! Popularity curves with a known elbow and knee.
//!
//! `f(u) = A·exp(−u/s) + (1 − A)·exp(−u/L)` on `u = rank / (ranks − 1)`: a
//! fast decay of weight `A` and scale `s` over a slow tail of scale `L`. In the
//! unit-square frame the detectors use, the knee is where the normalized slope
//! equals −1 and the elbow is the curvature maximum; both are solved here
//! numerically so planted curves carry their own ground truth.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::PopularityCurve;
use crate::rng::stream_rng;

pub const PLANTED_RANKS: usize = 200_000;
pub const PLANTED_SLOW_SCALE: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedCurve {
    pub fast_weight: f64,
    pub fast_scale: f64,
    pub slow_scale: f64,
    pub ranks: usize,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl PlantedCurve {
    fn span(&self) -> f64 {
        (self.ranks - 1) as f64
    }

    fn f(&self, u: f64) -> f64 {
        let a = self.fast_weight;
        a * (-u / self.fast_scale).exp() + (1.0 - a) * (-u / self.slow_scale).exp()
    }

    pub fn value(&self, rank: f64) -> f64 {
        self.f(rank / self.span())
    }

    /// First three derivatives of the unit-square normalized curve.
    fn derivs(&self, u: f64) -> (f64, f64, f64) {
        let (a, s, l) = (self.fast_weight, self.fast_scale, self.slow_scale);
        let c = 1.0 / (1.0 - self.f(1.0));
        let e1 = a * (-u / s).exp();
        let e2 = (1.0 - a) * (-u / l).exp();
        let y1 = -c * (e1 / s + e2 / l);
        let y2 = c * (e1 / (s * s) + e2 / (l * l));
        let y3 = -c * (e1 / (s * s * s) + e2 / (l * l * l));
        (y1, y2, y3)
    }

    fn kappa(&self, u: f64) -> f64 {
        let (y1, y2, _) = self.derivs(u);
        y2.abs() / (1.0 + y1 * y1).powf(1.5)
    }

    /// Knee: the rank where the normalized slope crosses −1.
    pub fn true_k1(&self) -> Option<f64> {
        let g = |u: f64| self.derivs(u).0 + 1.0;
        if g(0.0) >= 0.0 || g(1.0) <= 0.0 {
            return None;
        }
        Some(bisect(0.0, 1.0, g) * self.span())
    }

    /// Elbow: the curvature maximum among stationary points of κ.
    pub fn true_k0(&self) -> Option<f64> {
        let g = |u: f64| {
            let (y1, y2, y3) = self.derivs(u);
            y3 * (1.0 + y1 * y1) - 3.0 * y1 * y2 * y2
        };
        let steps = 4000;
        let (lo, hi) = (1e-7f64.ln(), 0.5f64.ln());
        let mut best: Option<(f64, f64)> = None;
        let mut prev_u = lo.exp();
        let mut prev_g = g(prev_u);
        for i in 1..=steps {
            let u = (lo + (hi - lo) * i as f64 / steps as f64).exp();
            let gu = g(u);
            if (gu > 0.0) != (prev_g > 0.0) {
                let root = bisect(prev_u, u, g);
                let k = self.kappa(root);
                if best.is_none_or(|(_, bk)| k > bk) {
                    best = Some((root, k));
                }
            }
            prev_u = u;
            prev_g = gu;
        }
        best.map(|(u, _)| u * self.span())
    }

    /// Finds the fast weight and scale whose elbow and knee fall at the given
    /// ranks, with the slow scale fixed.
    pub fn solve(k0: f64, k1: f64, ranks: usize, slow_scale: f64) -> Result<PlantedCurve> {
        if !(k0 > 0.0 && k1 > k0 && k1 < ranks as f64) {
            return Err(Error::InvalidInput(format!(
                "no planted curve for k0 = {k0}, k1 = {k1}"
            )));
        }
        let with = |a: f64, s: f64| PlantedCurve {
            fast_weight: a,
            fast_scale: s,
            slow_scale,
            ranks,
        };
        // inner: the scale that puts the elbow at k0 for a given weight
        let scale_for = |a: f64| -> Option<f64> {
            let h = |ls: f64| with(a, ls.exp()).true_k0().map_or(f64::NAN, |k| k - k0);
            let (lo, hi) = ((1e-5f64).ln(), (slow_scale * 0.5).ln());
            let (hl, hh) = (h(lo), h(hi));
            if !(hl < 0.0 && hh > 0.0) {
                return None;
            }
            Some(bisect(lo, hi, h).exp())
        };
        // outer: the knee/elbow ratio falls as the fast weight grows
        let ratio_gap = |a: f64| -> f64 {
            match scale_for(a) {
                Some(s) => with(a, s).true_k1().map_or(f64::NAN, |k| k / k0 - k1 / k0),
                None => f64::NAN,
            }
        };
        let (alo, ahi) = (0.6, 0.97);
        let (gl, gh) = (ratio_gap(alo), ratio_gap(ahi));
        if !(gl > 0.0 && gh < 0.0) {
            return Err(Error::InvalidInput(format!(
                "knee/elbow ratio {:.3} outside the planted family's range",
                k1 / k0
            )));
        }
        let a = bisect(alo, ahi, ratio_gap);
        let s =
            scale_for(a).ok_or_else(|| Error::Numerical("planted scale solve failed".into()))?;
        Ok(with(a, s))
    }

    /// Curve over ranks 0..ranks with multiplicative noise `y·(1 + σ·ε)`,
    /// clipped to [0, 1].
    pub fn materialize(&self, language: &str, sigma: f64, seed: u64) -> PopularityCurve {
        let mut rng = stream_rng(seed, "planted-noise", 0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let points = (0..self.ranks)
            .map(|r| {
                let y = self.value(r as f64);
                let y = if sigma > 0.0 {
                    y * (1.0 + sigma * normal.sample(&mut rng))
                } else {
                    y
                };
                (r as u32, y.clamp(0.0, 1.0))
            })
            .collect();
        PopularityCurve {
            language: language.to_string(),
            users: 0,
            points,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solved_curve_hits_targets() {
        for (k0, k1) in [
            (5000.0, 9000.0),
            (5000.0, 16000.0),
            (6000.0, 21000.0),
            (3000.0, 10000.0),
        ] {
            let p = PlantedCurve::solve(k0, k1, PLANTED_RANKS, PLANTED_SLOW_SCALE).unwrap();
            assert!((p.true_k0().unwrap() / k0 - 1.0).abs() < 1e-6, "{p:?}");
            assert!((p.true_k1().unwrap() / k1 - 1.0).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn truth_matches_finite_difference_oracle() {
        let p = PlantedCurve::solve(5000.0, 9000.0, PLANTED_RANKS, PLANTED_SLOW_SCALE).unwrap();
        // normalized curve on the rank lattice, derivatives by central differences
        let n = p.ranks;
        let f1 = p.value((n - 1) as f64);
        let y = |r: f64| (p.value(r) - f1) / (1.0 - f1);
        let h = 1.0;
        let span = (n - 1) as f64;
        let mut best = (0.0, 0.0);
        let mut knee = None;
        for r in 1..40_000 {
            let r = r as f64;
            let d1 = (y(r + h) - y(r - h)) / (2.0 * h) * span;
            let d2 = (y(r + h) - 2.0 * y(r) + y(r - h)) / (h * h) * span * span;
            let k = d2.abs() / (1.0 + d1 * d1).powf(1.5);
            if k > best.1 {
                best = (r, k);
            }
            if knee.is_none() && d1 >= -1.0 {
                knee = Some(r);
            }
        }
        assert!((best.0 - p.true_k0().unwrap()).abs() <= 2.0);
        assert!((knee.unwrap() - p.true_k1().unwrap()).abs() <= 2.0);
    }

    #[test]
    fn materialize_is_seeded_and_bounded() {
        let p = PlantedCurve::solve(5000.0, 9000.0, 1000, PLANTED_SLOW_SCALE);
        assert!(p.is_err());
        let p = PlantedCurve::solve(5000.0, 9000.0, PLANTED_RANKS, PLANTED_SLOW_SCALE).unwrap();
        let a = p.materialize("en", 0.02, 7);
        let b = p.materialize("en", 0.02, 7);
        assert_eq!(a, b);
        assert_eq!(a.points.len(), PLANTED_RANKS);
        assert!(a.points.iter().all(|&(_, y)| (0.0..=1.0).contains(&y)));
        assert_eq!(p.materialize("en", 0.0, 1).points[0].1, 1.0);
    }

    #[test]
    fn unreachable_ratio_is_rejected() {
        assert!(PlantedCurve::solve(5000.0, 150_000.0, PLANTED_RANKS, PLANTED_SLOW_SCALE).is_err());
        assert!(PlantedCurve::solve(9000.0, 5000.0, PLANTED_RANKS, PLANTED_SLOW_SCALE).is_err());
    }
}
