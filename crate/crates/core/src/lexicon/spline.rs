//! Penalized cubic regression spline (B-spline basis, difference penalty)
//! with k-fold cross-validated smoothing parameter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Curve with value and first two derivatives.
pub trait SmoothCurve {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    /// Smoothing parameter with the smallest CV error.
    MinCv,
    /// Largest smoothing parameter within one standard error of the minimum.
    OneSe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub intervals: usize,
    pub folds: usize,
    pub penalty_order: usize,
    /// log10 grid for the relative smoothing parameter.
    pub log10_lambda: (f64, f64, f64),
    /// Knot warp scale as a fraction of the rank range; smaller packs more
    /// knots into the head of the curve.
    pub warp: f64,
    pub seed: u64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            intervals: 60,
            folds: 10,
            penalty_order: 3,
            log10_lambda: (-10.0, 3.0, 0.25),
            warp: 1.0 / 400.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmootherFit {
    /// Full clamped knot vector (degree 3).
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Relative smoothing parameter (penalty scaled to the Gram trace).
    pub lambda: f64,
    /// Mean held-out squared error at `lambda`.
    pub cv_score: f64,
    pub fold_seed: u64,
    /// Constant input: the fit is the constant and derivatives are zero.
    pub degenerate: bool,
}

impl SmootherFit {
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        if self.degenerate {
            return if order == 0 {
                self.coefficients[0]
            } else {
                0.0
            };
        }
        let (span, ders) = basis_derivs(&self.knots, x);
        (0..4)
            .map(|j| ders[order][j] * self.coefficients[span - 3 + j])
            .sum()
    }
}

impl SmoothCurve for SmootherFit {
    fn value(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }
    fn d1(&self, x: f64) -> f64 {
        self.eval(x, 1)
    }
    fn d2(&self, x: f64) -> f64 {
        self.eval(x, 2)
    }
}

/// Clamped cubic knot vector over [lo, hi] with log-warped breakpoints.
pub fn warped_knots(lo: f64, hi: f64, intervals: usize, warp: f64) -> Vec<f64> {
    let range = hi - lo;
    let rho = (range * warp).max(f64::MIN_POSITIVE);
    let top = (range / rho).ln_1p();
    let mut knots = vec![lo; 3];
    for i in 0..=intervals {
        let t = top * i as f64 / intervals as f64;
        knots.push(lo + rho * t.exp_m1());
    }
    knots[3] = lo;
    *knots.last_mut().unwrap() = hi;
    knots.extend([hi; 3]);
    knots
}

fn find_span(knots: &[f64], x: f64) -> usize {
    let nb = knots.len() - 4;
    if x >= knots[nb] {
        return nb - 1;
    }
    if x <= knots[3] {
        return 3;
    }
    // Largest i with knots[i] <= x < knots[i+1], i in [3, nb-1].
    let mut lo = 3;
    let mut hi = nb;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Non-zero cubic basis functions and their first two derivatives at x.
fn basis_derivs(knots: &[f64], x: f64) -> (usize, [[f64; 4]; 3]) {
    const P: usize = 3;
    let span = find_span(knots, x);
    let mut ndu = [[0.0f64; 4]; 4];
    let mut left = [0.0f64; 4];
    let mut right = [0.0f64; 4];
    ndu[0][0] = 1.0;
    for j in 1..=P {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = [[0.0f64; 4]; 3];
    for j in 0..=P {
        ders[0][j] = ndu[j][P];
    }
    let mut a = [[0.0f64; 4]; 2];
    for r in 0..=P {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=2usize {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = P - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize {
                k - 1
            } else {
                P - r
            };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = P as f64;
    for row in ders.iter_mut().skip(1) {
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= (P - 1) as f64;
    }
    (span, ders)
}

/// Cholesky solve of a dense symmetric positive-definite system.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

/// Cross-validation path over the smoothing grid; fits for any selection
/// rule share the same Gram matrices.
pub struct SmoothingPath {
    knots: Vec<f64>,
    nb: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    penalty: Vec<f64>,
    scale: f64,
    lambdas: Vec<f64>,
    cv_sse: Vec<Vec<f64>>,
    n: usize,
    seed: u64,
    constant: Option<f64>,
}

impl SmoothingPath {
    pub fn new(xs: &[f64], ys: &[f64], cfg: &SmootherConfig) -> Result<Self> {
        Self::weighted(xs, ys, None, cfg)
    }

    /// As `new`, with per-point weights (inverse variances) in both the fit
    /// and the held-out error.
    pub fn weighted(
        xs: &[f64],
        ys: &[f64],
        weights: Option<&[f64]>,
        cfg: &SmootherConfig,
    ) -> Result<Self> {
        if weights
            .is_some_and(|w| w.len() != xs.len() || w.iter().any(|&v| !(v.is_finite() && v > 0.0)))
        {
            return Err(Error::InvalidInput(
                "weights must be positive, finite and one per point".into(),
            ));
        }
        if xs.len() != ys.len() {
            return Err(Error::InvalidInput("x and y lengths differ".into()));
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite curve point".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "ranks must be strictly increasing".into(),
            ));
        }
        if xs.len() < 20 {
            return Err(Error::InvalidInput(format!(
                "smoothing needs at least 20 distinct ranks, got {}",
                xs.len()
            )));
        }
        if cfg.folds < 2 || cfg.penalty_order == 0 || cfg.intervals == 0 {
            return Err(Error::Config(
                "smoother needs ≥2 folds, a penalty order and intervals".into(),
            ));
        }
        let lo = xs[0];
        let hi = xs[xs.len() - 1];
        let intervals = cfg.intervals.min((xs.len() / 4).max(1));
        let knots = warped_knots(lo, hi, intervals, cfg.warp);
        let nb = knots.len() - 4;
        let first = ys[0];
        let constant = ys.iter().all(|&y| y == first).then_some(first);

        let mut rng = stream_rng(cfg.seed, "cv-folds", 0);
        let folds: Vec<usize> = (0..xs.len())
            .map(|_| rng.random_range(0..cfg.folds))
            .collect();
        let mut gram = vec![0.0; cfg.folds * nb * nb];
        let mut rhs = vec![0.0; cfg.folds * nb];
        let mut by_fold: Vec<Vec<(usize, [f64; 4], f64, f64)>> = vec![Vec::new(); cfg.folds];
        for (i, ((&x, &y), &f)) in xs.iter().zip(ys).zip(&folds).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let (span, ders) = basis_derivs(&knots, x);
            let b = ders[0];
            let base = span - 3;
            let g = &mut gram[f * nb * nb..(f + 1) * nb * nb];
            for i in 0..4 {
                for j in 0..4 {
                    g[(base + i) * nb + base + j] += w * b[i] * b[j];
                }
                rhs[f * nb + base + i] += w * b[i] * y;
            }
            by_fold[f].push((base, b, y, w));
        }

        let order = cfg.penalty_order.min(nb - 1);
        let mut diff: Vec<Vec<f64>> = (0..nb)
            .map(|i| (0..nb).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..order {
            diff = diff
                .windows(2)
                .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
                .collect();
        }
        let mut penalty = vec![0.0; nb * nb];
        for row in &diff {
            for i in 0..nb {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..nb {
                    penalty[i * nb + j] += row[i] * row[j];
                }
            }
        }
        let total: Vec<f64> = (0..nb * nb)
            .map(|k| (0..cfg.folds).map(|f| gram[f * nb * nb + k]).sum())
            .collect();
        let trace_g: f64 = (0..nb).map(|i| total[i * nb + i]).sum();
        let trace_p: f64 = (0..nb).map(|i| penalty[i * nb + i]).sum();
        let scale = trace_g / trace_p;

        let (a, b, step) = cfg.log10_lambda;
        let steps = ((b - a) / step).round() as usize;
        let lambdas: Vec<f64> = (0..=steps)
            .map(|i| 10f64.powf(a + step * i as f64))
            .collect();

        let mut path = SmoothingPath {
            knots,
            nb,
            gram,
            rhs,
            penalty,
            scale,
            lambdas,
            cv_sse: Vec::new(),
            n: xs.len(),
            seed: cfg.seed,
            constant,
        };
        if constant.is_some() {
            return Ok(path);
        }
        let folds_n = cfg.folds;
        let mut cv_sse = Vec::with_capacity(path.lambdas.len());
        for &lam in &path.lambdas {
            let mut sse = vec![0.0; folds_n];
            for (f, s) in sse.iter_mut().enumerate() {
                let c = path.solve(lam, Some(f))?;
                *s = by_fold[f]
                    .iter()
                    .map(|(base, bv, y, w)| {
                        let pred: f64 = (0..4).map(|j| bv[j] * c[base + j]).sum();
                        w * (y - pred) * (y - pred)
                    })
                    .sum();
            }
            cv_sse.push(sse);
        }
        path.cv_sse = cv_sse;
        Ok(path)
    }

    fn solve(&self, lam: f64, hold_out: Option<usize>) -> Result<Vec<f64>> {
        let nb = self.nb;
        let folds = self.rhs.len() / nb;
        let mut a = vec![0.0; nb * nb];
        let mut b = vec![0.0; nb];
        for f in 0..folds {
            if Some(f) == hold_out {
                continue;
            }
            for k in 0..nb * nb {
                a[k] += self.gram[f * nb * nb + k];
            }
            for k in 0..nb {
                b[k] += self.rhs[f * nb + k];
            }
        }
        for k in 0..nb * nb {
            a[k] += lam * self.scale * self.penalty[k];
        }
        cholesky_solve(&a, &b, nb).ok_or_else(|| {
            Error::Numerical("penalized normal equations not positive definite".into())
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Total held-out squared error per smoothing parameter.
    pub fn cv_totals(&self) -> Vec<f64> {
        self.cv_sse.iter().map(|s| s.iter().sum()).collect()
    }

    pub fn select(&self, rule: LambdaRule) -> Result<SmootherFit> {
        if self.constant.is_some() {
            return self.fit_at(0);
        }
        let totals = self.cv_totals();
        let best = (0..totals.len())
            .min_by(|&a, &b| totals[a].total_cmp(&totals[b]))
            .expect("non-empty lambda grid");
        let pick = match rule {
            LambdaRule::MinCv => best,
            LambdaRule::OneSe => {
                let sse = &self.cv_sse[best];
                let k = sse.len() as f64;
                let m = totals[best] / k;
                let sd = (sse.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (k - 1.0)).sqrt();
                let limit = totals[best] + sd * k.sqrt();
                (0..totals.len())
                    .rev()
                    .find(|&i| totals[i] <= limit)
                    .unwrap_or(best)
            }
        };
        self.fit_at(pick)
    }

    /// Fit at the `index`-th smoothing parameter of the grid.
    pub fn fit_at(&self, index: usize) -> Result<SmootherFit> {
        if let Some(c) = self.constant {
            return Ok(SmootherFit {
                knots: self.knots.clone(),
                coefficients: vec![c; self.nb],
                lambda: 0.0,
                cv_score: 0.0,
                fold_seed: self.seed,
                degenerate: true,
            });
        }
        let totals = self.cv_totals();
        let pick = index.min(self.lambdas.len() - 1);
        let lambda = self.lambdas[pick];
        Ok(SmootherFit {
            knots: self.knots.clone(),
            coefficients: self.solve(lambda, None)?,
            lambda,
            cv_score: totals[pick] / self.n as f64,
            fold_seed: self.seed,
            degenerate: false,
        })
    }
}

/// Penalized cubic spline with the CV-minimizing smoothing parameter.
pub fn fit_smoother(xs: &[f64], ys: &[f64], cfg: &SmootherConfig) -> Result<SmootherFit> {
    SmoothingPath::new(xs, ys, cfg)?.select(LambdaRule::MinCv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn basis_partition_of_unity_and_derivatives() {
        let knots = warped_knots(0.0, 100.0, 7, 0.1);
        for i in 0..=200 {
            let x = i as f64 * 0.5;
            let (_, d) = basis_derivs(&knots, x);
            assert_relative_eq!(d[0].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(d[1].iter().sum::<f64>().abs() < 1e-10);
            assert!(d[2].iter().sum::<f64>().abs() < 1e-8);
        }
    }

    #[test]
    fn exact_cubic_reproduced() {
        let xs: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let f = |x: f64| 2.0 - 0.03 * x + 1e-4 * x * x - 1e-7 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let fit = fit_smoother(&xs, &ys, &SmootherConfig::default()).unwrap();
        let rmse = (xs
            .iter()
            .map(|&x| (fit.value(x) - f(x)).powi(2))
            .sum::<f64>()
            / 400.0)
            .sqrt();
        assert!(rmse < 1e-6, "rmse {rmse}");
        assert_relative_eq!(
            fit.d1(100.0),
            -0.03 + 2e-4 * 100.0 - 3e-7 * 1e4,
            epsilon = 1e-6
        );
    }

    #[test]
    fn constant_curve_is_degenerate() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let fit = fit_smoother(&xs, &vec![0.3; 50], &SmootherConfig::default()).unwrap();
        assert!(fit.degenerate);
        for &x in &xs {
            assert_eq!(fit.d1(x), 0.0);
            assert_eq!(fit.d2(x), 0.0);
            assert_eq!(fit.value(x), 0.3);
        }
    }

    #[test]
    fn noisy_elbow_recovered_below_noise() {
        // steep exponential head joined to a flat tail
        let truth = |x: f64| 0.9 * (-x / 60.0).exp() + 0.05 * (-x / 2000.0).exp();
        let xs: Vec<f64> = (0..3000).map(|i| i as f64).collect();
        let sigma = 0.01;
        let mut rng = stream_rng(5, "noise", 0);
        let nd = Normal::new(0.0, sigma).unwrap();
        let ys: Vec<f64> = xs.iter().map(|&x| truth(x) + nd.sample(&mut rng)).collect();
        let fit = fit_smoother(&xs, &ys, &SmootherConfig::default()).unwrap();
        let rmse = (xs
            .iter()
            .map(|&x| (fit.value(x) - truth(x)).powi(2))
            .sum::<f64>()
            / 3000.0)
            .sqrt();
        assert!(rmse < sigma, "rmse {rmse}");
    }

    #[test]
    fn too_few_points_rejected() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(fit_smoother(&xs, &xs, &SmootherConfig::default()).is_err());
    }

    #[test]
    fn weights_match_replication() {
        // weight 2 on a point equals observing it twice
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 7.0).sin()).collect();
        let mut w = vec![1.0; 40];
        w[13] = 2.0;
        let cfg = SmootherConfig {
            folds: 2,
            ..Default::default()
        };
        let a = SmoothingPath::weighted(&xs, &ys, Some(&w), &cfg)
            .unwrap()
            .fit_at(20)
            .unwrap();
        let unit = SmoothingPath::weighted(&xs, &ys, Some(&[1.0; 40]), &cfg)
            .unwrap()
            .fit_at(20)
            .unwrap();
        let plain = SmoothingPath::new(&xs, &ys, &cfg)
            .unwrap()
            .fit_at(20)
            .unwrap();
        assert_eq!(unit.coefficients, plain.coefficients);
        assert!((a.value(13.0) - ys[13]).abs() <= (plain.value(13.0) - ys[13]).abs());
        assert!(SmoothingPath::weighted(&xs, &ys, Some(&[0.0; 40]), &cfg).is_err());
    }
}
