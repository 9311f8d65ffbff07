//! Ordinary least squares via Householder QR, with rank checks that name the
//! aliased columns instead of silently dropping them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{t_quantile, t_two_sided_p};

/// Column-major design matrix with column names.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: usize,
    data: Vec<f64>,
    /// Column 0 is an intercept (affects R² and F).
    pub intercept: bool,
}

impl Design {
    pub fn new(rows: usize, intercept: bool) -> Self {
        let mut d = Design {
            names: Vec::new(),
            rows,
            data: Vec::new(),
            intercept,
        };
        if intercept {
            d.push("(Intercept)", vec![1.0; rows]);
        }
        d
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        assert_eq!(column.len(), self.rows, "column length mismatch");
        self.names.push(name.into());
        self.data.extend(column);
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols()).map(|j| self.get(i, j)).collect()
    }

    /// Copy with row `skip` removed.
    pub fn without_row(&self, skip: usize) -> Design {
        let mut d = Design {
            names: self.names.clone(),
            rows: self.rows - 1,
            data: Vec::with_capacity(self.data.len()),
            intercept: self.intercept,
        };
        for j in 0..self.cols() {
            for (i, v) in self.column(j).iter().enumerate() {
                if i != skip {
                    d.data.push(*v);
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    /// Row-major covariance of the estimates.
    pub covariance: Vec<Vec<f64>>,
    pub n: usize,
    pub df_resid: usize,
    pub rss: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Residual standard error, sqrt(RSS / df).
    pub sigma: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub f_statistic: f64,
    pub f_df: (usize, usize),
    pub f_p_value: f64,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub leverage: Vec<f64>,
}

impl OlsFit {
    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coefficients.iter().position(|c| c.name == name)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(row)
            .map(|(c, x)| c.estimate * x)
            .sum()
    }

    /// Leave-one-out residuals y_i − ŷ_(−i) from the hat-matrix identity.
    pub fn loo_residuals(&self) -> Vec<f64> {
        self.residuals
            .iter()
            .zip(&self.leverage)
            .map(|(e, h)| {
                if *h < 1.0 - 1e-12 {
                    e / (1.0 - h)
                } else {
                    f64::NAN
                }
            })
            .collect()
    }
}

const RANK_TOL: f64 = 1e-9;

struct Qr {
    /// Householder vectors, column-major n×p (below and on the diagonal).
    v: Vec<f64>,
    r: Vec<f64>,
    n: usize,
    p: usize,
}

impl Qr {
    fn apply_qt(&self, y: &mut [f64]) {
        for k in 0..self.p {
            let v = &self.v[k * self.n..(k + 1) * self.n];
            let vv: f64 = v[k..].iter().map(|a| a * a).sum();
            if vv == 0.0 {
                continue;
            }
            let dot: f64 = v[k..].iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            let s = 2.0 * dot / vv;
            for i in k..self.n {
                y[i] -= s * v[i];
            }
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.r[j * self.p + i]
    }

    /// Solves R x = b (upper triangular, leading k×k block).
    fn back_solve(&self, b: &[f64], k: usize) -> Vec<f64> {
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = b[i];
            for j in i + 1..k {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.r(i, i);
        }
        x
    }
}

fn householder(design: &Design) -> Result<Qr> {
    let n = design.rows;
    let p = design.cols();
    let mut a = design.data.clone();
    let mut v = vec![0.0; n * p];
    let mut r = vec![0.0; p * p];
    for k in 0..p {
        let orig_norm = design.column(k).iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm = if k < n {
            a[k * n + k..(k + 1) * n]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        } else {
            0.0
        };
        for i in 0..k.min(n) {
            r[k * p + i] = a[k * n + i];
        }
        if k >= n || norm <= RANK_TOL * orig_norm || orig_norm == 0.0 {
            return Err(aliased(design, &r, p, k));
        }
        let x0 = a[k * n + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let vk = &mut v[k * n..(k + 1) * n];
        vk[k..].copy_from_slice(&a[k * n + k..(k + 1) * n]);
        vk[k] -= alpha;
        let vv: f64 = vk[k..].iter().map(|x| x * x).sum();
        for j in k..p {
            let col = &mut a[j * n..(j + 1) * n];
            let dot: f64 = vk[k..].iter().zip(&col[k..]).map(|(x, y)| x * y).sum();
            let s = 2.0 * dot / vv;
            for i in k..n {
                col[i] -= s * vk[i];
            }
        }
        r[k * p + k] = a[k * n + k];
    }
    Ok(Qr { v, r, n, p })
}

/// Builds the rank-deficiency error for column `k`, listing the earlier
/// columns it is a combination of.
fn aliased(design: &Design, r: &[f64], p: usize, k: usize) -> Error {
    let kk = k.min(design.rows);
    let mut coef = vec![0.0; kk];
    for i in (0..kk).rev() {
        let mut s = r[k * p + i];
        for j in i + 1..kk {
            s -= r[j * p + i] * coef[j];
        }
        coef[i] = s / r[i * p + i];
    }
    let mut columns = vec![design.names[k].clone()];
    let target = design.column(k).iter().map(|x| x * x).sum::<f64>().sqrt();
    for (j, c) in coef.iter().enumerate() {
        let scale = design.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
        if (c * scale).abs() > 1e-8 * target.max(f64::MIN_POSITIVE) {
            columns.push(design.names[j].clone());
        }
    }
    Error::RankDeficient { columns }
}

pub fn fit_ols(design: &Design, y: &[f64]) -> Result<OlsFit> {
    let n = design.rows;
    let p = design.cols();
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "response has {} rows, design has {}",
            y.len(),
            n
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || design.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite value in regression data".into(),
        ));
    }
    let qr = householder(design)?;
    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);
    let beta = qr.back_solve(&qty, p);

    let fitted: Vec<f64> = (0..n)
        .map(|i| (0..p).map(|j| design.get(i, j) * beta[j]).sum())
        .collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df = n - p;

    // R⁻¹ for the covariance σ² R⁻¹ R⁻ᵀ.
    let mut rinv = vec![vec![0.0; p]; p];
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        for (i, v) in qr.back_solve(&e, p).into_iter().enumerate() {
            rinv[i][col] = v;
        }
    }
    let sigma2 = if df > 0 { rss / df as f64 } else { f64::NAN };
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| sigma2 * (0..p).map(|k| rinv[i][k] * rinv[j][k]).sum::<f64>())
                .collect()
        })
        .collect();

    let tcrit = if df > 0 {
        t_quantile(0.975, df as f64)
    } else {
        f64::NAN
    };
    let coefficients = (0..p)
        .map(|j| {
            let se = covariance[j][j].sqrt();
            let t = beta[j] / se;
            Coefficient {
                name: design.names[j].clone(),
                estimate: beta[j],
                std_error: se,
                t_value: t,
                p_value: if df > 0 {
                    t_two_sided_p(t, df as f64)
                } else {
                    f64::NAN
                },
                ci_low: beta[j] - tcrit * se,
                ci_high: beta[j] + tcrit * se,
            }
        })
        .collect();

    let leverage: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            qr.apply_qt(&mut e);
            e[..p].iter().map(|x| x * x).sum()
        })
        .collect();

    let tss: f64 = if design.intercept {
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - m) * (v - m)).sum()
    } else {
        y.iter().map(|v| v * v).sum()
    };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };
    let dfm = if design.intercept { p - 1 } else { p };
    let dfn = if design.intercept { n - 1 } else { n };
    let adj_r_squared = if df > 0 {
        1.0 - (1.0 - r_squared) * dfn as f64 / df as f64
    } else {
        f64::NAN
    };
    let nf = n as f64;
    let log_likelihood = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + 1.0 - nf.ln() + rss.ln());
    let k = (p + 1) as f64;
    let aic = -2.0 * log_likelihood + 2.0 * k;
    let bic = -2.0 * log_likelihood + k * nf.ln();
    let (f_statistic, f_p_value) = if dfm > 0 && df > 0 {
        let f = ((tss - rss) / dfm as f64) / (rss / df as f64);
        let dist = statrs::distribution::FisherSnedecor::new(dfm as f64, df as f64)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        use statrs::distribution::ContinuousCDF;
        (f, if f.is_finite() { dist.sf(f) } else { 0.0 })
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(OlsFit {
        coefficients,
        covariance,
        n,
        df_resid: df,
        rss,
        r_squared,
        adj_r_squared,
        sigma: sigma2.sqrt(),
        log_likelihood,
        aic,
        bic,
        f_statistic,
        f_df: (dfm, df),
        f_p_value,
        fitted,
        residuals,
        leverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> (Design, Vec<f64>) {
        let mut d = Design::new(5, true);
        d.push("a", vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        d.push("b", vec![2.0, 1.0, 4.0, 3.0, 6.0]);
        (d, vec![1.1, 1.9, 3.2, 3.8, 5.3])
    }

    #[test]
    fn matches_normal_equations() {
        let (d, y) = toy();
        let fit = fit_ols(&d, &y).unwrap();
        let x = nalgebra::DMatrix::from_fn(5, 3, |i, j| d.get(i, j));
        let yv = nalgebra::DVector::from_vec(y.clone());
        let xtx = x.transpose() * &x;
        let b = xtx.clone().try_inverse().unwrap() * x.transpose() * yv;
        for j in 0..3 {
            assert_relative_eq!(fit.coefficients[j].estimate, b[j], max_relative = 1e-10);
        }
        let sigma2 = fit.rss / 2.0;
        let inv = xtx.try_inverse().unwrap();
        assert_relative_eq!(
            fit.covariance[1][2],
            sigma2 * inv[(1, 2)],
            max_relative = 1e-9
        );
    }

    #[test]
    fn information_criteria_gaussian() {
        let (d, y) = toy();
        let fit = fit_ols(&d, &y).unwrap();
        let n = 5.0f64;
        let s2 = fit.rss / n;
        let ll: f64 = fit
            .residuals
            .iter()
            .map(|e| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - e * e / (2.0 * s2))
            .sum();
        assert_relative_eq!(fit.log_likelihood, ll, max_relative = 1e-12);
        assert_relative_eq!(fit.aic, -2.0 * ll + 8.0, max_relative = 1e-12);
        assert_relative_eq!(fit.bic, -2.0 * ll + 4.0 * n.ln(), max_relative = 1e-12);
    }

    #[test]
    fn loo_residuals_match_refits() {
        let (d, y) = toy();
        let fit = fit_ols(&d, &y).unwrap();
        let loo = fit.loo_residuals();
        for i in 0..5 {
            let di = d.without_row(i);
            let yi: Vec<f64> = y
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, v)| *v)
                .collect();
            let fi = fit_ols(&di, &yi).unwrap();
            assert_relative_eq!(loo[i], y[i] - fi.predict(&d.row(i)), max_relative = 1e-9);
        }
    }

    #[test]
    fn collinear_columns_named() {
        let mut d = Design::new(4, true);
        d.push("a", vec![1.0, 2.0, 3.0, 4.0]);
        d.push("b", vec![2.0, 4.0, 6.0, 8.0]);
        match fit_ols(&d, &[1.0, 2.0, 3.0, 5.0]) {
            Err(Error::RankDeficient { columns }) => {
                assert_eq!(columns, vec!["b".to_string(), "a".to_string()])
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let mut d = Design::new(2, true);
        d.push("a", vec![1.0, 2.0]);
        d.push("c", vec![0.0, 3.0]);
        assert!(matches!(
            fit_ols(&d, &[1.0, 2.0]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn r_squared_and_f() {
        let (d, y) = toy();
        let fit = fit_ols(&d, &y).unwrap();
        let m = y.iter().sum::<f64>() / 5.0;
        let tss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        assert_relative_eq!(fit.r_squared, 1.0 - fit.rss / tss, max_relative = 1e-12);
        assert_relative_eq!(
            fit.f_statistic,
            ((tss - fit.rss) / 2.0) / (fit.rss / 2.0),
            max_relative = 1e-10
        );
        assert_eq!(fit.f_df, (2, 2));
    }
}
