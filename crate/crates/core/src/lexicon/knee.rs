//! Elbow detectors: maximum curvature and Kneedle.

use serde::{Deserialize, Serialize};

use super::spline::SmoothCurve;
use crate::error::{Error, Result};

/// Coordinates in which curvature is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurvatureFrame {
    /// Original units.
    Raw,
    /// x and y min-max normalized to the unit square over the grid; makes the
    /// location invariant to affine y and uniform x rescaling.
    UnitSquare,
}

/// Curvature κ = |f″| / (1 + f′²)^{3/2} on each grid point.
pub fn curvature_profile(
    curve: &impl SmoothCurve,
    grid: &[f64],
    frame: CurvatureFrame,
) -> Vec<f64> {
    let (sx, sy) = match frame {
        CurvatureFrame::Raw => (1.0, 1.0),
        CurvatureFrame::UnitSquare => {
            let values: Vec<f64> = grid.iter().map(|&x| curve.value(x)).collect();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (grid[grid.len() - 1] - grid[0], hi - lo)
        }
    };
    grid.iter()
        .map(|&x| {
            if sy <= 0.0 {
                return 0.0;
            }
            let y1 = curve.d1(x) * sx / sy;
            let y2 = curve.d2(x) * sx * sx / sy;
            y2.abs() / (1.0 + y1 * y1).powf(1.5)
        })
        .collect()
}

const NO_ELBOW: f64 = 1e-8;
const TIE: f64 = 1e-9;

/// Index of the curvature maximum among `kappa`, ties to the smallest index.
pub fn argmax_curvature(kappa: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, &k) in kappa.iter().enumerate() {
        if k > kappa[best] * (1.0 + TIE) {
            best = i;
        }
    }
    if !(kappa[best] > NO_ELBOW) {
        return Err(Error::NoElbow);
    }
    Ok(best)
}

/// Grid value with maximal curvature (ties broken toward smaller x).
pub fn max_curvature_point(
    curve: &impl SmoothCurve,
    grid: &[f64],
    frame: CurvatureFrame,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty curvature grid".into()));
    }
    let kappa = curvature_profile(curve, grid, frame);
    Ok(grid[argmax_curvature(&kappa)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KneeShape {
    #[default]
    ConvexDecreasing,
    ConvexIncreasing,
    ConcaveIncreasing,
    ConcaveDecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knee {
    pub index: usize,
    pub x: f64,
    /// Difference-curve value at the knee.
    pub score: f64,
}

/// Kneedle difference curve for normalized coordinates.
pub fn difference_curve(xs: &[f64], ys: &[f64], shape: KneeShape) -> Vec<f64> {
    let n = xs.len();
    let (x0, x1) = (xs[0], xs[n - 1]);
    let ylo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let yhi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sx = x1 - x0;
    let sy = yhi - ylo;
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let xn = (x - x0) / sx;
            let yn = if sy > 0.0 { (y - ylo) / sy } else { 0.0 };
            match shape {
                KneeShape::ConvexDecreasing => (1.0 - xn) - yn,
                KneeShape::ConcaveDecreasing => yn - (1.0 - xn),
                KneeShape::ConcaveIncreasing => yn - xn,
                KneeShape::ConvexIncreasing => xn - yn,
            }
        })
        .collect()
}

/// Kneedle: first local maximum of the difference curve that is followed by
/// a drop below `d_max − sensitivity · mean Δx̂` before the next maximum.
pub fn kneedle_point(xs: &[f64], ys: &[f64], sensitivity: f64, shape: KneeShape) -> Result<Knee> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return Err(Error::InvalidInput(
            "kneedle needs at least 3 paired points".into(),
        ));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("kneedle x values must increase".into()));
    }
    if !(sensitivity > 0.0) {
        return Err(Error::Config("kneedle sensitivity must be positive".into()));
    }
    let d = difference_curve(xs, ys, shape);
    let step = 1.0 / (n - 1) as f64;
    let maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1] && d[i] > 1e-12)
        .collect();
    for (m, &i) in maxima.iter().enumerate() {
        let threshold = d[i] - sensitivity * step;
        let end = maxima.get(m + 1).copied().unwrap_or(n);
        if d[i + 1..end].iter().any(|&v| v < threshold) {
            return Ok(Knee {
                index: i,
                x: xs[i],
                score: d[i],
            });
        }
    }
    Err(Error::NoKnee)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Analytic<F: Fn(f64) -> (f64, f64, f64)>(F);
    impl<F: Fn(f64) -> (f64, f64, f64)> SmoothCurve for Analytic<F> {
        fn value(&self, x: f64) -> f64 {
            (self.0)(x).0
        }
        fn d1(&self, x: f64) -> f64 {
            (self.0)(x).1
        }
        fn d2(&self, x: f64) -> f64 {
            (self.0)(x).2
        }
    }

    #[test]
    fn circle_curvature_constant() {
        let r = 50.0;
        // lower arc of a circle centred at (r, r), away from the vertical tangents
        let arc = Analytic(|x: f64| {
            let u = x - r;
            let s = (r * r - u * u).sqrt();
            (r - s, u / s, r * r / (s * s * s))
        });
        let grid: Vec<f64> = (10..=90).map(|i| i as f64).collect();
        let kappa = curvature_profile(&arc, &grid, CurvatureFrame::Raw);
        for k in &kappa {
            assert!((k - 1.0 / r).abs() < 1e-12);
        }
        assert_eq!(
            max_curvature_point(&arc, &grid, CurvatureFrame::Raw).unwrap(),
            10.0
        );
    }

    #[test]
    fn exponential_curvature_matches_fine_grid() {
        let tau = 1000.0;
        let e = Analytic(|x: f64| {
            let v = (-x / tau).exp();
            (v, -v / tau, v / (tau * tau))
        });
        let grid: Vec<f64> = (0..=10_000).map(|i| i as f64).collect();
        let k0 = max_curvature_point(&e, &grid, CurvatureFrame::UnitSquare).unwrap();
        // oracle: unit-square curvature of exp on a 1e-3-step grid, written out directly
        let y_lo = (-10.0f64).exp();
        let sy = 1.0 - y_lo;
        let mut best = (0.0, -1.0);
        for i in 0..=10_000_000u64 {
            let u = i as f64 * 1e-6;
            let v = (-u * 10.0).exp();
            let y1 = -10.0 * v / sy;
            let y2 = 100.0 * v / sy;
            let k = y2 / (1.0 + y1 * y1).powf(1.5);
            if k > best.1 {
                best = (u * 10.0 * tau, k);
            }
        }
        assert!((k0 - best.0).abs() < 0.01 * tau, "{k0} vs {}", best.0);
    }

    #[test]
    fn straight_line_has_no_elbow_or_knee() {
        let line = Analytic(|x: f64| (1.0 - x / 100.0, -0.01, 0.0));
        let grid: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        assert!(matches!(
            max_curvature_point(&line, &grid, CurvatureFrame::UnitSquare),
            Err(Error::NoElbow)
        ));
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
        assert!(matches!(
            kneedle_point(&xs, &ys, 1.0, KneeShape::ConvexDecreasing),
            Err(Error::NoKnee)
        ));
    }

    #[test]
    fn polyline_knee() {
        let xs: [f64; 4] = [0.0, 0.5, 0.55, 1.0];
        let ys = [1.0, 0.95, 0.1, 0.0];
        // brute-force oracle: largest vertical gap under the chord y = 1 − x
        let oracle = (0..4)
            .max_by(|&a, &b| ((1.0 - xs[a]) - ys[a]).total_cmp(&((1.0 - xs[b]) - ys[b])))
            .unwrap();
        let knee = kneedle_point(&xs, &ys, 1.0, KneeShape::ConvexDecreasing).unwrap();
        assert_eq!(knee.index, oracle);
        assert_eq!(knee.x, 0.55);
    }

    #[test]
    fn sigmoid_knee_matches_dense_oracle() {
        let f = |x: f64| 1.0 / (1.0 + (10.0 * (x - 0.5)).exp());
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let knee = kneedle_point(&xs, &ys, 1.0, KneeShape::ConvexDecreasing).unwrap();
        // dense oracle on the normalized continuous curve
        let (lo, hi) = (f(1.0), f(0.0));
        let mut best = (0.0, f64::MIN);
        for i in 0..=1_000_000 {
            let x = i as f64 / 1e6;
            let d = (1.0 - x) - (f(x) - lo) / (hi - lo);
            if d > best.1 {
                best = (x, d);
            }
        }
        assert!((knee.x - best.0).abs() <= 0.01, "{} vs {}", knee.x, best.0);
    }

    #[test]
    fn shapes_mirror() {
        let xs: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let dec: Vec<f64> = xs.iter().map(|x| (-8.0 * x).exp()).collect();
        let inc: Vec<f64> = xs.iter().map(|x| 1.0 - (-8.0 * x).exp()).collect();
        let a = kneedle_point(&xs, &dec, 1.0, KneeShape::ConvexDecreasing).unwrap();
        let b = kneedle_point(&xs, &inc, 1.0, KneeShape::ConcaveIncreasing).unwrap();
        assert_eq!(a.index, b.index);
    }

    proptest! {
        #[test]
        fn kneedle_rescaling_invariant(rate in 2.0f64..30.0, n in 10usize..200, xe in -8i32..8, ye in -8i32..8, shift in -1000i32..1000) {
            let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (-rate * x / n as f64).exp()).collect();
            let base = kneedle_point(&xs, &ys, 1.0, KneeShape::ConvexDecreasing);
            let cx = 2f64.powi(xe);
            let cy = 2f64.powi(ye);
            let xs2: Vec<f64> = xs.iter().map(|x| x * cx).collect();
            let ys2: Vec<f64> = ys.iter().map(|y| y * cy).collect();
            let scaled = kneedle_point(&xs2, &ys2, 1.0, KneeShape::ConvexDecreasing);
            match (base, scaled) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.index, b.index);
                    prop_assert_eq!(a.x * cx, b.x);
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
            let ys3: Vec<f64> = ys.iter().map(|y| y + shift as f64).collect();
            if let (Ok(a), Ok(c)) = (kneedle_point(&xs, &ys, 1.0, KneeShape::ConvexDecreasing), kneedle_point(&xs, &ys3, 1.0, KneeShape::ConvexDecreasing)) {
                prop_assert!((a.index as i64 - c.index as i64).abs() <= 1);
            }
        }

        #[test]
        fn curvature_rescaling_invariant(tau in 50.0f64..500.0, xe in -6i32..6, ye in -6i32..6, offset in -5.0f64..5.0) {
            let cx = 2f64.powi(xe);
            let cy = 2f64.powi(ye);
            let base = Analytic(move |x: f64| { let v = (-x / tau).exp(); (v, -v / tau, v / (tau * tau)) });
            let scaled = Analytic(move |x: f64| {
                let u = x / cx;
                let v = (-u / tau).exp();
                (cy * v + offset, -cy * v / (tau * cx), cy * v / (tau * tau * cx * cx))
            });
            let grid: Vec<f64> = (0..=3000).map(|i| i as f64).collect();
            let grid2: Vec<f64> = grid.iter().map(|x| x * cx).collect();
            let a = max_curvature_point(&base, &grid, CurvatureFrame::UnitSquare).unwrap();
            let b = max_curvature_point(&scaled, &grid2, CurvatureFrame::UnitSquare).unwrap();
            prop_assert_eq!(a * cx, b);
        }
    }
}
