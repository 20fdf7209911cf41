//! Quadratic spatial trend surface, pooled over all observation times.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::dataio::SpaceTimeDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrendError {
    #[error("design matrix is rank deficient (station locations are degenerate)")]
    RankDeficient,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// `m(s) = c0 + c1·s₁ + c2·s₂ + c11·s₁² + c22·s₂² + c12·s₁s₂` with the
/// correlation `R` between fitted and observed values and the p-value of
/// the overall F-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c11: f64,
    pub c22: f64,
    pub c12: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub p_value: f64,
}

impl TrendModel {
    pub fn from_coefficients(c: [f64; 6]) -> Self {
        TrendModel {
            c0: c[0],
            c1: c[1],
            c2: c[2],
            c11: c[3],
            c22: c[4],
            c12: c[5],
            r: 0.0,
            p_value: 1.0,
        }
    }

    pub fn coefficients(&self) -> [f64; 6] {
        [self.c0, self.c1, self.c2, self.c11, self.c22, self.c12]
    }
}

/// A fitted trend plus the quantities needed for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendFit {
    pub model: TrendModel,
    /// Standard errors of `c0, c1, c2, c11, c22, c12`.
    pub std_errors: [f64; 6],
    pub n_observations: usize,
    pub residual_variance: f64,
}

pub fn eval_trend(m: &TrendModel, s: (f64, f64)) -> f64 {
    let (x, y) = s;
    m.c0 + m.c1 * x + m.c2 * y + m.c11 * x * x + m.c22 * y * y + m.c12 * x * y
}

pub fn fit_trend(ds: &SpaceTimeDataset) -> Result<TrendModel, TrendError> {
    fit_trend_detailed(ds).map(|f| f.model)
}

/// Ordinary least squares on `[1, s₁, s₂, s₁², s₂², s₁s₂]`, one row per
/// observation. Coordinates are centred and scaled before a QR solve and
/// the coefficients mapped back to raw coordinates.
pub fn fit_trend_detailed(ds: &SpaceTimeDataset) -> Result<TrendFit, TrendError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vs = Vec::new();
    for (i, s) in ds.stations().iter().enumerate() {
        for v in ds.series(i).iter().flatten() {
            xs.push(s.x);
            ys.push(s.y);
            vs.push(*v);
        }
    }
    let n = vs.len();
    let mean = |a: &[f64]| a.iter().sum::<f64>() / a.len() as f64;
    let spread = |a: &[f64], m: f64| {
        let s = (a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / a.len() as f64).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let (mx, my) = (mean(&xs), mean(&ys));
    let (sx, sy) = (spread(&xs, mx), spread(&ys, my));

    let design = DMatrix::from_fn(n, 6, |r, c| {
        let u = (xs[r] - mx) / sx;
        let v = (ys[r] - my) / sy;
        match c {
            0 => 1.0,
            1 => u,
            2 => v,
            3 => u * u,
            4 => v * v,
            _ => u * v,
        }
    });
    if n < 6 {
        return Err(TrendError::RankDeficient);
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = (0..6).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..6).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max) {
        return Err(TrendError::RankDeficient);
    }
    let mut locations: Vec<(u64, u64)> = ds
        .stations()
        .iter()
        .enumerate()
        .filter(|(i, _)| ds.series(*i).iter().any(Option::is_some))
        .map(|(_, s)| (s.x.to_bits(), s.y.to_bits()))
        .collect();
    locations.sort_unstable();
    locations.dedup();
    if locations.len() < 7 {
        return Err(TrendError::InsufficientData(format!(
            "{} distinct station locations, need at least 7",
            locations.len()
        )));
    }

    let obs = DVector::from_vec(vs.clone());
    let qtb = qr.q().transpose() * &obs;
    let b = r.solve_upper_triangular(&qtb).ok_or(TrendError::RankDeficient)?;

    let fitted = &design * &b;
    let ybar = mean(&vs);
    let fbar = fitted.iter().sum::<f64>() / n as f64;
    let (mut sse, mut ssr, mut sff, mut syy, mut sfy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        let e = vs[k] - fitted[k];
        sse += e * e;
        ssr += (fitted[k] - ybar) * (fitted[k] - ybar);
        sff += (fitted[k] - fbar) * (fitted[k] - fbar);
        syy += (vs[k] - ybar) * (vs[k] - ybar);
        sfy += (fitted[k] - fbar) * (vs[k] - ybar);
    }
    let corr = if sff > 0.0 && syy > 0.0 {
        (sfy / (sff * syy).sqrt()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dof = n - 6;
    let p_value = if ssr <= 0.0 || dof == 0 {
        1.0
    } else if sse <= 0.0 {
        0.0
    } else {
        let f = (ssr / 5.0) / (sse / dof as f64);
        FisherSnedecor::new(5.0, dof as f64).map_or(f64::NAN, |d| d.sf(f)).clamp(0.0, 1.0)
    };

    // c = T·b maps scaled-coordinate coefficients to raw ones
    let t = back_transform(mx, my, sx, sy);
    let c = &t * &b;
    let residual_variance = if dof > 0 { sse / dof as f64 } else { f64::NAN };
    let r_inv = r.try_inverse().ok_or(TrendError::RankDeficient)?;
    let cov_c = &t * (&r_inv * r_inv.transpose()) * t.transpose() * residual_variance;

    let mut model = TrendModel::from_coefficients([c[0], c[1], c[2], c[3], c[4], c[5]]);
    model.r = corr;
    model.p_value = p_value;
    let mut std_errors = [0.0; 6];
    for (i, se) in std_errors.iter_mut().enumerate() {
        *se = cov_c[(i, i)].max(0.0).sqrt();
    }
    Ok(TrendFit {
        model,
        std_errors,
        n_observations: n,
        residual_variance,
    })
}

/// Linear map from coefficients in `u = (x − mx)/sx`, `v = (y − my)/sy`
/// to coefficients in `x`, `y`, ordered `[1, x, y, x², y², xy]`.
fn back_transform(mx: f64, my: f64, sx: f64, sy: f64) -> DMatrix<f64> {
    let (ax, ay) = (1.0 / sx, 1.0 / sy);
    let (bx, by) = (-mx / sx, -my / sy);
    // u = ax·x + bx, v = ay·y + by
    DMatrix::from_row_slice(
        6,
        6,
        &[
            1.0, bx, by, bx * bx, by * by, bx * by, //
            0.0, ax, 0.0, 2.0 * ax * bx, 0.0, ax * by, //
            0.0, 0.0, ay, 0.0, 2.0 * ay * by, ay * bx, //
            0.0, 0.0, 0.0, ax * ax, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, ay * ay, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, ax * ay,
        ],
    )
}

/// Residuals `x − m(s)`; gaps stay gaps.
pub fn detrend(ds: &SpaceTimeDataset, m: &TrendModel) -> SpaceTimeDataset {
    ds.map_values(|s, v| v - eval_trend(m, (s.x, s.y)))
}

/// Adds the trend back; inverts [`detrend`] up to one rounding per value.
pub fn retrend(ds: &SpaceTimeDataset, m: &TrendModel) -> SpaceTimeDataset {
    ds.map_values(|s, v| v + eval_trend(m, (s.x, s.y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Station;

    const OZONE_TREND: [f64; 6] = [-4.44, -9.25e-4, -0.035, -1.56e-5, -4.3e-5, -2.49e-6];

    fn grid_dataset(points: &[(f64, f64)], n_t: usize, f: impl Fn(usize, f64, f64) -> Option<f64>) -> SpaceTimeDataset {
        let stations: Vec<Station> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Station {
                id: format!("s{i:03}"),
                x,
                y,
            })
            .collect();
        let mut values = Vec::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            for _ in 0..n_t {
                values.push(f(i, x, y));
            }
        }
        SpaceTimeDataset::new(stations, (0..n_t).map(|j| j.to_string()).collect(), 1.0, values).unwrap()
    }

    fn scattered(n: usize) -> Vec<(f64, f64)> {
        // deterministic low-discrepancy points over a continental-scale box
        (0..n)
            .map(|i| {
                let a = (i as f64 * 0.618_033_988_749_895).fract();
                let b = (i as f64 * 0.754_877_666_246_693).fract();
                (-1200.0 + 2400.0 * a, 2500.0 + 1200.0 * b)
            })
            .collect()
    }

    #[test]
    fn eval_examples() {
        let m = TrendModel::from_coefficients(OZONE_TREND);
        assert_eq!(eval_trend(&m, (0.0, 0.0)), -4.44);
        let only = TrendModel::from_coefficients([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(eval_trend(&only, (2.0, 3.0)), 6.0);
    }

    #[test]
    fn noiseless_table_recovery() {
        let truth = TrendModel::from_coefficients(OZONE_TREND);
        let ds = grid_dataset(&scattered(60), 3, |_, x, y| Some(eval_trend(&truth, (x, y))));
        let m = fit_trend(&ds).unwrap();
        for (a, b) in m.coefficients().iter().zip(OZONE_TREND) {
            assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
        }
        assert!((m.r - 1.0).abs() < 1e-12);
        assert_eq!(m.p_value, 0.0);
    }

    #[test]
    fn constant_data() {
        let ds = grid_dataset(&scattered(10), 2, |_, _, _| Some(2.5));
        let m = fit_trend(&ds).unwrap();
        assert!((m.c0 - 2.5).abs() < 1e-12);
        for c in &m.coefficients()[1..] {
            assert!(c.abs() < 1e-12, "{c}");
        }
        assert_eq!(m.r, 0.0);
    }

    #[test]
    fn degenerate_geometry() {
        let line: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let ds = grid_dataset(&line, 2, |i, _, _| Some(i as f64));
        assert_eq!(fit_trend(&ds), Err(TrendError::RankDeficient));
        let six = scattered(6);
        let ds = grid_dataset(&six, 3, |i, x, _| Some(i as f64 + x));
        assert!(matches!(fit_trend(&ds), Err(TrendError::InsufficientData(_))));
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let ds = grid_dataset(&scattered(40), 4, |i, x, y| Some(0.01 * x - 0.02 * y + ((i * 37 % 11) as f64 - 5.0)));
        let m = fit_trend(&ds).unwrap();
        let res = detrend(&ds, &m);
        let cols: [fn(f64, f64) -> f64; 6] = [|_, _| 1.0, |x, _| x, |_, y| y, |x, _| x * x, |_, y| y * y, |x, y| x * y];
        for col in cols {
            let (mut dot, mut nc, mut nr) = (0.0, 0.0, 0.0);
            for (i, s) in res.stations().iter().enumerate() {
                for r in res.series(i).iter().flatten() {
                    let c = col(s.x, s.y);
                    dot += c * r;
                    nc += c * c;
                    nr += r * r;
                }
            }
            assert!(dot.abs() <= 1e-8 * (nc * nr).sqrt(), "{dot}");
        }
    }

    #[test]
    fn translation_equivariance() {
        let pts = scattered(30);
        let ds = grid_dataset(&pts, 2, |i, x, y| Some(1e-4 * x * y + ((i * 13 % 7) as f64)));
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x + 350.0, y - 1000.0)).collect();
        let ds2 = grid_dataset(&shifted, 2, |i, x, y| Some(1e-4 * (x - 350.0) * (y + 1000.0) + ((i * 13 % 7) as f64)));
        let a = fit_trend(&ds).unwrap();
        let b = fit_trend(&ds2).unwrap();
        for (&p, &q) in pts.iter().zip(&shifted) {
            let (fa, fb) = (eval_trend(&a, p), eval_trend(&b, q));
            assert!((fa - fb).abs() <= 1e-9 * fa.abs().max(1.0), "{fa} vs {fb}");
        }
        // exact re-expansion of the quadratic term
        assert!((b.c12 - a.c12).abs() <= 1e-9 * a.c12.abs());
        assert!((b.c1 - (a.c1 - a.c12 * -1000.0 - 2.0 * a.c11 * 350.0)).abs() <= 1e-8 * a.c1.abs().max(1e-3));
    }

    #[test]
    fn detrend_retrend() {
        let m = TrendModel::from_coefficients([1.0, 0.5, -0.25, 0.125, 0.0, 1.0]);
        let pts: Vec<(f64, f64)> = scattered(8).iter().map(|&(x, y)| (x.round(), y.round())).collect();
        let stations = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Station { id: format!("s{i}"), x, y })
            .collect();
        let mut values = Vec::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            for j in 0..3 {
                values.push((i != 2 || j != 0).then(|| eval_trend(&m, (x, y)) + i as f64));
            }
        }
        let ds = SpaceTimeDataset::new(stations, vec!["0".into(), "1".into(), "2".into()], 1.0, values).unwrap();
        let res = detrend(&ds, &m);
        assert_eq!(retrend(&res, &m), ds);
        assert_eq!(res.value(2, 0), None);
        assert_eq!(res.value(3, 1), Some(3.0));
        let zero = detrend(&grid_dataset(&[(1.0, 2.0)], 2, |_, x, y| Some(eval_trend(&m, (x, y)))), &m);
        assert!(zero.series(0).iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn json_keys() {
        let v = serde_json::to_value(TrendModel::from_coefficients(OZONE_TREND)).unwrap();
        for k in ["c0", "c1", "c2", "c11", "c22", "c12", "R", "p_value"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
