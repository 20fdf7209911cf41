//! Empirical marginal variograms and the staged moment fit.
//!
//! Both estimators visit stations in canonical (id) order and combine partial
//! sums in a fixed order, so results do not depend on input ordering or on
//! the number of worker threads.

mod fit;
mod minimize;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{presence_sets, SpaceTimeDataset};

pub use fit::{
    fit_full, fit_temporal, fit_spatial, FitError, FitOptions, FitResult, FitStage, Gauge, NuggetMode, SpatialFit,
    TemporalFit, Weighting,
};
pub use minimize::{minimize, Bound, MinimizeError, MinimizeOptions, Minimum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("expected a {expected:?} variogram, got {found:?}")]
    WrongKind { expected: VariogramKind, found: VariogramKind },
    #[error("invalid bin specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Minimize(#[from] MinimizeError),
    #[error("variogram file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariogramKind {
    Temporal,
    Spatial,
}

/// How per-pair spatial semivariances are combined inside a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BinMean {
    /// Plain mean over station pairs.
    #[default]
    Unweighted,
    /// Mean weighted by each pair's number of joint observations.
    PairWeighted,
}

/// Lag classes for both estimators. Unset spatial fields are derived from
/// the data: width = maximum station distance / 15, tolerance = width / 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub max_lag_fraction: f64,
    pub bin_width: Option<f64>,
    pub tolerance: Option<f64>,
    pub min_pairs: usize,
    #[serde(default)]
    pub bin_mean: BinMean,
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec {
            max_lag_fraction: 0.5,
            bin_width: None,
            tolerance: None,
            min_pairs: 10,
            bin_mean: BinMean::Unweighted,
        }
    }
}

impl BinSpec {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: String| Err(EstimateError::InvalidSpec(m));
        if !(0.0..=1.0).contains(&self.max_lag_fraction) {
            return bad(format!("max_lag_fraction {} outside [0, 1]", self.max_lag_fraction));
        }
        if let Some(w) = self.bin_width {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("bin_width must be > 0, got {w}"));
            }
        }
        if let Some(e) = self.tolerance {
            if !(e.is_finite() && e > 0.0) {
                return bad(format!("tolerance must be > 0, got {e}"));
            }
        }
        if self.min_pairs == 0 {
            return bad("min_pairs must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    pub kind: VariogramKind,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl EmpiricalVariogram {
    pub fn len(&self) -> usize {
        self.lags.len()
    }
    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// `# kind=...` line, then `lag,value,count` rows.
    pub fn to_csv_string(&self) -> String {
        let kind = match self.kind {
            VariogramKind::Temporal => "temporal",
            VariogramKind::Spatial => "spatial",
        };
        let mut out = format!("# kind={kind}\nlag,value,count\n");
        for ((l, v), c) in self.lags.iter().zip(&self.values).zip(&self.counts) {
            let _ = writeln!(out, "{l:?},{v:?},{c}");
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, EstimateError> {
        let err = |line: usize, msg: &str| EstimateError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let kind = match lines.next() {
            Some((_, "# kind=temporal")) => VariogramKind::Temporal,
            Some((_, "# kind=spatial")) => VariogramKind::Spatial,
            _ => return Err(err(1, "expected `# kind=temporal` or `# kind=spatial`")),
        };
        match lines.next() {
            Some((_, "lag,value,count")) => {}
            _ => return Err(err(2, "expected header `lag,value,count`")),
        }
        let mut ev = EmpiricalVariogram {
            kind,
            lags: Vec::new(),
            values: Vec::new(),
            counts: Vec::new(),
        };
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(err(i + 1, "expected three fields"));
            }
            let lag = f[0].parse::<f64>().map_err(|_| err(i + 1, "invalid lag"))?;
            let value = f[1].parse::<f64>().map_err(|_| err(i + 1, "invalid value"))?;
            let count = f[2].parse::<usize>().map_err(|_| err(i + 1, "invalid count"))?;
            if ev.lags.last().is_some_and(|&prev| lag <= prev) {
                return Err(err(i + 1, "lags must be strictly increasing"));
            }
            if !(value.is_finite() && value >= 0.0) || count == 0 {
                return Err(err(i + 1, "values must be >= 0 and counts >= 1"));
            }
            ev.lags.push(lag);
            ev.values.push(value);
            ev.counts.push(count);
        }
        Ok(ev)
    }

    pub fn read(path: &Path) -> Result<Self, EstimateError> {
        let text = std::fs::read_to_string(path).map_err(|e| EstimateError::Parse {
            line: 0,
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::from_csv_str(&text)
    }
}

/// Temporal marginal variogram. For each lag `k` up to `⌊p·N_T⌋`, the
/// per-time-pair semivariance over jointly observed stations is averaged
/// over all time pairs that share at least one station. Lags are `k·δt`;
/// counts are the number of contributing time pairs.
pub fn empirical_temporal_variogram(ds: &SpaceTimeDataset, spec: &BinSpec) -> Result<EmpiricalVariogram, EstimateError> {
    spec.validate()?;
    let n_t = ds.n_times();
    let k_max = ((spec.max_lag_fraction * n_t as f64).floor() as usize).min(n_t.saturating_sub(1));
    if n_t < 2 || k_max < 1 {
        return Err(EstimateError::InsufficientData(format!(
            "{n_t} time(s) with max lag fraction {} gives no lag",
            spec.max_lag_fraction
        )));
    }
    let ps = presence_sets(ds);
    let per_lag: Vec<Option<(f64, f64, usize)>> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let mut total = 0.0;
            let mut pairs = 0usize;
            for m in 0..n_t - k {
                let joint = ps.intersection(m, m + k);
                if joint.is_empty() {
                    continue;
                }
                let mut sum = 0.0;
                for &i in &joint {
                    let d = ds.value(i, m + k).unwrap() - ds.value(i, m).unwrap();
                    sum += d * d;
                }
                total += sum / (2.0 * joint.len() as f64);
                pairs += 1;
            }
            (pairs > 0).then(|| (k as f64 * ds.delta_t(), total / pairs as f64, pairs))
        })
        .collect();

    let mut ev = EmpiricalVariogram {
        kind: VariogramKind::Temporal,
        lags: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
    };
    for (lag, value, count) in per_lag.into_iter().flatten() {
        ev.lags.push(lag);
        ev.values.push(value);
        ev.counts.push(count);
    }
    if ev.is_empty() {
        return Err(EstimateError::InsufficientData("no time pair shares a station".into()));
    }
    Ok(ev)
}

/// One station pair's contribution to the spatial estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSemivariance {
    pub distance: f64,
    pub semivariance: f64,
    pub joint_count: usize,
}

/// Per-pair spatial semivariances over pairs observed together at least
/// once, in canonical pair order.
pub fn pair_semivariances(ds: &SpaceTimeDataset) -> Vec<PairSemivariance> {
    let order = ds.canonical_order();
    let n = order.len();
    let rows: Vec<Vec<PairSemivariance>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let ia = order[a];
            let sa = &ds.stations()[ia];
            let xa = ds.series(ia);
            let mut row = Vec::new();
            for &ib in &order[a + 1..] {
                let sb = &ds.stations()[ib];
                let xb = ds.series(ib);
                let mut sum = 0.0;
                let mut joint = 0usize;
                for (va, vb) in xa.iter().zip(xb) {
                    if let (Some(va), Some(vb)) = (va, vb) {
                        let d = va - vb;
                        sum += d * d;
                        joint += 1;
                    }
                }
                if joint > 0 {
                    row.push(PairSemivariance {
                        distance: (sa.x - sb.x).hypot(sa.y - sb.y),
                        semivariance: sum / (2.0 * joint as f64),
                        joint_count: joint,
                    });
                }
            }
            row
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// Spatial marginal variogram with omnidirectional bins centred at
/// `(b + ½)·width` covering `[0, max distance]`. A pair joins every bin whose centre lies within the
/// tolerance of its distance; bins with fewer than `min_pairs` pairs are
/// dropped. Lags are bin centres; counts are pairs per bin.
pub fn empirical_spatial_variogram(ds: &SpaceTimeDataset, spec: &BinSpec) -> Result<EmpiricalVariogram, EstimateError> {
    spec.validate()?;
    if ds.n_stations() < 2 {
        return Err(EstimateError::InsufficientData("need at least two stations".into()));
    }
    let pairs = pair_semivariances(ds);
    let max_dist = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
    if pairs.is_empty() || max_dist <= 0.0 {
        return Err(EstimateError::InsufficientData("no jointly observed pair at nonzero distance".into()));
    }
    let width = spec.bin_width.unwrap_or(max_dist / 15.0);
    let tol = spec.tolerance.unwrap_or(width / 2.0);
    let n_bins = ((max_dist / width).ceil() as usize).max(1);

    let mut num = vec![0.0; n_bins];
    let mut den = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for p in &pairs {
        let hi = ((p.distance + tol) / width - 0.5).floor();
        if hi < -1.0 {
            continue;
        }
        let lo = (((p.distance - tol) / width - 0.5).ceil().max(0.0) as usize).saturating_sub(1);
        let hi = ((hi.max(0.0) as usize) + 1).min(n_bins - 1);
        for b in lo..=hi {
            let centre = (b as f64 + 0.5) * width;
            if (p.distance - centre).abs() > tol {
                continue;
            }
            let w = match spec.bin_mean {
                BinMean::Unweighted => 1.0,
                BinMean::PairWeighted => p.joint_count as f64,
            };
            num[b] += w * p.semivariance;
            den[b] += w;
            counts[b] += 1;
        }
    }

    let mut ev = EmpiricalVariogram {
        kind: VariogramKind::Spatial,
        lags: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
    };
    for b in 0..n_bins {
        if counts[b] >= spec.min_pairs {
            ev.lags.push((b as f64 + 0.5) * width);
            ev.values.push(num[b] / den[b]);
            ev.counts.push(counts[b]);
        }
    }
    if ev.is_empty() {
        return Err(EstimateError::InsufficientData(format!(
            "every distance bin has fewer than {} pairs",
            spec.min_pairs
        )));
    }
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Station;

    fn st(id: &str, x: f64, y: f64) -> Station {
        Station { id: id.into(), x, y }
    }

    fn dataset(stations: Vec<Station>, n_t: usize, values: Vec<Option<f64>>) -> SpaceTimeDataset {
        let labels = (0..n_t).map(|j| j.to_string()).collect();
        SpaceTimeDataset::new(stations, labels, 1.0, values).unwrap()
    }

    fn spec_all() -> BinSpec {
        BinSpec {
            max_lag_fraction: 1.0,
            min_pairs: 1,
            ..BinSpec::default()
        }
    }

    #[test]
    fn temporal_single_station() {
        let ds = dataset(vec![st("a", 0.0, 0.0)], 3, vec![Some(0.0), Some(2.0), Some(0.0)]);
        let ev = empirical_temporal_variogram(&ds, &spec_all()).unwrap();
        assert_eq!(ev.lags, vec![1.0, 2.0]);
        assert_eq!(ev.values[0], 2.0);
        assert_eq!(ev.counts, vec![2, 1]);
        assert_eq!(ev.values[1], 0.0);
    }

    #[test]
    fn temporal_gap_uses_present_station_only() {
        // b missing at t = 2
        let ds = dataset(
            vec![st("a", 0.0, 0.0), st("b", 1.0, 0.0)],
            3,
            vec![Some(1.0), Some(2.0), Some(4.0), Some(0.0), Some(3.0), None],
        );
        let ev = empirical_temporal_variogram(&ds, &spec_all()).unwrap();
        let pair01 = ((2.0 - 1.0f64).powi(2) + (3.0 - 0.0f64).powi(2)) / 4.0;
        let pair12 = (4.0 - 2.0f64).powi(2) / 2.0;
        assert_eq!(ev.values[0], (pair01 + pair12) / 2.0);
    }

    #[test]
    fn temporal_constant_field_and_errors() {
        let ds = dataset(vec![st("a", 0.0, 0.0), st("b", 1.0, 1.0)], 4, vec![Some(3.0); 8]);
        let ev = empirical_temporal_variogram(&ds, &BinSpec::default()).unwrap();
        assert!(ev.values.iter().all(|&v| v == 0.0));
        let one = dataset(vec![st("a", 0.0, 0.0)], 1, vec![Some(1.0)]);
        assert!(matches!(
            empirical_temporal_variogram(&one, &BinSpec::default()),
            Err(EstimateError::InsufficientData(_))
        ));
        // two stations that are never observed together in adjacent times
        let disjoint = dataset(
            vec![st("a", 0.0, 0.0), st("b", 1.0, 1.0)],
            2,
            vec![Some(1.0), None, None, Some(2.0)],
        );
        assert!(matches!(
            empirical_temporal_variogram(&disjoint, &spec_all()),
            Err(EstimateError::InsufficientData(_))
        ));
    }

    #[test]
    fn spatial_constant_offset() {
        let c = 1.5;
        let ds = dataset(
            vec![st("a", 0.0, 0.0), st("b", 1.0, 0.0)],
            4,
            vec![Some(0.0), Some(1.0), Some(-2.0), Some(0.5), Some(c), Some(1.0 + c), Some(-2.0 + c), Some(0.5 + c)],
        );
        let spec = BinSpec {
            bin_width: Some(1.0),
            ..spec_all()
        };
        let ev = empirical_spatial_variogram(&ds, &spec).unwrap();
        assert_eq!(ev.values, vec![c * c / 2.0]);
        assert_eq!(ev.counts, vec![1]);
    }

    #[test]
    fn spatial_identical_series_and_no_joint_times() {
        let s = vec![Some(0.3), Some(-1.0), Some(2.0)];
        let mut v = s.clone();
        v.extend(&s);
        let ds = dataset(vec![st("a", 0.0, 0.0), st("b", 0.0, 2.0)], 3, v);
        let ev = empirical_spatial_variogram(&ds, &spec_all()).unwrap();
        assert!(ev.values.iter().all(|&x| x == 0.0));

        let ds = dataset(
            vec![st("a", 0.0, 0.0), st("b", 0.0, 2.0), st("c", 1.0, 0.0)],
            2,
            vec![Some(1.0), None, None, Some(2.0), Some(0.0), Some(0.0)],
        );
        let pairs = pair_semivariances(&ds);
        // (a, b) never observed together
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn spatial_bins_suppressed() {
        let ds = dataset(vec![st("a", 0.0, 0.0), st("b", 1.0, 0.0)], 2, vec![Some(0.0), Some(1.0), Some(2.0), Some(2.0)]);
        assert!(matches!(
            empirical_spatial_variogram(&ds, &BinSpec::default()),
            Err(EstimateError::InsufficientData(_))
        ));
    }

    #[test]
    fn bin_membership_windows() {
        // distances 1, 2, 3 with width 1 and tolerance 0.5: each pair joins
        // the bins whose centres are within 0.5
        let ds = dataset(
            vec![st("a", 0.0, 0.0), st("b", 1.0, 0.0), st("c", 3.0, 0.0)],
            1,
            vec![Some(0.0), Some(1.0), Some(3.0)],
        );
        let spec = BinSpec {
            bin_width: Some(1.0),
            tolerance: Some(0.5),
            ..spec_all()
        };
        let ev = empirical_spatial_variogram(&ds, &spec).unwrap();
        assert_eq!(ev.lags, vec![0.5, 1.5, 2.5]);
        assert_eq!(ev.counts, vec![1, 2, 2]);
        assert_eq!(ev.values[1], (0.5 + 2.0) / 2.0);
    }

    #[test]
    fn pair_weighted_mean() {
        let ds = dataset(
            vec![st("a", 0.0, 0.0), st("b", 1.0, 0.0), st("c", 0.0, 1.0)],
            2,
            vec![Some(0.0), Some(0.0), Some(2.0), None, Some(1.0), Some(1.0)],
        );
        let spec = BinSpec {
            bin_width: Some(2.0),
            tolerance: Some(1.0),
            bin_mean: BinMean::PairWeighted,
            ..spec_all()
        };
        let ev = empirical_spatial_variogram(&ds, &spec).unwrap();
        // pairs: ab (1 joint, 2.0), ac (2 joint, 0.5), bc (1 joint, 0.5)
        assert_eq!(ev.values[0], (2.0 + 2.0 * 0.5 + 0.5) / 4.0);
    }

    #[test]
    fn csv_round_trip() {
        let ev = EmpiricalVariogram {
            kind: VariogramKind::Spatial,
            lags: vec![0.5, 1.5],
            values: vec![0.1, 0.30000000000000004],
            counts: vec![12, 40],
        };
        let text = ev.to_csv_string();
        assert!(text.starts_with("# kind=spatial\nlag,value,count\n"));
        assert_eq!(EmpiricalVariogram::from_csv_str(&text).unwrap(), ev);
        assert!(EmpiricalVariogram::from_csv_str("lag,value,count\n").is_err());
        assert!(EmpiricalVariogram::from_csv_str("# kind=temporal\nlag,value,count\n2,1,1\n1,1,1\n").is_err());
    }
}
