//! Staged least-squares fit of the marginal variograms.
//!
//! The temporal stage fixes `τc` and the product `λη₀` (twice the sill). The
//! spatial stage then depends on `λ` and `ξ` only through `κ = λ/ξ`, because
//! the sill is already fixed, so one of the two must be pinned by a gauge.
//! Linear amplitudes (the sill in stage one, the nugget in stage two) are
//! solved in closed form for every trial value of the nonlinear parameter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::minimize::{minimize, Bound, MinimizeOptions};
use super::{EmpiricalVariogram, EstimateError, VariogramKind};
use crate::covmodel::{variogram_spatial, StslrParams};
use crate::specfun::erf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    #[default]
    PairCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NuggetMode {
    #[default]
    Free,
    Zero,
}

/// Which of `λ`, `ξ` is held fixed in the spatial stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    Lambda(f64),
    Xi(f64),
}

impl Default for Gauge {
    fn default() -> Self {
        Gauge::Lambda(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub nugget: NuggetMode,
    pub gauge: Gauge,
    pub minimize: MinimizeOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalFit {
    pub tau_c: f64,
    pub lambda_eta0: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialFit {
    pub lambda: f64,
    pub xi: f64,
    pub nugget: f64,
    /// `λ/ξ`, the combination the spatial variogram actually determines.
    pub kappa: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gauge: Gauge,
    pub temporal: TemporalFit,
    pub spatial: SpatialFit,
}

/// Fitted parameters; serializes as the parameter object plus `diagnostics`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: StslrParams,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStage {
    Temporal,
    Spatial,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage:?} stage: {source}")]
pub struct FitError {
    pub stage: FitStage,
    pub source: EstimateError,
}

fn weights(ev: &EmpiricalVariogram, w: Weighting) -> Vec<f64> {
    match w {
        Weighting::Uniform => vec![1.0; ev.len()],
        Weighting::PairCount => ev.counts.iter().map(|&c| c as f64).collect(),
    }
}

fn check(ev: &EmpiricalVariogram, kind: VariogramKind, min_lags: usize) -> Result<(), EstimateError> {
    if ev.kind != kind {
        return Err(EstimateError::WrongKind {
            expected: kind,
            found: ev.kind,
        });
    }
    if ev.len() < min_lags {
        return Err(EstimateError::InsufficientData(format!(
            "{} lag(s), need at least {min_lags}",
            ev.len()
        )));
    }
    let first = ev.values[0];
    if ev.values.iter().all(|&v| v == first) {
        return Err(EstimateError::Degenerate(format!("all {} variogram values equal {first}", ev.len())));
    }
    Ok(())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Best sill for a given `τc` and the matching weighted squared error.
fn temporal_profile(ev: &EmpiricalVariogram, w: &[f64], tau_c: f64) -> (f64, f64) {
    let g: Vec<f64> = ev.lags.iter().map(|&t| erf((t / tau_c).sqrt())).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..g.len() {
        num += w[k] * ev.values[k] * g[k];
        den += w[k] * g[k] * g[k];
    }
    let sill = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    let mut sse = 0.0;
    for k in 0..g.len() {
        let e = ev.values[k] - sill * g[k];
        sse += w[k] * e * e;
    }
    (sill, sse)
}

/// Fit `γ_T(τ) = (λη₀/2)·erf(√(τ/τc))` to a temporal variogram.
pub fn fit_temporal(ev: &EmpiricalVariogram, weighting: Weighting, opts: &MinimizeOptions) -> Result<TemporalFit, EstimateError> {
    check(ev, VariogramKind::Temporal, 3)?;
    let w = weights(ev, weighting);
    let start = median(&ev.lags);
    let m = minimize(|v| temporal_profile(ev, &w, v[0]).1, &[start], &[Bound::Positive], opts)?;
    let tau_c = m.argmin[0];
    let (sill, sse) = temporal_profile(ev, &w, tau_c);
    if !(sill > 0.0) {
        return Err(EstimateError::Degenerate("fitted sill is not positive".into()));
    }
    Ok(TemporalFit {
        tau_c,
        lambda_eta0: 2.0 * sill,
        residual: sse,
        iterations: m.iterations,
    })
}

fn gauge_params(kappa: f64, lambda_eta0: f64, gauge: Gauge, nugget: f64) -> Option<StslrParams> {
    let (lambda, xi) = match gauge {
        Gauge::Lambda(l) => (l, l / kappa),
        Gauge::Xi(x) => (kappa * x, x),
    };
    StslrParams::new(lambda_eta0 / lambda, lambda, xi, 1.0, nugget).ok()
}

/// Best nugget for a given `κ` and the matching weighted squared error.
fn spatial_profile(ev: &EmpiricalVariogram, w: &[f64], lambda_eta0: f64, kappa: f64, gauge: Gauge, mode: NuggetMode) -> (f64, f64) {
    let Some(p) = gauge_params(kappa, lambda_eta0, gauge, 0.0) else {
        return (0.0, f64::INFINITY);
    };
    let e: Vec<f64> = ev
        .lags
        .iter()
        .zip(&ev.values)
        .map(|(&r, &v)| v - variogram_spatial(r / p.xi(), &p, false))
        .collect();
    let nugget = match mode {
        NuggetMode::Zero => 0.0,
        NuggetMode::Free => {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..e.len() {
                num += w[k] * e[k];
                den += w[k];
            }
            (num / den).max(0.0)
        }
    };
    let mut sse = 0.0;
    for k in 0..e.len() {
        let d = e[k] - nugget;
        sse += w[k] * d * d;
    }
    (nugget, sse)
}

/// Fit the spatial marginal variogram with the sill fixed at
/// `lambda_eta0 / 2`, returning `λ`, `ξ` under `gauge` and the nugget.
pub fn fit_spatial(
    ev: &EmpiricalVariogram,
    lambda_eta0: f64,
    weighting: Weighting,
    nugget: NuggetMode,
    gauge: Gauge,
    opts: &MinimizeOptions,
) -> Result<SpatialFit, EstimateError> {
    check(ev, VariogramKind::Spatial, 4)?;
    if !(lambda_eta0.is_finite() && lambda_eta0 > 0.0) {
        return Err(EstimateError::Degenerate(format!("lambda_eta0 must be > 0, got {lambda_eta0}")));
    }
    match gauge {
        Gauge::Lambda(v) | Gauge::Xi(v) if !(v.is_finite() && v > 0.0) => {
            return Err(EstimateError::InvalidSpec(format!("gauge value must be > 0, got {v}")));
        }
        _ => {}
    }
    let w = weights(ev, weighting);
    let start = 1.0 / median(&ev.lags);
    let m = minimize(
        |v| spatial_profile(ev, &w, lambda_eta0, v[0], gauge, nugget).1,
        &[start],
        &[Bound::Positive],
        opts,
    )?;
    let kappa = m.argmin[0];
    let (c0, sse) = spatial_profile(ev, &w, lambda_eta0, kappa, gauge, nugget);
    let p = gauge_params(kappa, lambda_eta0, gauge, c0)
        .ok_or_else(|| EstimateError::Degenerate(format!("no valid parameters at kappa = {kappa}")))?;
    Ok(SpatialFit {
        lambda: p.lambda(),
        xi: p.xi(),
        nugget: c0,
        kappa,
        residual: sse,
        iterations: m.iterations,
    })
}

/// Temporal stage, then spatial stage, then `η₀ = (λη₀)/λ`.
pub fn fit_full(temporal: &EmpiricalVariogram, spatial: &EmpiricalVariogram, opts: &FitOptions) -> Result<FitResult, FitError> {
    let t = fit_temporal(temporal, opts.weighting, &opts.minimize).map_err(|source| FitError {
        stage: FitStage::Temporal,
        source,
    })?;
    let s = fit_spatial(spatial, t.lambda_eta0, opts.weighting, opts.nugget, opts.gauge, &opts.minimize).map_err(
        |source| FitError {
            stage: FitStage::Spatial,
            source,
        },
    )?;
    let params = StslrParams::new(t.lambda_eta0 / s.lambda, s.lambda, s.xi, t.tau_c, s.nugget).map_err(|e| FitError {
        stage: FitStage::Spatial,
        source: EstimateError::Degenerate(e.to_string()),
    })?;
    Ok(FitResult {
        params,
        diagnostics: FitDiagnostics {
            objective_value: t.residual + s.residual,
            converged: true,
            iterations: t.iterations + s.iterations,
            gauge: opts.gauge,
            temporal: t,
            spatial: s,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::variogram_temporal;

    fn temporal_ev(p: &StslrParams, n: usize) -> EmpiricalVariogram {
        let lags: Vec<f64> = (1..=n).map(|k| k as f64).collect();
        EmpiricalVariogram {
            kind: VariogramKind::Temporal,
            values: lags.iter().map(|&t| variogram_temporal(t / p.tau_c(), p)).collect(),
            counts: (1..=n).map(|k| 60 - k).collect(),
            lags,
        }
    }

    fn spatial_ev(p: &StslrParams, lags: Vec<f64>) -> EmpiricalVariogram {
        EmpiricalVariogram {
            kind: VariogramKind::Spatial,
            values: lags.iter().map(|&r| variogram_spatial(r / p.xi(), p, true)).collect(),
            counts: lags.iter().map(|_| 25).collect(),
            lags,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn temporal_inverse_crime() {
        let p = StslrParams::new(0.8479 / 1.07, 1.07, 1.0, 4.70, 0.0).unwrap();
        let t = fit_temporal(&temporal_ev(&p, 30), Weighting::PairCount, &MinimizeOptions::default()).unwrap();
        assert!(rel(t.tau_c, 4.70) < 1e-6, "{t:?}");
        assert!(rel(t.lambda_eta0, 0.8479) < 1e-6, "{t:?}");
    }

    #[test]
    fn temporal_amplitude_scaling() {
        let p = StslrParams::new(0.9, 1.3, 1.0, 2.5, 0.0).unwrap();
        let mut ev = temporal_ev(&p, 20);
        for (k, v) in ev.values.iter_mut().enumerate() {
            *v *= 1.0 + 0.05 * ((k * 7 % 5) as f64 - 2.0);
        }
        let a = fit_temporal(&ev, Weighting::Uniform, &MinimizeOptions::default()).unwrap();
        let mut ev4 = ev.clone();
        ev4.values.iter_mut().for_each(|v| *v *= 4.0);
        let b = fit_temporal(&ev4, Weighting::Uniform, &MinimizeOptions::default()).unwrap();
        assert!(rel(b.tau_c, a.tau_c) < 1e-6);
        assert!(rel(b.lambda_eta0, 4.0 * a.lambda_eta0) < 1e-6);
    }

    #[test]
    fn temporal_degenerate() {
        let mut ev = temporal_ev(&StslrParams::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap(), 5);
        ev.values.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(
            fit_temporal(&ev, Weighting::PairCount, &MinimizeOptions::default()),
            Err(EstimateError::Degenerate(_))
        ));
        ev.values.truncate(2);
        ev.lags.truncate(2);
        ev.counts.truncate(2);
        assert!(matches!(
            fit_temporal(&ev, Weighting::PairCount, &MinimizeOptions::default()),
            Err(EstimateError::InsufficientData(_))
        ));
    }

    #[test]
    fn spatial_recovers_kappa_and_nugget() {
        let p = StslrParams::reference();
        let lags: Vec<f64> = (0..15).map(|b| (b as f64 + 0.5) * 20.0).collect();
        let ev = spatial_ev(&p, lags);
        let s = fit_spatial(&ev, p.eta0() * p.lambda(), Weighting::PairCount, NuggetMode::Free, Gauge::Lambda(1.07), &MinimizeOptions::default())
            .unwrap();
        assert!(rel(s.lambda, 1.07) < 1e-12);
        assert!(rel(s.xi, 45.49) < 1e-5, "{s:?}");
        assert!(rel(s.nugget, 0.4125) < 1e-5, "{s:?}");
        assert!(rel(s.kappa, 1.07 / 45.49) < 1e-5);
        // pinning xi instead gives the same kappa
        let x = fit_spatial(&ev, p.eta0() * p.lambda(), Weighting::PairCount, NuggetMode::Free, Gauge::Xi(45.49), &MinimizeOptions::default())
            .unwrap();
        assert!(rel(x.lambda, 1.07) < 1e-5);
    }

    #[test]
    fn spatial_zero_nugget_and_distance_scaling() {
        let p = StslrParams::new(0.8, 1.1, 3.0, 1.0, 0.0).unwrap();
        let lags: Vec<f64> = (0..12).map(|b| (b as f64 + 0.5) * 1.2).collect();
        let ev = spatial_ev(&p, lags);
        let pe = p.eta0() * p.lambda();
        let o = MinimizeOptions::default();
        let s = fit_spatial(&ev, pe, Weighting::PairCount, NuggetMode::Zero, Gauge::default(), &o).unwrap();
        assert_eq!(s.nugget, 0.0);
        let mut ev2 = ev.clone();
        ev2.lags.iter_mut().for_each(|r| *r *= 2.0);
        let s2 = fit_spatial(&ev2, pe, Weighting::PairCount, NuggetMode::Zero, Gauge::default(), &o).unwrap();
        assert_eq!(s2.lambda, s.lambda);
        assert!(rel(s2.xi, 2.0 * s.xi) < 1e-7);
    }

    #[test]
    fn full_fit_and_json() {
        let p = StslrParams::new(0.7924, 1.0, 1.3, 4.7, 0.2).unwrap();
        let t = temporal_ev(&p, 30);
        let s = spatial_ev(&p, (0..15).map(|b| (b as f64 + 0.5) * 0.6).collect());
        let fit = fit_full(&t, &s, &FitOptions::default()).unwrap();
        for (a, b) in [
            (fit.params.tau_c(), p.tau_c()),
            (fit.params.eta0(), p.eta0()),
            (fit.params.xi(), p.xi()),
            (fit.params.nugget(), p.nugget()),
        ] {
            assert!(rel(a, b) < 1e-5, "{a} vs {b}");
        }
        assert!(fit.diagnostics.objective_value < 1e-10);
        let json = serde_json::to_value(fit).unwrap();
        assert!(json["diagnostics"]["temporal"]["tau_c"].is_number());
        let back: StslrParams = serde_json::from_value(json.clone()).unwrap();
        assert_eq!(back, fit.params);
        let round: FitResult = serde_json::from_value(json).unwrap();
        assert_eq!(round, fit);
    }

    #[test]
    fn stage_errors_are_labelled() {
        let p = StslrParams::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let mut t = temporal_ev(&p, 5);
        t.values.iter_mut().for_each(|v| *v = 1.0);
        let s = spatial_ev(&p, vec![0.5, 1.5, 2.5, 3.5]);
        let e = fit_full(&t, &s, &FitOptions::default()).unwrap_err();
        assert_eq!(e.stage, FitStage::Temporal);
        let e = fit_full(&temporal_ev(&p, 5), &temporal_ev(&p, 5), &FitOptions::default()).unwrap_err();
        assert_eq!(e.stage, FitStage::Spatial);
    }
}
