//! Numerical oracles for the closed-form covariances: the turning-bands
//! projection integral, the general-dimension turning-bands transform and a
//! direct inverse Fourier transform of the 1D time-dependent spectrum.
//!
//! Nothing here is used for production evaluation; these exist to check
//! `covmodel` by an independent route.

use std::f64::consts::PI;

use thiserror::Error;

use crate::covmodel::{spectral_density_time, SpectralParams, StslrParams};
use crate::quadrature::{integrate, integrate_with_breaks, QuadEstimate, QuadratureError};

pub use crate::quadrature::QuadratureSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("turning-bands transform needs d >= 3, got d = {0}")]
    UnsupportedDimension(u32),
    #[error("spectral oracle requires d = 1 and mu = 0")]
    UnsupportedSpectrum,
    #[error("projection needs h > 0, got {0}")]
    NonPositiveLag(f64),
}

/// Turning-bands projection `(1/h)∫₀ʰ c1(y, u) dy`, with the quadrature
/// error estimate scaled the same way.
pub fn tb_project<F>(c1: F, h: f64, u: f64, p: &StslrParams, q: &QuadratureSpec) -> Result<QuadEstimate, OracleError>
where
    F: Fn(f64, f64, &StslrParams) -> f64,
{
    if !(h > 0.0) {
        return Err(OracleError::NonPositiveLag(h));
    }
    let est = integrate(|y| c1(y, u, p), 0.0, h, q)?;
    Ok(QuadEstimate {
        value: est.value / h,
        error: est.error / h,
        subdivisions: est.subdivisions,
    })
}

/// `Γ(d/2)` for positive integer `d`, by the half-integer recurrence.
fn gamma_half(d: u32) -> f64 {
    let (mut g, mut x) = if d % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = d as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// Turning-bands transform to `d ≥ 3` dimensions:
/// `C_d(r) = 2Γ(d/2)/(√π Γ((d−1)/2)) ∫₀¹ c1(v r)(1 − v²)^{(d−3)/2} dv`.
pub fn tb_transform_d<F>(c1: F, r: f64, d: u32, q: &QuadratureSpec) -> Result<QuadEstimate, OracleError>
where
    F: Fn(f64) -> f64,
{
    if d < 3 {
        return Err(OracleError::UnsupportedDimension(d));
    }
    let prefactor = 2.0 * gamma_half(d) / (PI.sqrt() * gamma_half(d - 1));
    let power = (d as f64 - 3.0) / 2.0;
    let est = if d == 3 {
        integrate(|v| c1(v * r), 0.0, 1.0, q)?
    } else {
        integrate(|v| c1(v * r) * (1.0 - v * v).max(0.0).powf(power), 0.0, 1.0, q)?
    };
    Ok(QuadEstimate {
        value: prefactor * est.value,
        error: prefactor * est.error,
        subdivisions: est.subdivisions,
    })
}

/// Inverse Fourier transform of the 1D time-dependent spectrum,
/// `(1/π)∫₀^∞ cos(k r) C̃(k, τ) dk`, evaluated at physical lags `r`, `tau`.
///
/// For `τ ≠ 0` the integral is truncated where the exponential factor makes
/// the integrand negligible. For `τ = 0` the algebraic `k⁻²` tail beyond the
/// cutoff is added analytically.
pub fn spectral_c1_oracle(r: f64, tau: f64, sp: &SpectralParams, q: &QuadratureSpec) -> Result<QuadEstimate, OracleError> {
    if sp.d() != 1 || sp.mu() != 0.0 {
        return Err(OracleError::UnsupportedSpectrum);
    }
    let r = r.abs();
    let u = tau.abs() / sp.tau_c();
    let b = sp.xi() * sp.eta1().sqrt(); // integrand ∝ 1/(1 + b²k²)
    let integrand = |k: f64| (k * r).cos() * spectral_density_time(k, tau, sp);

    if u > 0.0 {
        // exp(−(1 + b²k²)u) < 1e-18 beyond this wavenumber
        let cut_exponent = 18.0 * std::f64::consts::LN_10 + (q.abs_tol * 1e-3).ln().abs().min(50.0);
        let k_max = ((cut_exponent / u - 1.0).max(1.0)).sqrt() / b;
        let est = integrate_with_breaks(integrand, &oscillation_breaks(r, k_max), q)?;
        return Ok(scale(est, 1.0 / PI));
    }

    // τ = 0: ∫₀^K numerically, ∫_K^∞ in closed form or by integration by parts
    let amp = sp.eta0() * sp.xi();
    let k_max = if r == 0.0 { 1e3 / b } else { (1e3 / b).max(2e3 / r) };
    let est = integrate_with_breaks(integrand, &oscillation_breaks(r, k_max), q)?;
    let tail = if r == 0.0 {
        amp * (PI / 2.0 - (b * k_max).atan()) / b
    } else {
        amp * cosine_tail(r, b, k_max)
    };
    Ok(QuadEstimate {
        value: (est.value + tail) / PI,
        error: est.error / PI,
        subdivisions: est.subdivisions,
    })
}

fn scale(est: QuadEstimate, factor: f64) -> QuadEstimate {
    QuadEstimate {
        value: est.value * factor,
        error: est.error * factor,
        subdivisions: est.subdivisions,
    }
}

/// Panel boundaries every half period of `cos(k r)` (capped in number).
fn oscillation_breaks(r: f64, k_max: f64) -> Vec<f64> {
    let n = if r > 0.0 {
        ((k_max * r / PI).ceil() as usize).clamp(1, 4000)
    } else {
        1
    };
    (0..=n).map(|i| k_max * i as f64 / n as f64).collect()
}

/// `∫_K^∞ cos(k r)/(1 + b²k²) dk` by repeated integration by parts, valid
/// for `K·r ≫ 1` and `b·K ≫ 1`.
fn cosine_tail(r: f64, b: f64, k: f64) -> f64 {
    // derivatives of f(k) = 1/(1 + b²k²)
    let w = 1.0 + b * b * k * k;
    let f0 = 1.0 / w;
    let f1 = -2.0 * b * b * k / (w * w);
    let f2 = (6.0 * b.powi(4) * k * k - 2.0 * b * b) / w.powi(3);
    let f3 = 24.0 * b.powi(4) * k * (1.0 - b * b * k * k) / w.powi(4);
    let (s, c) = (k * r).sin_cos();
    -s * f0 / r - c * f1 / (r * r) + s * f2 / r.powi(3) + c * f3 / r.powi(4)
}
