//! Closed-form space-time covariance, its marginals and variograms, and the
//! Spartan spectral densities they are built from.
//!
//! All real-space functions take normalized lags `h = ‖r‖/ξ` and
//! `u = |τ|/τc`. The 3+1D covariance is the turning-bands image
//! `C₃(h,u) = (1/h)∫₀ʰ C₁(y,u) dy` of the 1+1D linear-response covariance
//!
//! ```text
//! C₁(h,u) = (η₀λ/4)[e^{-λh} erfc(√u − λh/2√u) + e^{λh} erfc(√u + λh/2√u)]
//! ```
//!
//! Products `e^{±λh}·erfc(√u ± a)` with `a = λh/(2√u)` are evaluated as
//! `e^{-u-a²}·erfcx(√u ± a)` whenever the erfc argument is positive, which
//! keeps them finite for any `λh`.

mod params;

pub use params::{NormalizedLag, ParamError, SpectralParams, StslrParams};

use crate::quadrature::composite_gauss_legendre;
use crate::specfun::{erf, erfc, erfcx};

use crate::specfun::FRAC_1_SQRT_PI;

/// Below this `λh` the three-term closed form of `C₃` loses more than
/// about four digits to cancellation.
pub const SMALL_LAMBDA_H: f64 = 1e-4;

/// Largest `a = λh/(2√u)` for which the Taylor series in `h` is used.
const TAYLOR_MAX_A: f64 = 1e-2;

const TAYLOR_TERMS: usize = 8;

/// `e^{-t}·erfc(z)` where `t + z² = u + a²` is known exactly.
#[inline]
fn damped_erfc(t: f64, z: f64, u_plus_a2: f64) -> f64 {
    if z > 0.5 {
        (-u_plus_a2).exp() * erfcx(z)
    } else {
        (-t).exp() * erfc(z)
    }
}

/// 1+1D covariance `C₁(h, u)`, nugget excluded.
pub fn c1_cov(h: f64, u: f64, p: &StslrParams) -> f64 {
    debug_assert!(h >= 0.0 && u >= 0.0);
    let lh = p.lambda() * h;
    if u == 0.0 {
        return p.sill() * (-lh).exp();
    }
    let s = u.sqrt();
    let a = lh / (2.0 * s);
    let e = u + a * a;
    let minus = damped_erfc(lh, s - a, e);
    let plus = damped_erfc(-lh, s + a, e);
    0.25 * p.eta0() * p.lambda() * (minus + plus)
}

/// Temporal marginal covariance `C_T(u) = (λη₀/2) erfc(√u)`.
pub fn cov_temporal_marginal(u: f64, p: &StslrParams) -> f64 {
    p.sill() * erfc(u.sqrt())
}

/// `(1 - e^{-x})/x`, the spatial marginal shape.
fn spatial_shape(x: f64) -> f64 {
    if x < SMALL_LAMBDA_H {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x * x * x * x / 120.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `1 - (1 - e^{-x})/x`, computed without cancellation at small `x`.
fn spatial_shape_complement(x: f64) -> f64 {
    if x < 1e-2 {
        // x/2 − x²/6 + x³/24 − …, alternating series in x
        let mut term = x / 2.0;
        let mut sum = term;
        for k in 3..10 {
            term *= -x / k as f64;
            sum += term;
        }
        sum
    } else {
        1.0 + (-x).exp_m1() / x
    }
}

/// Spatial marginal covariance `C_S(h) = (η₀/2h)(1 − e^{−λh})`.
pub fn cov_spatial_marginal(h: f64, p: &StslrParams) -> f64 {
    p.sill() * spatial_shape(p.lambda() * h)
}

/// Taylor series of `C₃` around `h = 0` for fixed `u > 0`:
/// `C₃ = Σₙ (λh)²ⁿ/(2n+1)! · λ⁻²ⁿ ∂ₕ²ⁿC₁(0,u)`, where the even derivatives
/// follow from the linear-response PDE as `(η₀λ/2)·e^{-u}·Gⁿ(u)` with
/// `G(u) = erfcx(√u)`.
fn c3_taylor(h: f64, u: f64, p: &StslrParams) -> f64 {
    let lh2 = (p.lambda() * h).powi(2);
    let s = u.sqrt();
    let w = erfcx(s);
    // G^(n) = w + P_n(u), P_n = Σ_k coef[k]·u^{-(k+1/2)}/√π with
    // P_1 = −u^{-1/2}/√π and P_n = P_1 + P'_{n-1}.
    let mut coef: Vec<f64> = Vec::with_capacity(TAYLOR_TERMS);
    let mut sum = w;
    let mut weight = 1.0;
    for n in 1..TAYLOR_TERMS {
        let mut next = vec![0.0; n];
        next[0] = -1.0;
        for (k, c) in coef.iter().enumerate() {
            next[k + 1] += -(k as f64 + 0.5) * c;
        }
        coef = next;
        let mut pn = 0.0;
        let mut upow = 1.0 / s;
        for c in &coef {
            pn += c * upow;
            upow /= u;
        }
        weight *= lh2 / ((2 * n) as f64 * (2 * n + 1) as f64);
        let term = weight * (w + pn * FRAC_1_SQRT_PI);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    p.sill() * (-u).exp() * sum
}

/// `(1/h)∫₀ʰ C₁(y,u) dy` by composite Gauss–Legendre, with panels aligned to
/// the erfc transition at `y = 2u/λ`. Used only where both the closed form
/// (cancellation) and the Taylor series (divergence) are unreliable: tiny
/// `λh` with `a = λh/(2√u)` not small.
fn c3_projected(h: f64, u: f64, p: &StslrParams) -> f64 {
    let s = u.sqrt();
    let a = p.lambda() * h / (2.0 * s);
    // in t = y/h the first erfc argument is s − a·t
    let t0 = s / a;
    let mut breaks = vec![0.0, 1.0];
    for k in -8..=8 {
        breaks.push(t0 + k as f64 / a);
    }
    for k in 1..=8 {
        breaks.push(k as f64 / a);
    }
    breaks.retain(|t| (0.0..=1.0).contains(t));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    composite_gauss_legendre(|t| c1_cov(h * t, u, p), &breaks)
}

/// 3+1D space-time covariance `C₃(h, u)`, nugget excluded.
pub fn c3_cov(h: f64, u: f64, p: &StslrParams) -> f64 {
    debug_assert!(h >= 0.0 && u >= 0.0);
    if h == 0.0 {
        return cov_temporal_marginal(u, p);
    }
    if u == 0.0 {
        return cov_spatial_marginal(h, p);
    }
    let lh = p.lambda() * h;
    let s = u.sqrt();
    let a = lh / (2.0 * s);
    if lh < SMALL_LAMBDA_H {
        return if a < TAYLOR_MAX_A {
            c3_taylor(h, u, p)
        } else {
            c3_projected(h, u, p)
        };
    }
    let e = u + a * a;
    let minus = damped_erfc(lh, s - a, e);
    let plus = damped_erfc(-lh, s + a, e);
    let bracket = 2.0 * (-u).exp() * erf(a) + plus - minus;
    p.eta0() * bracket / (4.0 * h)
}

/// Field variance `σ² = η₀λ/2`.
pub fn variance(p: &StslrParams) -> f64 {
    p.sill()
}

/// Space-time variogram `γ(h,u) = η₀λ/2 − C₃(h,u)`, plus the nugget away
/// from the origin when `include_nugget` is set.
pub fn variogram_st(h: f64, u: f64, p: &StslrParams, include_nugget: bool) -> f64 {
    if h == 0.0 && u == 0.0 {
        return 0.0;
    }
    let g = p.sill() - c3_cov(h, u, p);
    if include_nugget {
        g + p.nugget()
    } else {
        g
    }
}

/// Temporal marginal variogram `γ_T(u) = (λη₀/2)[1 − erfc(√u)]`.
pub fn variogram_temporal(u: f64, p: &StslrParams) -> f64 {
    p.sill() * erf(u.sqrt())
}

/// Spatial marginal variogram `γ_S(h) = (η₀/2)[λ − (1 − e^{−λh})/h]`,
/// plus the nugget for `h > 0` when requested.
pub fn variogram_spatial(h: f64, p: &StslrParams, include_nugget: bool) -> f64 {
    let g = p.sill() * spatial_shape_complement(p.lambda() * h);
    if include_nugget && h > 0.0 {
        g + p.nugget()
    } else {
        g
    }
}

/// `C₃` at a physical lag; signs of `r` and `tau` are irrelevant.
pub fn c3_cov_at(r: f64, tau: f64, p: &StslrParams) -> f64 {
    let l = p.normalize(r, tau);
    c3_cov(l.h, l.u, p)
}

/// Equilibrium Spartan spectral density `η₀ξᵈ / (1 + η₁(kξ)² + μ(kξ)⁴)`.
pub fn spectral_density_equilibrium(k: f64, sp: &SpectralParams) -> f64 {
    let kx2 = (k * sp.xi()).powi(2);
    sp.eta0() * sp.xi().powi(sp.d() as i32) / (1.0 + sp.eta1() * kx2 + sp.mu() * kx2 * kx2)
}

/// Time-dependent spectral density: the equilibrium spectrum damped by
/// `exp(−(1 + η₁k²ξ² + μk⁴ξ⁴)|τ|/τc)`.
pub fn spectral_density_time(k: f64, tau: f64, sp: &SpectralParams) -> f64 {
    let kx2 = (k * sp.xi()).powi(2);
    let rate = 1.0 + sp.eta1() * kx2 + sp.mu() * kx2 * kx2;
    sp.eta0() * sp.xi().powi(sp.d() as i32) / rate * (-rate * tau.abs() / sp.tau_c()).exp()
}
