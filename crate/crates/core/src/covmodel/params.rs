use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::Invalid {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

/// Parameter vector of the space-time covariance model plus a spatial nugget.
///
/// `eta0` is the amplitude (the sill is `eta0·lambda/2`), `lambda` the
/// dimensionless flexibility, `xi` the characteristic length in spatial units,
/// `tau_c` the characteristic time in temporal units and `nugget` a variance
/// added at nonzero spatial lag. Validated on construction; evaluation never
/// re-checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct StslrParams {
    eta0: f64,
    lambda: f64,
    xi: f64,
    tau_c: f64,
    nugget: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    eta0: f64,
    lambda: f64,
    xi: f64,
    tau_c: f64,
    #[serde(default)]
    nugget: f64,
}

impl TryFrom<RawParams> for StslrParams {
    type Error = ParamError;
    fn try_from(r: RawParams) -> Result<Self, ParamError> {
        StslrParams::new(r.eta0, r.lambda, r.xi, r.tau_c, r.nugget)
    }
}

impl From<StslrParams> for RawParams {
    fn from(p: StslrParams) -> Self {
        RawParams {
            eta0: p.eta0,
            lambda: p.lambda,
            xi: p.xi,
            tau_c: p.tau_c,
            nugget: p.nugget,
        }
    }
}

impl StslrParams {
    pub fn new(eta0: f64, lambda: f64, xi: f64, tau_c: f64, nugget: f64) -> Result<Self, ParamError> {
        let nugget = if nugget.is_finite() && nugget >= 0.0 {
            nugget
        } else {
            return Err(ParamError::Invalid {
                name: "nugget",
                value: nugget,
                reason: "must be finite and >= 0",
            });
        };
        Ok(StslrParams {
            eta0: positive("eta0", eta0)?,
            lambda: positive("lambda", lambda)?,
            xi: positive("xi", xi)?,
            tau_c: positive("tau_c", tau_c)?,
            nugget,
        })
    }

    /// Fitted values reported for the daily ozone application
    /// (`xi` in units of 10 km, `tau_c` in days), nugget included.
    pub fn reference() -> Self {
        StslrParams {
            eta0: 0.7924,
            lambda: 1.07,
            xi: 45.49,
            tau_c: 4.70,
            nugget: 0.4125,
        }
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Rigidity `η₁ = 1/λ²`.
    pub fn eta1(&self) -> f64 {
        1.0 / (self.lambda * self.lambda)
    }

    /// Variance without nugget, `η₀λ/2`.
    pub fn sill(&self) -> f64 {
        self.eta0 * self.lambda / 2.0
    }

    pub fn with_nugget(self, nugget: f64) -> Result<Self, ParamError> {
        Self::new(self.eta0, self.lambda, self.xi, self.tau_c, nugget)
    }

    /// Normalize a physical lag; signs are discarded.
    pub fn normalize(&self, r: f64, tau: f64) -> NormalizedLag {
        NormalizedLag {
            h: r.abs() / self.xi,
            u: tau.abs() / self.tau_c,
        }
    }
}

/// Dimensionless lag pair `h = ‖r‖/ξ`, `u = |τ|/τc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedLag {
    pub h: f64,
    pub u: f64,
}

/// Parameters of the Spartan spectral density and its linear-response decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    eta0: f64,
    eta1: f64,
    xi: f64,
    mu: f64,
    tau_c: f64,
    d: u32,
}

impl SpectralParams {
    pub fn new(eta0: f64, eta1: f64, xi: f64, mu: f64, tau_c: f64, d: u32) -> Result<Self, ParamError> {
        positive("eta0", eta0)?;
        positive("xi", xi)?;
        positive("tau_c", tau_c)?;
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(ParamError::Invalid {
                name: "mu",
                value: mu,
                reason: "must be finite and >= 0",
            });
        }
        if d == 0 {
            return Err(ParamError::Invalid {
                name: "d",
                value: 0.0,
                reason: "spatial dimension must be positive",
            });
        }
        // permissibility: the quartic denominator must stay positive
        let ok = if mu == 0.0 {
            eta1 > 0.0
        } else {
            eta1.is_finite() && eta1 > -2.0 * mu.sqrt()
        };
        if !ok {
            return Err(ParamError::Invalid {
                name: "eta1",
                value: eta1,
                reason: "violates the permissibility condition",
            });
        }
        Ok(SpectralParams {
            eta0,
            eta1,
            xi,
            mu,
            tau_c,
            d,
        })
    }

    /// The one-dimensional zero-curvature spectrum matching `p`.
    pub fn from_stslr_1d(p: &StslrParams) -> Self {
        SpectralParams {
            eta0: p.eta0(),
            eta1: p.eta1(),
            xi: p.xi(),
            mu: 0.0,
            tau_c: p.tau_c(),
            d: 1,
        }
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }
    pub fn eta1(&self) -> f64 {
        self.eta1
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }
    pub fn d(&self) -> u32 {
        self.d
    }
}
