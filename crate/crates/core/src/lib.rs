//! Space-transformed Spartan linear response (STSLR) space-time covariance
//! models: closed-form evaluation, empirical variograms, staged fitting,
//! trend removal, desk-scale simulation and numerical cross-checks.

pub mod covmodel;
pub mod dataio;
pub mod estimate;
pub mod quadrature;
pub mod simulate;
pub mod specfun;
pub mod tbands;
pub mod trend;
pub mod validate;
