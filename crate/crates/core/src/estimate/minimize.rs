//! Derivative-free Nelder–Mead simplex search with multi-start.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Free,
    /// Searched in log coordinates, so iterates stay strictly positive.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    pub starts: usize,
    /// Simplex diameter tolerance, relative to the coordinate magnitude.
    pub x_tol: f64,
    /// Objective spread tolerance, relative to the best value.
    pub f_tol: f64,
    /// Initial simplex edge in (log) coordinates.
    pub initial_step: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iterations: 5000,
            starts: 5,
            x_tol: 1e-10,
            f_tol: 1e-12,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MinimizeError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("no convergence after {} iterations (best value {})", .0.iterations, .0.value)]
    NonConvergence(Minimum),
    #[error("start has {start} coordinates but {bounds} bounds")]
    DimensionMismatch { start: usize, bounds: usize },
}

// Fixed jitter pattern (in log units for positive coordinates) so that
// multi-start runs are reproducible without a random generator.
const JITTER: [f64; 8] = [0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 3.0];

fn to_internal(x: &[f64], bounds: &[Bound]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(&v, b)| match b {
            Bound::Free => v,
            Bound::Positive => v.ln(),
        })
        .collect()
}

fn to_external(y: &[f64], bounds: &[Bound]) -> Vec<f64> {
    y.iter()
        .zip(bounds)
        .map(|(&v, b)| match b {
            Bound::Free => v,
            Bound::Positive => v.exp(),
        })
        .collect()
}

/// Minimize `objective` from `start`. Each start after the first shifts the
/// coordinates by a fixed pattern; the best converged run wins, ties going
/// to the earlier start.
pub fn minimize<F>(objective: F, start: &[f64], bounds: &[Bound], opts: &MinimizeOptions) -> Result<Minimum, MinimizeError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if start.len() != bounds.len() {
        return Err(MinimizeError::DimensionMismatch {
            start: start.len(),
            bounds: bounds.len(),
        });
    }
    if start.iter().zip(bounds).any(|(&v, &b)| b == Bound::Positive && !(v > 0.0)) || !objective(start).is_finite() {
        return Err(MinimizeError::NonFiniteStart);
    }
    let y0 = to_internal(start, bounds);
    let n_starts = opts.starts.max(1);
    let runs: Vec<Minimum> = (0..n_starts)
        .into_par_iter()
        .map(|s| {
            let y: Vec<f64> = y0
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let shift = JITTER[(s + i) % JITTER.len()] * if s == 0 { 0.0 } else { 1.0 };
                    match bounds[i] {
                        Bound::Positive => v + shift,
                        Bound::Free => v + shift * v.abs().max(1.0) * 0.25,
                    }
                })
                .collect();
            let g = |y: &[f64]| {
                let v = objective(&to_external(y, bounds));
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            };
            let (y, value, iterations, converged) = nelder_mead(g, y, opts);
            Minimum {
                argmin: to_external(&y, bounds),
                value,
                iterations,
                converged,
            }
        })
        .collect();

    let total_iterations = runs.iter().map(|r| r.iterations).sum();
    let mut best: Option<&Minimum> = None;
    for r in &runs {
        let better = match best {
            None => true,
            Some(b) => (r.converged && !b.converged) || (r.converged == b.converged && r.value < b.value),
        };
        if better {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one start").clone();
    best.iterations = total_iterations;
    if best.converged {
        Ok(best)
    } else {
        Err(MinimizeError::NonConvergence(best))
    }
}

fn nelder_mead<G>(g: G, y0: Vec<f64>, opts: &MinimizeOptions) -> (Vec<f64>, f64, usize, bool)
where
    G: Fn(&[f64]) -> f64,
{
    let n = y0.len();
    let mut simplex: Vec<Vec<f64>> = vec![y0.clone()];
    for i in 0..n {
        let mut v = y0.clone();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut f: Vec<f64> = simplex.iter().map(|v| g(v)).collect();
    let mut iterations = 0;

    loop {
        // order vertices: best first; stable sort keeps results deterministic
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        f = order.iter().map(|&i| f[i]).collect();

        let best = &simplex[0];
        let diameter_ok = simplex[1..].iter().all(|v| {
            v.iter()
                .zip(best)
                .all(|(a, b)| (a - b).abs() <= opts.x_tol * b.abs().max(1.0))
        });
        let spread = f[n] - f[0];
        let spread_ok = f[0].is_finite() && spread <= opts.f_tol * f[0].abs();
        if diameter_ok || spread_ok {
            return (simplex[0].clone(), f[0], iterations, true);
        }
        if iterations >= opts.max_iterations {
            return (simplex[0].clone(), f[0], iterations, false);
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = g(&reflected);
        if fr < f[0] {
            let expanded = along(-2.0);
            let fe = g(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                f[n] = fe;
            } else {
                simplex[n] = reflected;
                f[n] = fr;
            }
            continue;
        }
        if fr < f[n - 1] {
            simplex[n] = reflected;
            f[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < f[n] {
            let c = along(-0.5);
            let fc = g(&c);
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = g(&c);
            (c, fc)
        };
        if fc < f[n].min(fr) {
            simplex[n] = contracted;
            f[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = simplex[i].iter().zip(&best).map(|(v, b)| b + 0.5 * (v - b)).collect();
            f[i] = g(&simplex[i]);
        }
    }
}
