//! Dense-covariance Gaussian simulation on small space-time designs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::covmodel::{c3_cov_at, variance, StslrParams};
use crate::dataio::{SpaceTimeDataset, Station};

pub const DEFAULT_MAX_POINTS: usize = 5000;
const JITTER_DECADES: i32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("design has {points} points, above the cap of {cap}")]
    SizeCap { points: usize, cap: usize },
    #[error("Cholesky factorization failed even with diagonal jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Stations observed at times `0, δt, …, (N_T − 1)·δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDesign {
    pub stations: Vec<(f64, f64)>,
    pub n_times: usize,
    pub delta_t: f64,
    pub seed: u64,
}

impl SamplingDesign {
    /// `n_stations` locations drawn uniformly on `[0, extent]²`.
    pub fn random(n_stations: usize, n_times: usize, extent: f64, delta_t: f64, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let stations = (0..n_stations)
            .map(|_| (rng.gen::<f64>() * extent, rng.gen::<f64>() * extent))
            .collect();
        SamplingDesign {
            stations,
            n_times,
            delta_t,
            seed,
        }
    }

    pub fn n_points(&self) -> usize {
        self.stations.len() * self.n_times
    }

    /// Station-major list of space-time points.
    pub fn points(&self) -> Vec<SpaceTimePoint> {
        let mut out = Vec::with_capacity(self.n_points());
        for &(x, y) in &self.stations {
            for j in 0..self.n_times {
                out.push(SpaceTimePoint {
                    x,
                    y,
                    t: j as f64 * self.delta_t,
                });
            }
        }
        out
    }

    /// Wrap one realization (station-major, as from [`sample`]) as a dataset
    /// with station ids `s000`, `s001`, … and integer time labels.
    pub fn to_dataset(&self, values: &[f64]) -> Result<SpaceTimeDataset, SimError> {
        if values.len() != self.n_points() {
            return Err(SimError::InvalidDesign(format!(
                "{} values for {} points",
                values.len(),
                self.n_points()
            )));
        }
        let width = self.stations.len().saturating_sub(1).to_string().len().max(3);
        let stations = self
            .stations
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Station {
                id: format!("s{i:0width$}"),
                x,
                y,
            })
            .collect();
        let labels = (0..self.n_times).map(|j| j.to_string()).collect();
        SpaceTimeDataset::new(stations, labels, self.delta_t, values.iter().map(|&v| Some(v)).collect())
            .map_err(|e| SimError::InvalidDesign(e.to_string()))
    }
}

/// `n` points uniform on `[0, extent]² × [0, duration]`.
pub fn random_points(n: usize, extent: f64, duration: f64, seed: u64) -> Vec<SpaceTimePoint> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SpaceTimePoint {
            x: rng.gen::<f64>() * extent,
            y: rng.gen::<f64>() * extent,
            t: rng.gen::<f64>() * duration,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

pub fn build_gram(design: &SamplingDesign, p: &StslrParams) -> Result<GramMatrix, SimError> {
    build_gram_points(&design.points(), p, DEFAULT_MAX_POINTS)
}

/// Covariance between every pair of points, nugget on the diagonal.
pub fn build_gram_points(points: &[SpaceTimePoint], p: &StslrParams, cap: usize) -> Result<GramMatrix, SimError> {
    let n = points.len();
    if n > cap {
        return Err(SimError::SizeCap { points: n, cap });
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let pa = points[a];
            (a..n)
                .map(|b| {
                    let pb = points[b];
                    let r = (pa.x - pb.x).hypot(pa.y - pb.y);
                    c3_cov_at(r, pa.t - pb.t, p)
                })
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (a, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            m[(a, a + k)] = v;
            m[(a + k, a)] = v;
        }
        m[(a, a)] += p.nugget();
    }
    Ok(GramMatrix { matrix: m })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdProbe {
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Smallest eigenvalue against the tolerance `−1e-8·trace/dim`.
pub fn psd_probe(g: &GramMatrix) -> Result<PsdProbe, SimError> {
    let n = g.dim();
    if n == 0 {
        return Err(SimError::InvalidDesign("empty matrix".into()));
    }
    if g.matrix.iter().any(|v| !v.is_finite()) {
        return Err(SimError::InvalidDesign("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(g.matrix.clone());
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = -1e-8 * g.trace() / n as f64;
    Ok(PsdProbe {
        min_eigenvalue,
        threshold,
        pass: min_eigenvalue >= threshold,
    })
}

/// Lower Cholesky factor of `g + jitter·I`, starting at `1e-10·σ²` and
/// growing tenfold for up to three decades.
pub fn factor(g: &GramMatrix, p: &StslrParams) -> Result<(DMatrix<f64>, f64), SimError> {
    let base = 1e-10 * variance(p);
    let mut jitter = base;
    for _ in 0..=JITTER_DECADES {
        let mut m = g.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok((ch.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    Err(SimError::Factorization { jitter: jitter / 10.0 })
}

/// Draw `n_realizations` zero-mean fields on the design. Realization `r`
/// uses stream `r` of a ChaCha20 generator keyed by `design.seed`, so the
/// output does not depend on scheduling. Each inner vector is station-major.
pub fn sample(design: &SamplingDesign, p: &StslrParams, n_realizations: usize) -> Result<Vec<Vec<f64>>, SimError> {
    let g = build_gram(design, p)?;
    let (l, _) = factor(&g, p)?;
    Ok(sample_with_factor(&l, design.seed, n_realizations))
}

pub fn sample_with_factor(l: &DMatrix<f64>, seed: u64, n_realizations: usize) -> Vec<Vec<f64>> {
    let n = l.nrows();
    (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for k in 0..=i {
                        acc += l[(i, k)] * z[k];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> StslrParams {
        StslrParams::new(0.7924, 1.07, 1.0, 4.7, 0.0).unwrap()
    }

    #[test]
    fn single_point_and_coincident_points() {
        let p = params().with_nugget(0.3).unwrap();
        let g = build_gram_points(&[SpaceTimePoint { x: 1.0, y: 2.0, t: 0.0 }], &p, 10).unwrap();
        assert_eq!(g.matrix[(0, 0)], variance(&p) + 0.3);

        let q = params();
        let pt = SpaceTimePoint { x: 0.5, y: 0.5, t: 3.0 };
        let g = build_gram_points(&[pt, pt], &q, 10).unwrap();
        assert!(g.matrix.iter().all(|&v| v == variance(&q)));
        let probe = psd_probe(&g).unwrap();
        assert!(probe.pass);
        assert!(probe.min_eigenvalue.abs() < 1e-15);
    }

    #[test]
    fn gram_is_symmetric_and_capped() {
        let d = SamplingDesign::random(6, 4, 5.0, 1.0, 9);
        let g = build_gram(&d, &params()).unwrap();
        assert_eq!(g.matrix, g.matrix.transpose());
        assert!(matches!(
            build_gram_points(&random_points(11, 1.0, 1.0, 0), &params(), 10),
            Err(SimError::SizeCap { points: 11, cap: 10 })
        ));
    }

    #[test]
    fn probe_examples() {
        let g = GramMatrix {
            matrix: DMatrix::identity(5, 5) * 0.4125,
        };
        let probe = psd_probe(&g).unwrap();
        assert!((probe.min_eigenvalue - 0.4125).abs() < 1e-15 && probe.pass);
        let bad = GramMatrix {
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        };
        assert!(!psd_probe(&bad).unwrap().pass);
        for seed in 0..5 {
            let pts = random_points(200, 3.0, 20.0, seed);
            let g = build_gram_points(&pts, &params(), DEFAULT_MAX_POINTS).unwrap();
            assert!(psd_probe(&g).unwrap().pass, "seed {seed}");
        }
    }

    #[test]
    fn indefinite_matrix_fails_to_factor() {
        let bad = GramMatrix {
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        };
        assert!(matches!(factor(&bad, &params()), Err(SimError::Factorization { .. })));
    }

    #[test]
    fn deterministic_streams() {
        let d = SamplingDesign::random(4, 3, 2.0, 1.0, 77);
        let a = sample(&d, &params(), 3).unwrap();
        let b = sample(&d, &params(), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        // realization r does not depend on how many are drawn
        let c = sample(&d, &params(), 1).unwrap();
        assert_eq!(c[0], a[0]);
    }

    #[test]
    fn moments_converge() {
        let d = SamplingDesign {
            stations: vec![(0.0, 0.0), (0.7, 0.2), (2.0, 1.0)],
            n_times: 2,
            delta_t: 2.0,
            seed: 5,
        };
        let p = params().with_nugget(0.1).unwrap();
        let g = build_gram(&d, &p).unwrap();
        let n_real = 10_000;
        let draws = sample(&d, &p, n_real).unwrap();
        let n = d.n_points();
        let nf = n_real as f64;
        for i in 0..n {
            let mean = draws.iter().map(|v| v[i]).sum::<f64>() / nf;
            let sd = g.matrix[(i, i)].sqrt();
            assert!(mean.abs() <= 4.0 * sd / nf.sqrt(), "mean {mean} at {i}");
            for j in 0..n {
                let c = draws.iter().map(|v| v[i] * v[j]).sum::<f64>() / nf;
                let gij = g.matrix[(i, j)];
                // standard error of the product mean for a Gaussian pair
                let se = ((g.matrix[(i, i)] * g.matrix[(j, j)] + gij * gij) / nf).sqrt();
                assert!((c - gij).abs() <= 5.0 * se, "cov ({i},{j}): {c} vs {gij}");
            }
        }
    }

    #[test]
    fn dataset_conversion() {
        let d = SamplingDesign::random(3, 2, 1.0, 0.5, 1);
        let ds = d.to_dataset(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(ds.value(1, 0), Some(3.0));
        assert_eq!(ds.stations()[2].id, "s002");
        assert_eq!(ds.delta_t(), 0.5);
        assert!(d.to_dataset(&[1.0]).is_err());
    }
}
