use proptest::prelude::*;

use stslr::covmodel::{c3_cov, variance, variogram_st, StslrParams};
use stslr::dataio::{SpaceTimeDataset, Station};
use stslr::estimate::{empirical_spatial_variogram, empirical_temporal_variogram, BinSpec};
use stslr::trend::{detrend, fit_trend, retrend};

fn params() -> impl Strategy<Value = StslrParams> {
    (0.05f64..5.0, 0.1f64..5.0, 0.1f64..100.0, 0.1f64..20.0, 0.0f64..1.0)
        .prop_map(|(e, l, x, t, n)| StslrParams::new(e, l, x, t, n).unwrap())
}

/// Station rows (x, y, values) with an occasional gap, never a fully
/// empty time slice because station 0 is complete.
fn station_rows() -> impl Strategy<Value = (usize, Vec<(f64, f64, Vec<Option<f64>>)>)> {
    (3usize..8, 2usize..7).prop_flat_map(|(n_t, n_s)| {
        let row = (0.0f64..20.0, 0.0f64..20.0, prop::collection::vec(prop::option::weighted(0.85, -5.0f64..5.0), n_t));
        (Just(n_t), prop::collection::vec(row, n_s)).prop_map(|(n_t, mut rows)| {
            for v in rows[0].2.iter_mut() {
                v.get_or_insert(0.5);
            }
            (n_t, rows)
        })
    })
}

fn build(n_t: usize, rows: &[(f64, f64, Vec<Option<f64>>)], order: &[usize]) -> SpaceTimeDataset {
    let stations = order
        .iter()
        .map(|&i| Station {
            id: format!("st{i:02}"),
            x: rows[i].0,
            y: rows[i].1,
        })
        .collect();
    let values = order.iter().flat_map(|&i| rows[i].2.clone()).collect();
    SpaceTimeDataset::new(stations, (0..n_t).map(|j| j.to_string()).collect(), 1.0, values).unwrap()
}

proptest! {
    #[test]
    fn covariance_even_and_bounded(p in params(), h in 0.0f64..10.0, u in 0.0f64..10.0) {
        let c = c3_cov(h, u, &p);
        prop_assert!(c > 0.0 && c <= variance(&p) * (1.0 + 1e-14));
        let g = variogram_st(h, u, &p, false);
        prop_assert!((g + c - variance(&p)).abs() <= 1e-12 * variance(&p).max(1.0));
    }

    #[test]
    fn covariance_decreases_along_each_axis(p in params(), h in 0.0f64..5.0, u in 0.0f64..5.0, dh in 0.01f64..2.0) {
        prop_assert!(c3_cov(h + dh, u, &p) <= c3_cov(h, u, &p));
        prop_assert!(c3_cov(h, u + dh, &p) <= c3_cov(h, u, &p));
    }

    #[test]
    fn params_json_round_trip(p in params()) {
        let text = serde_json::to_string(&p).unwrap();
        let back: StslrParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(p, back);
    }

    #[test]
    fn estimators_ignore_station_file_order((n_t, rows) in station_rows(), seed in any::<u64>()) {
        let forward: Vec<usize> = (0..rows.len()).collect();
        let mut shuffled = forward.clone();
        // deterministic shuffle from the seed
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let a = build(n_t, &rows, &forward);
        let b = build(n_t, &rows, &shuffled);
        let spec = BinSpec { max_lag_fraction: 1.0, min_pairs: 1, ..BinSpec::default() };
        prop_assert_eq!(empirical_temporal_variogram(&a, &spec).ok(), empirical_temporal_variogram(&b, &spec).ok());
        prop_assert_eq!(empirical_spatial_variogram(&a, &spec).ok(), empirical_spatial_variogram(&b, &spec).ok());
    }

    #[test]
    fn shifted_values_leave_variograms_unchanged((n_t, rows) in station_rows(), shift in -100.0f64..100.0) {
        let order: Vec<usize> = (0..rows.len()).collect();
        let a = build(n_t, &rows, &order);
        let b = a.map_values(|_, v| v + shift);
        let spec = BinSpec { max_lag_fraction: 1.0, min_pairs: 1, ..BinSpec::default() };
        if let (Ok(x), Ok(y)) = (empirical_temporal_variogram(&a, &spec), empirical_temporal_variogram(&b, &spec)) {
            for (u, v) in x.values.iter().zip(&y.values) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + shift.abs()).powi(2));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn retrend_inverts_detrend(coef in prop::array::uniform6(-1.0f64..1.0), seed in 0u64..1000) {
        let n = 12;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let a = ((i as u64 * 2654435761 + seed) % 1000) as f64 / 100.0;
                let b = ((i as u64 * 40503 + 3 * seed) % 997) as f64 / 100.0;
                (a, b)
            })
            .collect();
        let stations = pts.iter().enumerate().map(|(i, &(x, y))| Station { id: format!("s{i:02}"), x, y }).collect();
        let values = pts
            .iter()
            .flat_map(|&(x, y)| {
                let base = coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * x + coef[4] * y * y + coef[5] * x * y;
                [Some(base + 0.3), Some(base - 0.2)]
            })
            .collect();
        let ds = SpaceTimeDataset::new(stations, vec!["0".into(), "1".into()], 1.0, values).unwrap();
        if let Ok(m) = fit_trend(&ds) {
            let back = retrend(&detrend(&ds, &m), &m);
            for i in 0..ds.n_stations() {
                for j in 0..ds.n_times() {
                    let (a, b) = (ds.value(i, j).unwrap(), back.value(i, j).unwrap());
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }
    }
}
