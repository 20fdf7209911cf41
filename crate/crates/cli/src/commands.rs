use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use stslr::covmodel::{c3_cov, variogram_st, StslrParams};
use stslr::dataio::{self, Metadata, ProjectionMode, SpaceTimeDataset};
use stslr::estimate::{self, BinMean, BinSpec, EmpiricalVariogram, FitOptions, Gauge, NuggetMode, VariogramKind, Weighting};
use stslr::simulate::{self, SamplingDesign};
use stslr::trend;
use stslr::validate::{self, ValidationBudget};

use crate::config::Config;
use crate::manifest::Manifest;
use crate::{Cli, Command, DataArgs, EmpiricalArgs, EvalArgs, FitArgs, NuggetArg, ProjectionArg, SimulateArgs, ValidateArgs, WeightingArg};

/// Bad or missing command-line input, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "usage: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub enum Outcome {
    Done,
    ValidationFailed,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let config = Config::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    let (name, mut manifest) = match &cli.command {
        Command::Eval(_) => ("eval", Manifest::new("eval", cli.seed)),
        Command::Empirical(_) => ("empirical", Manifest::new("empirical", cli.seed)),
        Command::Fit(_) => ("fit", Manifest::new("fit", cli.seed)),
        Command::Detrend(_) => ("detrend", Manifest::new("detrend", cli.seed)),
        Command::Simulate(_) => ("simulate", Manifest::new("simulate", cli.seed)),
        Command::Validate(_) => ("validate", Manifest::new("validate", cli.seed)),
    };
    if let Some(c) = &cli.config {
        manifest.input(c)?;
    }
    let outcome = match &cli.command {
        Command::Eval(a) => eval(a, out, &mut manifest),
        Command::Empirical(a) => empirical(a, &config, out, &mut manifest),
        Command::Fit(a) => fit(a, &config, out, &mut manifest),
        Command::Detrend(a) => detrend(&a.data, &config, out, &mut manifest),
        Command::Simulate(a) => simulate(a, cli.seed, out, &mut manifest),
        Command::Validate(a) => validate(a, &config, out, &mut manifest),
    }
    .with_context(|| format!("{name} failed"))?;
    manifest.write(out)?;
    Ok(outcome)
}

fn existing(path: &Path) -> Result<PathBuf> {
    path.canonicalize().map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_params(path: &Path, manifest: &mut Manifest) -> Result<StslrParams> {
    let path = existing(path)?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let p: StslrParams = serde_json::from_str(&text).with_context(|| format!("parsing params {}", path.display()))?;
    manifest.input(&path)?;
    Ok(p)
}

fn write_artifact(out: &Path, file: &str, contents: &str, manifest: &mut Manifest) -> Result<()> {
    let path = out.join(file);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(&path)
}

fn grid(max: f64, steps: usize, name: &str) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(usage(format!("{name} grid is empty")));
    }
    if !(max.is_finite() && max >= 0.0) {
        return Err(usage(format!("{name} max must be finite and >= 0")));
    }
    if steps == 1 {
        return Ok(vec![0.0]);
    }
    Ok((0..steps).map(|i| max * i as f64 / (steps - 1) as f64).collect())
}

fn eval(a: &EvalArgs, out: &Path, manifest: &mut Manifest) -> Result<Outcome> {
    let hs = grid(a.h_max, a.h_steps, "h")?;
    let us = grid(a.u_max, a.u_steps, "u")?;
    let p = read_params(&a.params, manifest)?;
    let mut csv = String::from("h,u,cov,variogram\n");
    for &h in &hs {
        for &u in &us {
            let c = c3_cov(h, u, &p);
            let g = variogram_st(h, u, &p, !a.no_nugget);
            writeln!(csv, "{h:?},{u:?},{c:?},{g:?}")?;
        }
    }
    write_artifact(out, "eval.csv", &csv, manifest)?;
    Ok(Outcome::Done)
}

/// Sidecar first, then config, then flags.
fn resolve_metadata(d: &DataArgs, config: &Config) -> Result<Metadata> {
    let sidecar = match &d.meta {
        Some(m) => Some(existing(m)?),
        None => Some(dataio::sidecar_path(&d.data)).filter(|p| p.exists()),
    };
    let mut meta = match &sidecar {
        Some(p) => dataio::read_metadata(p)?,
        None => Metadata::default(),
    };
    if let Some(pc) = &config.projection {
        if let Some(m) = pc.mode {
            meta.projection_mode = m;
        }
        if pc.reference_latitude.is_some() {
            meta.reference_latitude = pc.reference_latitude;
        }
        if let Some(div) = pc.divisor {
            meta.divisor = div;
        }
    }
    if let Some(dt) = config.delta_t {
        meta.delta_t = dt;
    }
    if let Some(r) = config.rescale {
        meta.rescale = r;
    }
    if let Some(m) = d.projection {
        meta.projection_mode = match m {
            ProjectionArg::None => ProjectionMode::None,
            ProjectionArg::LocalEquirectangular => ProjectionMode::LocalEquirectangular,
        };
    }
    if d.reference_latitude.is_some() {
        meta.reference_latitude = d.reference_latitude;
    }
    if let Some(div) = d.divisor {
        meta.divisor = div;
    }
    if let Some(dt) = d.delta_t {
        meta.delta_t = dt;
    }
    if let Some(r) = d.rescale {
        meta.rescale = r;
    }
    Ok(meta)
}

fn load_data(d: &DataArgs, config: &Config, manifest: &mut Manifest) -> Result<SpaceTimeDataset> {
    let path = existing(&d.data)?;
    let meta = resolve_metadata(d, config)?;
    let ds = dataio::load_csv_with(&path, &meta)?;
    manifest.input(&path)?;
    if let Some(m) = &d.meta {
        manifest.input(m)?;
    } else {
        let side = dataio::sidecar_path(&path);
        if side.exists() {
            manifest.input(&side)?;
        }
    }
    log::info!("loaded {} stations x {} times", ds.n_stations(), ds.n_times());
    Ok(ds)
}

fn bin_spec(a: &EmpiricalArgs, config: &Config) -> Result<BinSpec> {
    let mut spec = BinSpec::default();
    if let Some(b) = &config.bins {
        if let Some(v) = b.max_lag_fraction {
            spec.max_lag_fraction = v;
        }
        spec.bin_width = b.bin_width.or(spec.bin_width);
        spec.tolerance = b.tolerance.or(spec.tolerance);
        if let Some(v) = b.min_pairs {
            spec.min_pairs = v;
        }
        if let Some(v) = b.bin_mean {
            spec.bin_mean = v;
        }
    }
    if let Some(v) = a.max_lag_fraction {
        spec.max_lag_fraction = v;
    }
    spec.bin_width = a.bin_width.or(spec.bin_width);
    spec.tolerance = a.tolerance.or(spec.tolerance);
    if let Some(v) = a.min_pairs {
        spec.min_pairs = v;
    }
    if a.pair_weighted {
        spec.bin_mean = BinMean::PairWeighted;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn empirical(a: &EmpiricalArgs, config: &Config, out: &Path, manifest: &mut Manifest) -> Result<Outcome> {
    let spec = bin_spec(a, config)?;
    let ds = load_data(&a.data, config, manifest)?;
    let temporal = estimate::empirical_temporal_variogram(&ds, &spec)?;
    let spatial = estimate::empirical_spatial_variogram(&ds, &spec)?;
    write_artifact(out, "temporal_variogram.csv", &temporal.to_csv_string(), manifest)?;
    write_artifact(out, "spatial_variogram.csv", &spatial.to_csv_string(), manifest)?;
    Ok(Outcome::Done)
}

fn read_variogram(path: &Path, kind: VariogramKind, manifest: &mut Manifest) -> Result<EmpiricalVariogram> {
    let path = existing(path)?;
    let ev = EmpiricalVariogram::read(&path)?;
    if ev.kind != kind {
        bail!("{} holds a {:?} variogram, expected {:?}", path.display(), ev.kind, kind);
    }
    manifest.input(&path)?;
    Ok(ev)
}

fn fit(a: &FitArgs, config: &Config, out: &Path, manifest: &mut Manifest) -> Result<Outcome> {
    let (Some(tp), Some(sp)) = (&a.temporal, &a.spatial) else {
        return Err(usage("fit needs both --temporal and --spatial variogram files"));
    };
    let mut opts = FitOptions {
        weighting: config.weighting.unwrap_or_default(),
        nugget: config.nugget.unwrap_or_default(),
        gauge: config.gauge.unwrap_or_default(),
        ..FitOptions::default()
    };
    if let Some(w) = a.weighting {
        opts.weighting = match w {
            WeightingArg::Uniform => Weighting::Uniform,
            WeightingArg::PairCount => Weighting::PairCount,
        };
    }
    if let Some(n) = a.nugget {
        opts.nugget = match n {
            NuggetArg::Free => NuggetMode::Free,
            NuggetArg::Zero => NuggetMode::Zero,
        };
    }
    if let Some(l) = a.gauge_lambda {
        opts.gauge = Gauge::Lambda(l);
    }
    if let Some(x) = a.gauge_xi {
        opts.gauge = Gauge::Xi(x);
    }
    let temporal = read_variogram(tp, VariogramKind::Temporal, manifest)?;
    let spatial = read_variogram(sp, VariogramKind::Spatial, manifest)?;
    let result = estimate::fit_full(&temporal, &spatial, &opts)?;
    if !result.diagnostics.converged {
        log::warn!("fit did not fully converge; see diagnostics in params.json");
    }
    let json = serde_json::to_string_pretty(&result)? + "\n";
    write_artifact(out, "params.json", &json, manifest)?;
    Ok(Outcome::Done)
}

fn detrend(d: &DataArgs, config: &Config, out: &Path, manifest: &mut Manifest) -> Result<Outcome> {
    let ds = load_data(d, config, manifest)?;
    let model = trend::fit_trend(&ds)?;
    let residuals = trend::detrend(&ds, &model);
    let path = out.join("residuals.csv");
    dataio::write_csv(&path, &residuals)?;
    manifest.output(&path)?;
    manifest.output(&dataio::sidecar_path(&path))?;
    let json = serde_json::to_string_pretty(&model)? + "\n";
    write_artifact(out, "trend.json", &json, manifest)?;
    Ok(Outcome::Done)
}

fn simulate(a: &SimulateArgs, seed: u64, out: &Path, manifest: &mut Manifest) -> Result<Outcome> {
    if a.stations == 0 || a.times == 0 || a.realizations == 0 {
        return Err(usage("stations, times and realizations must all be >= 1"));
    }
    if !(a.extent.is_finite() && a.extent > 0.0 && a.delta_t.is_finite() && a.delta_t > 0.0) {
        return Err(usage("extent and delta-t must be finite and > 0"));
    }
    let p = read_params(&a.params, manifest)?;
    let design = SamplingDesign::random(a.stations, a.times, a.extent, a.delta_t, seed);
    let draws = simulate::sample(&design, &p, a.realizations)?;
    for (r, values) in draws.iter().enumerate() {
        let ds = design.to_dataset(values)?;
        let path = out.join(format!("realization_{r:03}.csv"));
        dataio::write_csv(&path, &ds)?;
        manifest.output(&path)?;
        manifest.output(&dataio::sidecar_path(&path))?;
    }
    Ok(Outcome::Done)
}

fn validate(a: &ValidateArgs, config: &Config, out: &Path, manifest: &mut Manifest) -> Result<Outcome> {
    let mut budget = ValidationBudget::default();
    if let Some(q) = config.quadrature {
        budget.quadrature = q;
    }
    if let Some(n) = a.max_subdivisions {
        budget.quadrature.max_subdivisions = n;
    }
    budget.psd_designs = a.psd_designs.or(config.psd_designs).unwrap_or(budget.psd_designs);
    budget.psd_points = a.psd_points.or(config.psd_points).unwrap_or(budget.psd_points);
    budget.quadrature.validate().map_err(|e| usage(e.to_string()))?;
    let p = read_params(&a.params, manifest)?;
    let report = validate::run_all(&p, &budget);
    let json = serde_json::to_string_pretty(&report)? + "\n";
    write_artifact(out, "report.json", &json, manifest)?;
    for c in &report.checks {
        log::info!("{}: {} (max {:e}, tol {:e})", c.name, if c.pass { "pass" } else { "FAIL" }, c.max_discrepancy, c.tolerance);
    }
    Ok(if report.pass { Outcome::Done } else { Outcome::ValidationFailed })
}
