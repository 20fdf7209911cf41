//! Station observation data: CSV ingestion, coordinate projection and the
//! per-time presence sets used by the estimators.
//!
//! Two CSV layouts are accepted, distinguished by their header line:
//!
//! ```text
//! station_id,x,y,t,value
//! station_id,lon,lat,t,value
//! ```
//!
//! `t` is an integer index, a real number or an ISO date (`YYYY-MM-DD`); all
//! rows of one file use the same kind. A missing observation is an empty
//! `value` field or an absent row.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const PLANAR_HEADER: [&str; 5] = ["station_id", "x", "y", "t", "value"];
pub const GEOGRAPHIC_HEADER: [&str; 5] = ["station_id", "lon", "lat", "t", "value"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("unrecognized header `{0}`")]
    Header(String),
    #[error("line {line}: duplicate observation for station `{station}` at t = {t}")]
    Duplicate { line: u64, station: String, t: String },
    #[error("line {line}: station `{station}` has inconsistent coordinates")]
    InconsistentStation { line: u64, station: String },
    #[error("time stamps are not on a regular grid: {0}")]
    IrregularTimeGrid(String),
    #[error("latitude {0} is outside (-90, 90)")]
    InvalidLatitude(f64),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    None,
    LocalEquirectangular,
}

/// How raw coordinates become planar, normalized ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub mode: ProjectionMode,
    /// Degrees. `None` means the mean latitude of the stations being loaded.
    pub reference_latitude: Option<f64>,
    pub divisor: f64,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec {
            mode: ProjectionMode::None,
            reference_latitude: None,
            divisor: 1.0,
        }
    }
}

impl ProjectionSpec {
    pub fn equirectangular(reference_latitude: Option<f64>, divisor: f64) -> Self {
        ProjectionSpec {
            mode: ProjectionMode::LocalEquirectangular,
            reference_latitude,
            divisor,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.divisor.is_finite() && self.divisor > 0.0) {
            return Err(DataError::Invalid(format!("divisor must be > 0, got {}", self.divisor)));
        }
        if let Some(lat) = self.reference_latitude {
            check_latitude(lat)?;
        }
        Ok(())
    }
}

fn check_latitude(lat: f64) -> Result<(), DataError> {
    if lat.is_finite() && lat.abs() < 90.0 {
        Ok(())
    } else {
        Err(DataError::InvalidLatitude(lat))
    }
}

/// Project `(a, b)` to normalized planar coordinates. In equirectangular
/// mode `a, b` are longitude and latitude in degrees and `reference_latitude`
/// must be set; in mode none they are planar and only divided.
pub fn project_coordinates(a: f64, b: f64, spec: &ProjectionSpec) -> Result<(f64, f64), DataError> {
    spec.validate()?;
    match spec.mode {
        ProjectionMode::None => Ok((a / spec.divisor, b / spec.divisor)),
        ProjectionMode::LocalEquirectangular => {
            check_latitude(b)?;
            let lat_ref = spec
                .reference_latitude
                .ok_or_else(|| DataError::Invalid("equirectangular projection needs a reference latitude".into()))?;
            let x = EARTH_RADIUS_M * lat_ref.to_radians().cos() * a.to_radians() / spec.divisor;
            let y = EARTH_RADIUS_M * b.to_radians() / spec.divisor;
            Ok((x, y))
        }
    }
}

/// Inverse of [`project_coordinates`].
pub fn unproject_coordinates(x: f64, y: f64, spec: &ProjectionSpec) -> Result<(f64, f64), DataError> {
    spec.validate()?;
    match spec.mode {
        ProjectionMode::None => Ok((x * spec.divisor, y * spec.divisor)),
        ProjectionMode::LocalEquirectangular => {
            let lat_ref = spec
                .reference_latitude
                .ok_or_else(|| DataError::Invalid("equirectangular projection needs a reference latitude".into()))?;
            let lon = (x * spec.divisor / (EARTH_RADIUS_M * lat_ref.to_radians().cos())).to_degrees();
            let lat = (y * spec.divisor / EARTH_RADIUS_M).to_degrees();
            Ok((lon, lat))
        }
    }
}

/// Contents of the JSON sidecar that accompanies a data file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub delta_t: f64,
    pub divisor: f64,
    pub rescale: f64,
    pub projection_mode: ProjectionMode,
    pub reference_latitude: Option<f64>,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            delta_t: 1.0,
            divisor: 1.0,
            rescale: 1.0,
            projection_mode: ProjectionMode::None,
            reference_latitude: None,
        }
    }
}

impl Metadata {
    pub fn projection(&self) -> ProjectionSpec {
        ProjectionSpec {
            mode: self.projection_mode,
            reference_latitude: self.reference_latitude,
            divisor: self.divisor,
        }
    }

    pub fn with_projection(mut self, spec: &ProjectionSpec) -> Self {
        self.projection_mode = spec.mode;
        self.reference_latitude = spec.reference_latitude;
        self.divisor = spec.divisor;
        self
    }
}

/// Sidecar location for a data file: `obs.csv` → `obs.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn read_metadata(path: &Path) -> Result<Metadata, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn write_metadata(path: &Path, meta: &Metadata) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(meta).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// Observations of `N_S` stations on `N_T` equally spaced times, with gaps.
///
/// Values are stored station-major. Time `j` sits at `j·delta_t`; the
/// original time labels are kept for output.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeDataset {
    stations: Vec<Station>,
    time_labels: Vec<String>,
    delta_t: f64,
    values: Vec<Option<f64>>,
}

impl SpaceTimeDataset {
    /// Build a dataset from a dense station-major value table. Stations with
    /// no observations are dropped; every time must keep at least one.
    pub fn new(stations: Vec<Station>, time_labels: Vec<String>, delta_t: f64, values: Vec<Option<f64>>) -> Result<Self, DataError> {
        let n_t = time_labels.len();
        if stations.is_empty() || n_t == 0 {
            return Err(DataError::Invalid("dataset needs at least one station and one time".into()));
        }
        if values.len() != stations.len() * n_t {
            return Err(DataError::Invalid(format!(
                "value table has {} cells, expected {}",
                values.len(),
                stations.len() * n_t
            )));
        }
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(DataError::Invalid(format!("delta_t must be > 0, got {delta_t}")));
        }
        let mut seen = BTreeSet::new();
        for s in &stations {
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::Invalid(format!("station id `{}` is not unique", s.id)));
            }
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(DataError::Invalid(format!("station `{}` has non-finite coordinates", s.id)));
            }
        }
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!("non-finite value {v}")));
        }

        let mut kept_stations = Vec::with_capacity(stations.len());
        let mut kept_values = Vec::with_capacity(values.len());
        for (i, s) in stations.into_iter().enumerate() {
            let row = &values[i * n_t..(i + 1) * n_t];
            if row.iter().any(Option::is_some) {
                kept_stations.push(s);
                kept_values.extend_from_slice(row);
            }
        }
        let dropped = values.len() / n_t - kept_stations.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} station(s) without observations");
        }
        if kept_stations.is_empty() {
            return Err(DataError::Invalid("no observations".into()));
        }
        for j in 0..n_t {
            if !(0..kept_stations.len()).any(|i| kept_values[i * n_t + j].is_some()) {
                return Err(DataError::Invalid(format!("time `{}` has no observations", time_labels[j])));
            }
        }
        Ok(SpaceTimeDataset {
            stations: kept_stations,
            time_labels,
            delta_t,
            values: kept_values,
        })
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }
    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }
    pub fn n_times(&self) -> usize {
        self.time_labels.len()
    }
    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }
    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }
    pub fn value(&self, station: usize, time: usize) -> Option<f64> {
        self.values[station * self.n_times() + time]
    }
    /// All values of one station in time order.
    pub fn series(&self, station: usize) -> &[Option<f64>] {
        let n_t = self.n_times();
        &self.values[station * n_t..(station + 1) * n_t]
    }
    pub fn n_observations(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Apply `f(station, value)` to every observation; gaps stay gaps.
    pub fn map_values<F>(&self, f: F) -> SpaceTimeDataset
    where
        F: Fn(&Station, f64) -> f64,
    {
        let n_t = self.n_times();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v.map(|v| f(&self.stations[k / n_t], v)))
            .collect();
        SpaceTimeDataset {
            values,
            ..self.clone()
        }
    }

    /// Station indices sorted by id, the canonical summation order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_stations()).collect();
        idx.sort_by(|&a, &b| self.stations[a].id.cmp(&self.stations[b].id));
        idx
    }
}

/// Stations observed at each time, `S_j`, in canonical (id) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceSets {
    sets: Vec<Vec<usize>>,
    ranks: Vec<usize>,
}

impl PresenceSets {
    pub fn set(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }
    pub fn count(&self, j: usize) -> usize {
        self.sets[j].len()
    }
    /// `N_{j,m} = #(S_j ∩ S_m)`.
    pub fn joint_count(&self, j: usize, m: usize) -> usize {
        self.intersection(j, m).len()
    }
    /// `S_j ∩ S_m`, in canonical order.
    pub fn intersection(&self, j: usize, m: usize) -> Vec<usize> {
        let (a, b) = (&self.sets[j], &self.sets[m]);
        let (mut i, mut k) = (0, 0);
        let mut out = Vec::new();
        // both lists follow the canonical order; merge by rank
        let rank = |s: usize| self.ranks[s];
        while i < a.len() && k < b.len() {
            match rank(a[i]).cmp(&rank(b[k])) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    k += 1;
                }
            }
        }
        out
    }
}

pub fn presence_sets(ds: &SpaceTimeDataset) -> PresenceSets {
    let order = ds.canonical_order();
    let mut ranks = vec![0; ds.n_stations()];
    for (r, &s) in order.iter().enumerate() {
        ranks[s] = r;
    }
    let sets = (0..ds.n_times())
        .map(|j| order.iter().copied().filter(|&i| ds.value(i, j).is_some()).collect())
        .collect();
    PresenceSets { sets, ranks }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TimeKind {
    Integer,
    Real,
    Date,
}

fn parse_time(s: &str) -> Option<(TimeKind, f64)> {
    if let Ok(i) = s.parse::<i64>() {
        return Some((TimeKind::Integer, i as f64));
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some((TimeKind::Real, v));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| (TimeKind::Date, d.num_days_from_ce() as f64))
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64, DataError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::Parse {
            line,
            msg: format!("invalid {what} `{field}`"),
        })
}

/// Load a CSV with default metadata (unit time step, no rescale).
pub fn load_csv(path: &Path, projection: &ProjectionSpec) -> Result<SpaceTimeDataset, DataError> {
    load_csv_with(path, &Metadata::default().with_projection(projection))
}

/// Load a CSV, applying projection, time step and rescale from `meta`.
pub fn load_csv_with(path: &Path, meta: &Metadata) -> Result<SpaceTimeDataset, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(&text, meta)
}

/// Parse CSV text; see [`load_csv_with`].
pub fn parse_csv(text: &str, meta: &Metadata) -> Result<SpaceTimeDataset, DataError> {
    let projection = meta.projection();
    projection.validate()?;
    if !(meta.rescale.is_finite() && meta.rescale != 0.0) {
        return Err(DataError::Invalid(format!("rescale must be finite and nonzero, got {}", meta.rescale)));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| DataError::Parse { line: 1, msg: e.to_string() })?.clone();
    let fields: Vec<&str> = header.iter().collect();
    let geographic = if fields == PLANAR_HEADER {
        false
    } else if fields == GEOGRAPHIC_HEADER {
        true
    } else {
        return Err(DataError::Header(fields.join(",")));
    };
    let expected_mode = if geographic {
        ProjectionMode::LocalEquirectangular
    } else {
        ProjectionMode::None
    };
    if projection.mode != expected_mode {
        return Err(DataError::Invalid(format!(
            "header `{}` does not match projection mode {:?}",
            fields.join(","),
            projection.mode
        )));
    }

    struct Row {
        line: u64,
        station: usize,
        t: f64,
        label: String,
        value: Option<f64>,
    }
    let mut ids: Vec<String> = Vec::new();
    let mut raw_coords: Vec<(f64, f64)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut kind: Option<TimeKind> = None;

    for rec in reader.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(DataError::Parse { line, msg: "empty station_id".into() });
        }
        let a = parse_f64(&rec[1], fields[1], line)?;
        let b = parse_f64(&rec[2], fields[2], line)?;
        if geographic {
            check_latitude(b)?;
        }
        let (k, t) = parse_time(&rec[3]).ok_or_else(|| DataError::Parse {
            line,
            msg: format!("invalid time stamp `{}`", &rec[3]),
        })?;
        match kind {
            None => kind = Some(k),
            Some(prev) if prev == k || (prev != TimeKind::Date && k != TimeKind::Date) => {
                if k == TimeKind::Real {
                    kind = Some(TimeKind::Real);
                }
            }
            Some(_) => {
                return Err(DataError::Parse {
                    line,
                    msg: "time stamps mix dates and numbers".into(),
                })
            }
        }
        let value = if rec[4].is_empty() {
            None
        } else {
            Some(parse_f64(&rec[4], "value", line)?)
        };
        let station = match index.get(&id) {
            Some(&s) => {
                if raw_coords[s] != (a, b) {
                    return Err(DataError::InconsistentStation { line, station: id });
                }
                s
            }
            None => {
                index.insert(id.clone(), ids.len());
                ids.push(id);
                raw_coords.push((a, b));
                ids.len() - 1
            }
        };
        rows.push(Row {
            line,
            station,
            t,
            label: rec[3].to_string(),
            value,
        });
    }
    if rows.is_empty() {
        return Err(DataError::Invalid("no data rows".into()));
    }

    // regular time grid
    let mut stamps: Vec<f64> = rows.iter().map(|r| r.t).collect();
    stamps.sort_by(f64::total_cmp);
    stamps.dedup();
    let step = if stamps.len() > 1 { stamps[1] - stamps[0] } else { 1.0 };
    let t0 = stamps[0];
    for (j, &t) in stamps.iter().enumerate() {
        let expected = t0 + j as f64 * step;
        if (t - expected).abs() > 1e-9 * step {
            return Err(DataError::IrregularTimeGrid(format!(
                "expected step {step}, found stamp {t} at position {j}"
            )));
        }
    }
    let n_t = stamps.len();
    let time_index = |t: f64| ((t - t0) / step).round() as usize;
    let mut labels = vec![String::new(); n_t];
    let mut values: Vec<Option<f64>> = vec![None; ids.len() * n_t];
    let mut filled = vec![false; ids.len() * n_t];
    for r in &rows {
        let j = time_index(r.t);
        let cell = r.station * n_t + j;
        if filled[cell] {
            return Err(DataError::Duplicate {
                line: r.line,
                station: ids[r.station].clone(),
                t: r.label.clone(),
            });
        }
        filled[cell] = true;
        if labels[j].is_empty() {
            labels[j] = r.label.clone();
        }
        values[cell] = r.value.map(|v| v * meta.rescale);
    }

    let projection = if geographic && projection.reference_latitude.is_none() {
        let mean_lat = raw_coords.iter().map(|c| c.1).sum::<f64>() / raw_coords.len() as f64;
        ProjectionSpec {
            reference_latitude: Some(mean_lat),
            ..projection
        }
    } else {
        projection
    };
    let stations = ids
        .into_iter()
        .zip(raw_coords)
        .map(|(id, (a, b))| project_coordinates(a, b, &projection).map(|(x, y)| Station { id, x, y }))
        .collect::<Result<Vec<_>, _>>()?;
    SpaceTimeDataset::new(stations, labels, meta.delta_t, values)
}

/// Render a dataset in the planar layout with normalized coordinates, one
/// row per cell, empty `value` for gaps.
pub fn to_csv_string(ds: &SpaceTimeDataset) -> String {
    let mut out = String::new();
    out.push_str(&PLANAR_HEADER.join(","));
    out.push('\n');
    for (i, s) in ds.stations().iter().enumerate() {
        for (j, label) in ds.time_labels().iter().enumerate() {
            let v = ds.value(i, j).map(|v| format!("{v:?}")).unwrap_or_default();
            out.push_str(&format!("{},{:?},{:?},{},{}\n", csv_field(&s.id), s.x, s.y, label, v));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write a dataset with [`to_csv_string`] plus a sidecar that reloads it
/// unchanged (unit divisor and rescale, planar mode).
pub fn write_csv(path: &Path, ds: &SpaceTimeDataset) -> Result<(), DataError> {
    fs::write(path, to_csv_string(ds)).map_err(|e| io_err(path, e))?;
    let meta = Metadata {
        delta_t: ds.delta_t(),
        ..Metadata::default()
    };
    write_metadata(&sidecar_path(path), &meta)
}
