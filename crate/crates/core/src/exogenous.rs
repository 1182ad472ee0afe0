//! Agent-independent inputs: prices, arrival rates, car catalogs, user
//! scenario models and optional emission/grid-demand series.
//!
//! CSV schemas (header row required, extra columns ignored):
//!
//! | file          | columns                                                   |
//! |---------------|-----------------------------------------------------------|
//! | `prices.csv`  | `timestamp,buy_eur_per_kwh[,sell_grid_eur_per_kwh]`       |
//! | `arrivals.csv`| `step_of_day,lambda`                                      |
//! | `cars.csv`    | `name,capacity_kwh,r_max_ac_kw,r_max_dc_kw,tau,weight`    |
//! | `aux.csv`     | `timestamp,moer_kg_per_kwh,grid_demand_kwh`               |
//!
//! Timestamps are hourly, strictly consecutive and start at midnight. The user
//! scenario model is read from `users.json` when present.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Stream, StreamKey};
use crate::vehicle::{CarProfile, Preference, UserProfile};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {0}: gap in hourly timestamps")]
    GapAt(u64),
    #[error("line {0}: duplicate or decreasing timestamp")]
    DuplicateAt(u64),
    #[error("line {0}: series must start at midnight")]
    MisalignedStart(u64),
    #[error("series length {0} is not a whole number of days")]
    IncompleteDay(usize),
    #[error("line {0}: tau must lie in (0, 1)")]
    InvalidTau(u64),
    #[error("line {0}: capacity must be positive")]
    NonPositiveCapacity(u64),
    #[error("line {0}: negative weight or rate")]
    NegativeWeight(u64),
    #[error("catalog weights sum to zero")]
    DegenerateWeights,
    #[error("dataset is empty")]
    Empty,
    #[error("day {day} out of range ({days} days available)")]
    DayOutOfRange { day: usize, days: usize },
    #[error("step {step} out of range ({steps} steps per episode)")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("arrival rate {0} must be non-negative")]
    NegativeRate(f64),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io { path: path.to_path_buf(), msg: e.to_string() }
}

// ---------------------------------------------------------------------------
// Prices

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub start_date: NaiveDate,
    pub hourly_buy_eur_per_kwh: Vec<f64>,
    pub hourly_sell_grid_eur_per_kwh: Vec<f64>,
    pub region: String,
}

impl PriceSeries {
    pub fn new(
        start_date: NaiveDate,
        buy: Vec<f64>,
        sell_grid: Vec<f64>,
        region: impl Into<String>,
    ) -> Result<Self, DataError> {
        if buy.is_empty() {
            return Err(DataError::Empty);
        }
        if buy.len() != sell_grid.len() {
            return Err(DataError::Invalid("buy and sell series differ in length".into()));
        }
        if !buy.len().is_multiple_of(24) {
            return Err(DataError::IncompleteDay(buy.len()));
        }
        if buy.iter().chain(&sell_grid).any(|p| !p.is_finite()) {
            return Err(DataError::Invalid("prices must be finite".into()));
        }
        Ok(Self {
            start_date,
            hourly_buy_eur_per_kwh: buy,
            hourly_sell_grid_eur_per_kwh: sell_grid,
            region: region.into(),
        })
    }

    pub fn num_days(&self) -> usize {
        self.hourly_buy_eur_per_kwh.len() / 24
    }

    pub fn num_hours(&self) -> usize {
        self.hourly_buy_eur_per_kwh.len()
    }

    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(["timestamp", "buy_eur_per_kwh", "sell_grid_eur_per_kwh"]).map_err(|e| io_err(path, e))?;
        let start = self.start_date.and_hms_opt(0, 0, 0).expect("midnight");
        for (h, (b, s)) in self.hourly_buy_eur_per_kwh.iter().zip(&self.hourly_sell_grid_eur_per_kwh).enumerate() {
            let ts = start + Duration::hours(h as i64);
            w.write_record([ts.format("%Y-%m-%dT%H:%M:%S").to_string(), b.to_string(), s.to_string()])
                .map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

fn parse_timestamp(s: &str, line: u64) -> Result<NaiveDateTime, DataError> {
    let s = s.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    Err(DataError::Parse { line, msg: format!("unparseable timestamp `{s}`") })
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64, DataError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::Parse { line, msg: format!("bad {what} `{s}`") })
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, DataError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
        let headers = r.headers().map_err(|e| io_err(path, e))?.iter().map(|h| h.to_string()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec =
                rec.map_err(|e| DataError::Parse { line: e.position().map_or(0, |p| p.line()), msg: e.to_string() })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize, DataError> {
        self.opt_col(name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    fn opt_col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn field(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<&str, DataError> {
    rec.get(idx).ok_or(DataError::Parse { line, msg: "missing field".into() })
}

/// Reads `(line, timestamp)` pairs and checks they form consecutive hours from midnight.
fn check_hourly(stamps: &[(u64, NaiveDateTime)]) -> Result<(), DataError> {
    let Some(&(line0, first)) = stamps.first() else {
        return Err(DataError::Empty);
    };
    if first.hour() != 0 || first.minute() != 0 || first.second() != 0 {
        return Err(DataError::MisalignedStart(line0));
    }
    for pair in stamps.windows(2) {
        let (_, prev) = pair[0];
        let (line, cur) = pair[1];
        let delta = cur - prev;
        if delta <= Duration::zero() {
            return Err(DataError::DuplicateAt(line));
        }
        if delta != Duration::hours(1) {
            return Err(DataError::GapAt(line));
        }
    }
    if !stamps.len().is_multiple_of(24) {
        return Err(DataError::IncompleteDay(stamps.len()));
    }
    Ok(())
}

/// Loads an hourly price file; a missing sell column defaults to the buy price.
pub fn load_prices(path: &Path) -> Result<PriceSeries, DataError> {
    let t = Table::read(path)?;
    let ts = t.col("timestamp")?;
    let buy_c = t.col("buy_eur_per_kwh")?;
    let sell_c = t.opt_col("sell_grid_eur_per_kwh");
    let mut stamps = Vec::with_capacity(t.rows.len());
    let mut buy = Vec::with_capacity(t.rows.len());
    let mut sell = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        stamps.push((line, parse_timestamp(field(rec, ts, line)?, line)?));
        let b = parse_f64(field(rec, buy_c, line)?, line, "buy price")?;
        buy.push(b);
        sell.push(match sell_c {
            Some(c) => parse_f64(field(rec, c, line)?, line, "sell price")?,
            None => b,
        });
    }
    check_hourly(&stamps)?;
    let region = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    PriceSeries::new(stamps[0].1.date(), buy, sell, region)
}

// ---------------------------------------------------------------------------
// Auxiliary series

/// Hourly marginal emission rate and grid demand, aligned with the price series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxSeries {
    pub start_date: NaiveDate,
    pub moer_kg_per_kwh: Vec<f64>,
    /// Demand signal in kWh per timestep, held constant within the hour.
    pub grid_demand_kwh: Vec<f64>,
}

pub fn load_aux(path: &Path) -> Result<AuxSeries, DataError> {
    let t = Table::read(path)?;
    let ts = t.col("timestamp")?;
    let m_c = t.col("moer_kg_per_kwh")?;
    let d_c = t.col("grid_demand_kwh")?;
    let mut stamps = Vec::new();
    let (mut moer, mut demand) = (Vec::new(), Vec::new());
    for (line, rec) in &t.rows {
        let line = *line;
        stamps.push((line, parse_timestamp(field(rec, ts, line)?, line)?));
        moer.push(parse_f64(field(rec, m_c, line)?, line, "moer")?);
        demand.push(parse_f64(field(rec, d_c, line)?, line, "grid demand")?);
    }
    check_hourly(&stamps)?;
    Ok(AuxSeries { start_date: stamps[0].1.date(), moer_kg_per_kwh: moer, grid_demand_kwh: demand })
}

// ---------------------------------------------------------------------------
// Arrivals

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProfile {
    /// Mean arrivals per step over one episode.
    pub rates_per_step: Vec<f64>,
    pub weekday_scale: f64,
    pub weekend_scale: f64,
    pub scenario: String,
}

impl ArrivalProfile {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.rates_per_step.is_empty() {
            return Err(DataError::Empty);
        }
        if let Some(&bad) = self.rates_per_step.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(DataError::NegativeRate(bad));
        }
        if !(self.weekday_scale >= 0.0 && self.weekend_scale >= 0.0) {
            return Err(DataError::Invalid("arrival scale factors must be non-negative".into()));
        }
        Ok(())
    }

    pub fn daily_total(&self) -> f64 {
        self.rates_per_step.iter().sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(["step_of_day", "lambda"]).map_err(|e| io_err(path, e))?;
        for (s, l) in self.rates_per_step.iter().enumerate() {
            w.write_record([s.to_string(), l.to_string()]).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// Loads per-step arrival rates. Rows may come in any order but must cover
/// `0..n` exactly once.
pub fn load_arrivals(path: &Path, weekday_scale: f64, weekend_scale: f64) -> Result<ArrivalProfile, DataError> {
    let t = Table::read(path)?;
    let s_c = t.col("step_of_day")?;
    let l_c = t.col("lambda")?;
    let mut rates = vec![f64::NAN; t.rows.len()];
    for (line, rec) in &t.rows {
        let line = *line;
        let step: usize =
            field(rec, s_c, line)?.parse().map_err(|_| DataError::Parse { line, msg: "bad step_of_day".into() })?;
        let lambda = parse_f64(field(rec, l_c, line)?, line, "lambda")?;
        if lambda < 0.0 {
            return Err(DataError::NegativeWeight(line));
        }
        match rates.get_mut(step) {
            Some(slot) if slot.is_nan() => *slot = lambda,
            Some(_) => return Err(DataError::DuplicateAt(line)),
            None => return Err(DataError::GapAt(line)),
        }
    }
    let profile = ArrivalProfile {
        rates_per_step: rates,
        weekday_scale,
        weekend_scale,
        scenario: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    profile.validate()?;
    Ok(profile)
}

/// Draws a Poisson-distributed arrival count.
pub fn sample_arrival_count(rng: &mut Stream, lambda: f64) -> Result<u32, DataError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(DataError::NegativeRate(lambda));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(lambda).map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(poisson.sample(rng) as u32)
}

// ---------------------------------------------------------------------------
// Cars

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub profile: CarProfile,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarCatalog {
    entries: Vec<CatalogEntry>,
    cumulative: Vec<f64>,
    pub region: String,
}

impl CarCatalog {
    pub fn new(entries: Vec<CatalogEntry>, region: impl Into<String>) -> Result<Self, DataError> {
        if entries.is_empty() {
            return Err(DataError::Empty);
        }
        for (i, e) in entries.iter().enumerate() {
            let line = i as u64 + 2;
            if !(e.profile.capacity_kwh > 0.0) {
                return Err(DataError::NonPositiveCapacity(line));
            }
            if !(e.profile.tau > 0.0 && e.profile.tau < 1.0) {
                return Err(DataError::InvalidTau(line));
            }
            if !(e.weight >= 0.0) || !(e.profile.r_max_ac_kw >= 0.0) || !(e.profile.r_max_dc_kw >= 0.0) {
                return Err(DataError::NegativeWeight(line));
            }
        }
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(DataError::DegenerateWeights);
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = entries
            .iter()
            .map(|e| {
                acc += e.weight / total;
                acc
            })
            .collect();
        // the last positive-weight entry absorbs rounding
        let last = entries.iter().rposition(|e| e.weight > 0.0).expect("positive total");
        for c in &mut cumulative[last..] {
            *c = 1.0;
        }
        Ok(Self { entries, cumulative, region: region.into() })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    /// Normalized selection probability of every entry.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(["name", "capacity_kwh", "r_max_ac_kw", "r_max_dc_kw", "tau", "weight"])
            .map_err(|e| io_err(path, e))?;
        for e in &self.entries {
            let p = &e.profile;
            w.write_record([
                e.name.clone(),
                p.capacity_kwh.to_string(),
                p.r_max_ac_kw.to_string(),
                p.r_max_dc_kw.to_string(),
                p.tau.to_string(),
                e.weight.to_string(),
            ])
            .map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

pub fn load_car_catalog(path: &Path) -> Result<CarCatalog, DataError> {
    let t = Table::read(path)?;
    let cols = ["name", "capacity_kwh", "r_max_ac_kw", "r_max_dc_kw", "tau", "weight"]
        .map(|c| t.col(c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut entries = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let num = |i: usize, what: &str| parse_f64(field(rec, cols[i], line)?, line, what);
        let profile = CarProfile {
            capacity_kwh: num(1, "capacity")?,
            r_max_ac_kw: num(2, "AC rate")?,
            r_max_dc_kw: num(3, "DC rate")?,
            tau: num(4, "tau")?,
        };
        let weight = num(5, "weight")?;
        if !(profile.capacity_kwh > 0.0) {
            return Err(DataError::NonPositiveCapacity(line));
        }
        if !(profile.tau > 0.0 && profile.tau < 1.0) {
            return Err(DataError::InvalidTau(line));
        }
        if weight < 0.0 || profile.r_max_ac_kw < 0.0 || profile.r_max_dc_kw < 0.0 {
            return Err(DataError::NegativeWeight(line));
        }
        entries.push(CatalogEntry { name: field(rec, cols[0], line)?.to_string(), profile, weight });
    }
    let region = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    CarCatalog::new(entries, region)
}

/// Weighted categorical draw from the catalog; returns the entry index.
pub fn sample_car_index(rng: &mut Stream, catalog: &CarCatalog) -> usize {
    let u: f64 = rng.random();
    catalog.cumulative.partition_point(|&c| c <= u).min(catalog.entries.len() - 1)
}

pub fn sample_car(rng: &mut Stream, catalog: &CarCatalog) -> CarProfile {
    catalog.entries[sample_car_index(rng, catalog)].profile
}

// ---------------------------------------------------------------------------
// Users

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserScenario {
    Highway,
    Residential,
    Work,
    Shopping,
}

impl UserScenario {
    pub const ALL: [UserScenario; 4] = [Self::Highway, Self::Residential, Self::Work, Self::Shopping];

    pub fn name(self) -> &'static str {
        match self {
            Self::Highway => "highway",
            Self::Residential => "residential",
            Self::Work => "work",
            Self::Shopping => "shopping",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScenarioModel {
    pub stay_steps_range: (u32, u32),
    pub requested_fraction_range: (f64, f64),
    pub soc_arrival_range: (f64, f64),
    pub p_charge_sensitive: f64,
    pub scenario: UserScenario,
}

impl UserScenarioModel {
    /// Builds a model from stay bounds in minutes; partial steps round up.
    pub fn from_minutes(
        scenario: UserScenario,
        stay_minutes: (f64, f64),
        dt_min: f64,
        requested_fraction_range: (f64, f64),
        soc_arrival_range: (f64, f64),
        p_charge_sensitive: f64,
    ) -> Self {
        let steps = |m: f64| ((m / dt_min).ceil() as u32).max(1);
        Self {
            stay_steps_range: (steps(stay_minutes.0), steps(stay_minutes.1)),
            requested_fraction_range,
            soc_arrival_range,
            p_charge_sensitive,
            scenario,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (s0, s1) = self.stay_steps_range;
        let ordered_unit = |(a, b): (f64, f64)| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a <= b;
        if s0 < 1 || s0 > s1 {
            return Err(DataError::Invalid("stay range must satisfy 1 <= min <= max".into()));
        }
        if !ordered_unit(self.requested_fraction_range) || !ordered_unit(self.soc_arrival_range) {
            return Err(DataError::Invalid("fraction and SoC ranges must be ordered within [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.p_charge_sensitive) {
            return Err(DataError::Invalid("p_charge_sensitive must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[inline]
fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + (hi - lo) * u
}

/// Draws the demand side of an arriving car.
///
/// Draw order is fixed: stay, arrival SoC, requested fraction, preference.
pub fn sample_user(rng: &mut Stream, model: &UserScenarioModel, car: &CarProfile) -> UserProfile {
    let (s0, s1) = model.stay_steps_range;
    let stay_steps = rng.random_range(s0..=s1);
    let soc_arrival = lerp(model.soc_arrival_range, rng.random::<f64>());
    let fraction = lerp(model.requested_fraction_range, rng.random::<f64>());
    let charge_sensitive = rng.random::<f64>() < model.p_charge_sensitive;
    UserProfile {
        stay_steps,
        energy_requested_kwh: fraction * car.capacity_kwh * (1.0 - soc_arrival),
        soc_arrival,
        preference: if charge_sensitive { Preference::ChargeSensitive } else { Preference::TimeSensitive },
    }
}

// ---------------------------------------------------------------------------
// Frames

/// Exogenous signals for one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExogenousFrame {
    pub p_buy: f64,
    pub p_sell_grid: f64,
    pub lambda_arrivals: f64,
    pub moer_kg_per_kwh: Option<f64>,
    pub grid_demand_kwh: Option<f64>,
    pub day_index: usize,
    pub is_weekday: bool,
    pub step_of_day: usize,
}

/// Everything the environment reads from the outside world. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub prices: PriceSeries,
    pub arrivals: ArrivalProfile,
    pub catalog: CarCatalog,
    pub users: UserScenarioModel,
    pub aux: Option<AuxSeries>,
}

impl Datasets {
    pub fn new(
        prices: PriceSeries,
        arrivals: ArrivalProfile,
        catalog: CarCatalog,
        users: UserScenarioModel,
        aux: Option<AuxSeries>,
    ) -> Result<Self, DataError> {
        if prices.num_days() == 0 {
            return Err(DataError::Empty);
        }
        arrivals.validate()?;
        users.validate()?;
        if let Some(a) = &aux {
            if a.start_date != prices.start_date
                || a.moer_kg_per_kwh.len() != prices.num_hours()
                || a.grid_demand_kwh.len() != prices.num_hours()
            {
                return Err(DataError::Invalid("auxiliary series must cover the same hours as the prices".into()));
            }
        }
        Ok(Self { prices, arrivals, catalog, users, aux })
    }

    pub fn num_days(&self) -> usize {
        self.prices.num_days()
    }

    /// Absolute hour index of `(day, step)`, clamped to the end of the price data.
    #[inline]
    pub fn hour_index(&self, day: usize, step: usize, dt_min: f64) -> usize {
        let hour = (step as f64 * dt_min / 60.0).floor() as usize;
        (day * 24 + hour).min(self.prices.num_hours() - 1)
    }

    pub fn is_weekday(&self, day: usize) -> bool {
        !matches!(self.prices.date_of(day).weekday(), Weekday::Sat | Weekday::Sun)
    }

    /// Exogenous frame for `step` of an episode on `day`. Prices are held
    /// constant within each hour; the arrival rate is scaled by the
    /// weekday/weekend factor.
    pub fn frame_at(&self, day: usize, step: usize, dt_min: f64) -> Result<ExogenousFrame, DataError> {
        let days = self.num_days();
        if day >= days {
            return Err(DataError::DayOutOfRange { day, days });
        }
        let steps = self.arrivals.rates_per_step.len();
        if step >= steps {
            return Err(DataError::StepOutOfRange { step, steps });
        }
        Ok(self.frame_unchecked(day, step, dt_min))
    }

    #[inline]
    pub(crate) fn frame_unchecked(&self, day: usize, step: usize, dt_min: f64) -> ExogenousFrame {
        let h = self.hour_index(day, step, dt_min);
        let is_weekday = self.is_weekday(day);
        let scale = if is_weekday { self.arrivals.weekday_scale } else { self.arrivals.weekend_scale };
        ExogenousFrame {
            p_buy: self.prices.hourly_buy_eur_per_kwh[h],
            p_sell_grid: self.prices.hourly_sell_grid_eur_per_kwh[h],
            lambda_arrivals: self.arrivals.rates_per_step[step] * scale,
            moer_kg_per_kwh: self.aux.as_ref().map(|a| a.moer_kg_per_kwh[h]),
            grid_demand_kwh: self.aux.as_ref().map(|a| a.grid_demand_kwh[h]),
            day_index: day,
            is_weekday,
            step_of_day: step,
        }
    }

    /// Loads a dataset directory. Files that are absent fall back to the
    /// synthetic defaults of `fallback`.
    pub fn load_dir(
        dir: &Path,
        fallback: &SyntheticProfile,
        seed: u64,
        dt_min: f64,
        episode_steps: usize,
    ) -> Result<Self, DataError> {
        if !dir.is_dir() {
            return Err(io_err(dir, "not a directory"));
        }
        let synth = generate_synthetic_defaults(fallback, seed, dt_min, episode_steps);
        let prices = match dir.join("prices.csv") {
            p if p.exists() => load_prices(&p)?,
            _ => synth.prices,
        };
        let arrivals = match dir.join("arrivals.csv") {
            p if p.exists() => load_arrivals(&p, synth.arrivals.weekday_scale, synth.arrivals.weekend_scale)?,
            _ => synth.arrivals,
        };
        let catalog = match dir.join("cars.csv") {
            p if p.exists() => load_car_catalog(&p)?,
            _ => synth.catalog,
        };
        let users = match dir.join("users.json") {
            p if p.exists() => {
                let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                serde_json::from_str(&text).map_err(|e| io_err(&p, e))?
            }
            _ => synth.users,
        };
        let aux = match dir.join("aux.csv") {
            p if p.exists() => Some(load_aux(&p)?),
            _ => None,
        };
        Self::new(prices, arrivals, catalog, users, aux)
    }

    /// Writes the dataset in the directory layout read by [`Self::load_dir`].
    pub fn write_dir(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        self.prices.write_csv(&dir.join("prices.csv"))?;
        self.arrivals.write_csv(&dir.join("arrivals.csv"))?;
        self.catalog.write_csv(&dir.join("cars.csv"))?;
        let users = dir.join("users.json");
        let text = serde_json::to_string_pretty(&self.users).expect("users serialize");
        fs::write(&users, text).map_err(|e| io_err(&users, e))?;
        if let Some(aux) = &self.aux {
            let path = dir.join("aux.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
            w.write_record(["timestamp", "moer_kg_per_kwh", "grid_demand_kwh"]).map_err(|e| io_err(&path, e))?;
            let start = aux.start_date.and_hms_opt(0, 0, 0).expect("midnight");
            for (h, (m, d)) in aux.moer_kg_per_kwh.iter().zip(&aux.grid_demand_kwh).enumerate() {
                let ts = start + Duration::hours(h as i64);
                w.write_record([ts.format("%Y-%m-%dT%H:%M:%S").to_string(), m.to_string(), d.to_string()])
                    .map_err(|e| io_err(&path, e))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Synthetic defaults
//
// These stand in for bundled real-world datasets. The numbers are
// illustrative, chosen to give plausible shapes, and carry a `synthetic-`
// label wherever a region or scenario name is stored.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traffic {
    Low,
    Medium,
    High,
}

impl Traffic {
    /// Multiplier on the scenario's medium-traffic daily arrivals.
    pub fn factor(self) -> f64 {
        match self {
            Self::Low => 0.5,
            Self::Medium => 1.0,
            Self::High => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarRegion {
    Europe,
    Us,
    World,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceRegion {
    Nl,
    Fr,
    De,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticProfile {
    pub scenario: UserScenario,
    pub traffic: Traffic,
    pub cars: CarRegion,
    pub prices: PriceRegion,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            scenario: UserScenario::Shopping,
            traffic: Traffic::Medium,
            cars: CarRegion::Europe,
            prices: PriceRegion::Nl,
        }
    }
}

struct ArrivalShape {
    base: f64,
    /// (center hour, width in hours, amplitude)
    bumps: &'static [(f64, f64, f64)],
    medium_daily_cars: f64,
    weekday_scale: f64,
    weekend_scale: f64,
}

fn arrival_shape(s: UserScenario) -> ArrivalShape {
    match s {
        UserScenario::Highway => ArrivalShape {
            base: 1.0,
            bumps: &[(13.0, 4.0, 0.5)],
            medium_daily_cars: 120.0,
            weekday_scale: 1.0,
            weekend_scale: 1.15,
        },
        UserScenario::Residential => ArrivalShape {
            base: 0.1,
            bumps: &[(18.5, 2.0, 2.0), (8.0, 1.5, 0.4)],
            medium_daily_cars: 40.0,
            weekday_scale: 1.0,
            weekend_scale: 1.1,
        },
        UserScenario::Work => ArrivalShape {
            base: 0.05,
            bumps: &[(8.5, 1.0, 3.0), (13.0, 1.0, 0.4)],
            medium_daily_cars: 50.0,
            weekday_scale: 1.0,
            weekend_scale: 0.3,
        },
        UserScenario::Shopping => ArrivalShape {
            base: 0.05,
            bumps: &[(13.0, 2.5, 2.0), (17.5, 1.5, 1.2)],
            medium_daily_cars: 100.0,
            weekday_scale: 1.0,
            weekend_scale: 1.2,
        },
    }
}

fn shape_at(shape: &ArrivalShape, hour: f64) -> f64 {
    shape.base
        + shape
            .bumps
            .iter()
            .map(|&(mu, sigma, amp)| {
                // wrap around midnight
                let d = (hour - mu + 12.0).rem_euclid(24.0) - 12.0;
                amp * (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .sum::<f64>()
}

/// Per-step mean arrivals for a scenario; the rates of one full day sum to the
/// scenario's daily arrivals times the traffic factor.
pub fn synthetic_arrivals(
    scenario: UserScenario,
    traffic: Traffic,
    dt_min: f64,
    episode_steps: usize,
) -> ArrivalProfile {
    let shape = arrival_shape(scenario);
    let steps_per_day = (1440.0 / dt_min).round().max(1.0) as usize;
    let raw_at = |s: usize| shape_at(&shape, ((s as f64 + 0.5) * dt_min / 60.0).rem_euclid(24.0));
    let day_sum: f64 = (0..steps_per_day).map(raw_at).sum();
    let scale = shape.medium_daily_cars * traffic.factor() / day_sum;
    ArrivalProfile {
        rates_per_step: (0..episode_steps).map(|s| raw_at(s) * scale).collect(),
        weekday_scale: shape.weekday_scale,
        weekend_scale: shape.weekend_scale,
        scenario: format!("synthetic-{}", scenario.name()),
    }
}

pub fn synthetic_users(scenario: UserScenario, dt_min: f64) -> UserScenarioModel {
    let (stay, soc, frac, p) = match scenario {
        UserScenario::Highway => ((15.0, 45.0), (0.1, 0.4), (0.5, 0.9), 0.6),
        UserScenario::Residential => ((360.0, 720.0), (0.3, 0.7), (0.6, 0.95), 0.2),
        UserScenario::Work => ((360.0, 540.0), (0.3, 0.6), (0.5, 0.95), 0.2),
        UserScenario::Shopping => ((30.0, 150.0), (0.2, 0.6), (0.3, 0.9), 0.3),
    };
    UserScenarioModel::from_minutes(scenario, stay, dt_min, frac, soc, p)
}

pub fn synthetic_catalog(region: CarRegion) -> CarCatalog {
    let e = |name: &str, cap: f64, ac: f64, dc: f64, tau: f64, w: f64| CatalogEntry {
        name: name.to_string(),
        profile: CarProfile { capacity_kwh: cap, r_max_ac_kw: ac, r_max_dc_kw: dc, tau },
        weight: w,
    };
    let (entries, label) = match region {
        CarRegion::Europe => (
            vec![
                e("compact-40", 40.0, 11.0, 50.0, 0.8, 0.35),
                e("midsize-60", 60.0, 11.0, 100.0, 0.8, 0.35),
                e("large-80", 80.0, 11.0, 150.0, 0.75, 0.2),
                e("premium-100", 100.0, 22.0, 250.0, 0.7, 0.1),
            ],
            "synthetic-europe",
        ),
        CarRegion::Us => (
            vec![
                e("compact-60", 60.0, 11.5, 75.0, 0.8, 0.2),
                e("midsize-75", 75.0, 11.5, 150.0, 0.8, 0.4),
                e("pickup-130", 130.0, 19.2, 200.0, 0.7, 0.25),
                e("premium-100", 100.0, 19.2, 250.0, 0.7, 0.15),
            ],
            "synthetic-us",
        ),
        CarRegion::World => (
            vec![
                e("city-30", 30.0, 7.0, 40.0, 0.85, 0.3),
                e("compact-45", 45.0, 11.0, 60.0, 0.8, 0.3),
                e("midsize-70", 70.0, 11.0, 120.0, 0.8, 0.25),
                e("premium-100", 100.0, 22.0, 250.0, 0.7, 0.15),
            ],
            "synthetic-world",
        ),
    };
    CarCatalog::new(entries, label).expect("built-in catalog is valid")
}

/// One year of hourly prices: a seasonal level, two daily harmonics and noise.
pub fn synthetic_prices(region: PriceRegion, seed: u64) -> PriceSeries {
    let (base, daily_amp, seasonal_amp, label) = match region {
        PriceRegion::Nl => (0.12, 0.35, 0.20, "synthetic-nl"),
        PriceRegion::Fr => (0.09, 0.25, 0.30, "synthetic-fr"),
        PriceRegion::De => (0.11, 0.40, 0.20, "synthetic-de"),
    };
    let start = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");
    let days = 365;
    let mut rng = StreamKey::new(seed).child(0x5052_4943).stream();
    let hourly_noise = Normal::new(0.0, 0.06 * base).expect("valid sigma");
    let daily_noise = Normal::new(0.0, 0.15 * base).expect("valid sigma");
    let mut buy = Vec::with_capacity(days * 24);
    for d in 0..days {
        let level = base * (1.0 + seasonal_amp * (2.0 * PI * d as f64 / 365.0).cos()) + daily_noise.sample(&mut rng);
        for h in 0..24 {
            let x = 2.0 * PI * h as f64 / 24.0;
            // trough around 04:00, evening peak around 19:00, midday dip
            let shape = -0.6 * (x + PI / 4.0).cos() - 0.4 * (2.0 * x - PI / 6.0).cos();
            buy.push(level * (1.0 + daily_amp * shape) + hourly_noise.sample(&mut rng));
        }
    }
    let sell = buy.clone();
    PriceSeries::new(start, buy, sell, label).expect("synthetic prices are valid")
}

/// Reproducible synthetic dataset bundle for a profile selection.
pub fn generate_synthetic_defaults(
    profile: &SyntheticProfile,
    seed: u64,
    dt_min: f64,
    episode_steps: usize,
) -> Datasets {
    Datasets::new(
        synthetic_prices(profile.prices, seed),
        synthetic_arrivals(profile.scenario, profile.traffic, dt_min, episode_steps),
        synthetic_catalog(profile.cars),
        synthetic_users(profile.scenario, dt_min),
        None,
    )
    .expect("synthetic datasets are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn price_body(hours: usize, skip: Option<usize>, with_sell: bool) -> String {
        let mut s = String::from(if with_sell {
            "timestamp,buy_eur_per_kwh,sell_grid_eur_per_kwh\n"
        } else {
            "timestamp,buy_eur_per_kwh\n"
        });
        let start = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        for h in 0..hours {
            if Some(h) == skip {
                continue;
            }
            let ts = (start + Duration::hours(h as i64)).format("%Y-%m-%d %H:%M:%S");
            if with_sell {
                s.push_str(&format!("{ts},{},{}\n", 0.1 + h as f64 * 1e-4, 0.05));
            } else {
                s.push_str(&format!("{ts},{}\n", 0.1 + h as f64 * 1e-4));
            }
        }
        s
    }

    #[test]
    fn full_year_of_prices() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "nl.csv", &price_body(8760, None, true));
        let s = load_prices(&p).unwrap();
        assert_eq!(s.num_days(), 365);
        assert_eq!(s.region, "nl");
        assert_eq!(s.hourly_sell_grid_eur_per_kwh[5], 0.05);
    }

    #[test]
    fn gap_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", &price_body(48, Some(13), false));
        // header is line 1, hour 12 on line 14, hour 14 on line 15
        assert!(matches!(load_prices(&p), Err(DataError::GapAt(15))));
        let dup = price_body(24, None, false).replace("01 01:00:00", "01 00:00:00");
        let p = write(dir.path(), "d.csv", &dup);
        assert!(matches!(load_prices(&p), Err(DataError::DuplicateAt(3))));
        let p = write(dir.path(), "m.csv", "timestamp,price\n2022-01-01 00:00,0.1\n");
        assert!(matches!(load_prices(&p), Err(DataError::MissingColumn(c)) if c == "buy_eur_per_kwh"));
        let p = write(dir.path(), "u.csv", "timestamp,buy_eur_per_kwh\n2022-01-01 00:00,abc\n");
        assert!(matches!(load_prices(&p), Err(DataError::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_sell_column_copies_buy() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", &price_body(24, None, false));
        let s = load_prices(&p).unwrap();
        assert_eq!(s.hourly_buy_eur_per_kwh, s.hourly_sell_grid_eur_per_kwh);
    }

    #[test]
    fn price_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = synthetic_prices(PriceRegion::De, 3);
        let p = dir.path().join("prices.csv");
        s.write_csv(&p).unwrap();
        let back = load_prices(&p).unwrap();
        assert_eq!(back.hourly_buy_eur_per_kwh, s.hourly_buy_eur_per_kwh);
        assert_eq!(back.hourly_sell_grid_eur_per_kwh, s.hourly_sell_grid_eur_per_kwh);
        assert_eq!(back.start_date, s.start_date);
    }

    #[test]
    fn car_catalog_loading() {
        let dir = tempfile::tempdir().unwrap();
        let head = "name,capacity_kwh,r_max_ac_kw,r_max_dc_kw,tau,weight\n";
        let p = write(dir.path(), "ok.csv", &format!("{head}a,40,11,50,0.8,1\nb,60,11,100,0.8,2\nc,80,22,150,0.7,1\n"));
        let c = load_car_catalog(&p).unwrap();
        assert_eq!(c.entries().len(), 3);
        let probs = c.probabilities();
        assert!((probs[1] - 0.5).abs() < 1e-12);
        let p = write(dir.path(), "tau.csv", &format!("{head}a,40,11,50,0.8,1\nb,60,11,100,1.2,1\n"));
        assert!(matches!(load_car_catalog(&p), Err(DataError::InvalidTau(3))));
        let p = write(dir.path(), "zero.csv", &format!("{head}a,40,11,50,0.8,0\nb,60,11,100,0.5,0\n"));
        assert!(matches!(load_car_catalog(&p), Err(DataError::DegenerateWeights)));
        let p = write(dir.path(), "cap.csv", &format!("{head}a,0,11,50,0.8,1\n"));
        assert!(matches!(load_car_catalog(&p), Err(DataError::NonPositiveCapacity(2))));
        let p = write(dir.path(), "neg.csv", &format!("{head}a,10,11,50,0.8,-1\n"));
        assert!(matches!(load_car_catalog(&p), Err(DataError::NegativeWeight(2))));
    }

    #[test]
    fn arrivals_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "step_of_day,lambda\n1,0.5\n0,0.25\n2,0\n");
        let a = load_arrivals(&p, 1.0, 0.5).unwrap();
        assert_eq!(a.rates_per_step, vec![0.25, 0.5, 0.0]);
        let p = write(dir.path(), "b.csv", "step_of_day,lambda\n0,0.5\n2,0.25\n");
        assert!(matches!(load_arrivals(&p, 1.0, 1.0), Err(DataError::GapAt(_))));
        let p = write(dir.path(), "c.csv", "step_of_day,lambda\n0,-1\n");
        assert!(matches!(load_arrivals(&p, 1.0, 1.0), Err(DataError::NegativeWeight(2))));
    }

    #[test]
    fn poisson_edge_cases() {
        let mut rng = StreamKey::new(1).stream();
        for _ in 0..100 {
            assert_eq!(sample_arrival_count(&mut rng, 0.0).unwrap(), 0);
        }
        assert!(matches!(sample_arrival_count(&mut rng, -1.0), Err(DataError::NegativeRate(_))));
    }

    #[test]
    fn car_sampling_edge_cases() {
        let single = synthetic_catalog(CarRegion::Europe);
        let one = CarCatalog::new(vec![single.entries()[2].clone()], "x").unwrap();
        let mut rng = StreamKey::new(5).stream();
        for _ in 0..1000 {
            assert_eq!(sample_car(&mut rng, &one), single.entries()[2].profile);
        }
        let mut entries = single.entries()[..2].to_vec();
        entries[1].weight = 0.0;
        let first = CarCatalog::new(entries, "x").unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_car_index(&mut rng, &first), 0);
        }

        let mut weighted = single.entries()[..2].to_vec();
        weighted[0].weight = 1.0;
        weighted[1].weight = 3.0;
        let weighted = CarCatalog::new(weighted, "x").unwrap();
        let n = 1_000_000;
        let second = (0..n).filter(|_| sample_car_index(&mut rng, &weighted) == 1).count();
        assert!((second as f64 / n as f64 - 0.75).abs() <= 0.002, "{second}");
    }

    #[test]
    fn user_sampling_points() {
        let car = CarProfile { capacity_kwh: 60.0, r_max_ac_kw: 11.0, r_max_dc_kw: 100.0, tau: 0.8 };
        let model = UserScenarioModel {
            stay_steps_range: (7, 7),
            requested_fraction_range: (1.0, 1.0),
            soc_arrival_range: (0.9, 0.9),
            p_charge_sensitive: 1.0,
            scenario: UserScenario::Work,
        };
        let mut rng = StreamKey::new(9).stream();
        for _ in 0..100 {
            let u = sample_user(&mut rng, &model, &car);
            assert_eq!(u.stay_steps, 7);
            assert!((u.energy_requested_kwh - 6.0).abs() < 1e-12);
            assert_eq!(u.preference, Preference::ChargeSensitive);
        }
    }

    #[test]
    fn stays_round_up_to_whole_steps() {
        let m = UserScenarioModel::from_minutes(UserScenario::Highway, (12.0, 41.0), 5.0, (0.5, 0.5), (0.2, 0.2), 0.0);
        assert_eq!(m.stay_steps_range, (3, 9));
    }

    #[test]
    fn frames_hold_hourly_prices() {
        let d = generate_synthetic_defaults(&SyntheticProfile::default(), 0, 5.0, 288);
        let p0 = d.prices.hourly_buy_eur_per_kwh[3 * 24];
        for step in 0..12 {
            assert_eq!(d.frame_at(3, step, 5.0).unwrap().p_buy, p0);
        }
        assert_eq!(d.frame_at(3, 12, 5.0).unwrap().p_buy, d.prices.hourly_buy_eur_per_kwh[3 * 24 + 1]);
        assert!(matches!(d.frame_at(365, 0, 5.0), Err(DataError::DayOutOfRange { day: 365, days: 365 })));
        assert!(matches!(d.frame_at(0, 288, 5.0), Err(DataError::StepOutOfRange { .. })));
        // 2023-01-01 is a Sunday
        assert!(!d.frame_at(0, 0, 5.0).unwrap().is_weekday);
        assert!(d.frame_at(1, 0, 5.0).unwrap().is_weekday);
        let f = d.frame_at(0, 100, 5.0).unwrap();
        assert_eq!(f.lambda_arrivals, d.arrivals.rates_per_step[100] * d.arrivals.weekend_scale);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let p = SyntheticProfile::default();
        assert_eq!(generate_synthetic_defaults(&p, 0, 5.0, 288), generate_synthetic_defaults(&p, 0, 5.0, 288));
        assert_ne!(
            generate_synthetic_defaults(&p, 0, 5.0, 288).prices,
            generate_synthetic_defaults(&p, 1, 5.0, 288).prices
        );
    }

    #[test]
    fn highway_is_flatter_than_shopping() {
        let peak_ratio = |s| {
            let a = synthetic_arrivals(s, Traffic::Medium, 5.0, 288);
            let mean = a.daily_total() / 288.0;
            a.rates_per_step.iter().cloned().fold(0.0, f64::max) / mean
        };
        let (hw, sh) = (peak_ratio(UserScenario::Highway), peak_ratio(UserScenario::Shopping));
        assert!(hw < sh, "highway {hw} shopping {sh}");
        assert!(hw < 1.5);
    }

    #[test]
    fn traffic_scales_daily_total() {
        for s in UserScenario::ALL {
            let low = synthetic_arrivals(s, Traffic::Low, 5.0, 288).daily_total();
            let med = synthetic_arrivals(s, Traffic::Medium, 5.0, 288).daily_total();
            let high = synthetic_arrivals(s, Traffic::High, 5.0, 288).daily_total();
            assert!((high / low - 4.0).abs() < 1e-12);
            assert!((med - arrival_shape(s).medium_daily_cars).abs() < 1e-9);
        }
    }

    #[test]
    fn dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = SyntheticProfile { scenario: UserScenario::Work, traffic: Traffic::High, ..Default::default() };
        let d = generate_synthetic_defaults(&p, 4, 5.0, 288);
        d.write_dir(dir.path()).unwrap();
        let back = Datasets::load_dir(dir.path(), &SyntheticProfile::default(), 99, 5.0, 288).unwrap();
        assert_eq!(back.prices.hourly_buy_eur_per_kwh, d.prices.hourly_buy_eur_per_kwh);
        assert_eq!(back.arrivals.rates_per_step, d.arrivals.rates_per_step);
        assert_eq!(back.catalog.entries(), d.catalog.entries());
        assert_eq!(back.users, d.users);
    }
}
