//! Baseline policies, paired evaluation, benchmarking and stable export.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::batch::{throughput_probe, BatchEnv, BatchError, ThroughputReport};
use crate::env::{ActionVector, ChargingEnv, EnvError, EnvState, StepInfo};
use crate::rng::{split, Phase, Stream, StreamKey};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot write {path}: {msg}")]
    Write { path: String, msg: String },
    #[error("cannot read report: {0}")]
    Parse(String),
}

/// A stateless decision rule. Randomized policies draw from the per-episode
/// stream they are handed, so results are reproducible per seed.
pub trait Policy: Sync {
    fn name(&self) -> &'static str;
    fn act(&self, env: &ChargingEnv, state: &EnvState, rng: &mut Stream, out: &mut [u32]);
}

/// Every occupied port requests the largest increment; the battery is left alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxCharge;

impl Policy for MaxCharge {
    fn name(&self) -> &'static str {
        "max_charge"
    }

    fn act(&self, env: &ChargingEnv, state: &EnvState, _rng: &mut Stream, out: &mut [u32]) {
        let k = env.config().discretization_k;
        for (o, port) in out.iter_mut().zip(&state.ports) {
            *o = if port.occupied() { 2 * k } else { k };
        }
        out[state.ports.len()] = k;
    }
}

/// Uniform index per slot, battery included.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomActions;

impl Policy for RandomActions {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&self, env: &ChargingEnv, _state: &EnvState, rng: &mut Stream, out: &mut [u32]) {
        let max = 2 * env.config().discretization_k;
        for o in out.iter_mut() {
            *o = rng.random_range(0..=max);
        }
    }
}

/// Drives every current toward zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Idle;

/// Index whose delta brings `i_prev` closest to zero. Without discharge the
/// delta is rounded toward the negative side, since the environment floors
/// the resulting current at zero anyway.
pub fn idle_index(i_prev: f64, i_max: f64, k: u32, allow_discharge: bool) -> u32 {
    if i_max <= 0.0 || i_prev == 0.0 {
        return k;
    }
    let steps = i_prev * k as f64 / i_max;
    let m = if allow_discharge || steps < 0.0 { steps.round() } else { (steps - 1e-9).ceil() };
    (k as f64 - m).clamp(0.0, 2.0 * k as f64) as u32
}

impl Policy for Idle {
    fn name(&self) -> &'static str {
        "idle"
    }

    fn act(&self, env: &ChargingEnv, state: &EnvState, _rng: &mut Stream, out: &mut [u32]) {
        let cfg = env.config();
        let k = cfg.discretization_k;
        for (i, (o, port)) in out.iter_mut().zip(&state.ports).enumerate() {
            *o = idle_index(port.i_drawn_a, env.station().evse(i).i_max_charge_a, k, cfg.allow_discharge);
        }
        let n = state.ports.len();
        out[n] = match (env.station().battery(), &state.battery) {
            (Some(spec), Some(b)) => idle_index(b.i_battery_a, spec.i_max_a(), k, cfg.allow_discharge),
            _ => k,
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    MaxCharge,
    Random,
    Idle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::MaxCharge, PolicyKind::Random, PolicyKind::Idle];

    pub fn policy(self) -> &'static dyn Policy {
        match self {
            Self::MaxCharge => &MaxCharge,
            Self::Random => &RandomActions,
            Self::Idle => &Idle,
        }
    }

    pub fn name(self) -> &'static str {
        self.policy().name()
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "max_charge" => Ok(Self::MaxCharge),
            "random" => Ok(Self::Random),
            "idle" => Ok(Self::Idle),
            _ => Err(format!("unknown policy {s:?}; expected max-charge, random or idle")),
        }
    }
}

/// Seed of evaluation episode `episode`; identical across policies.
pub fn episode_seed(master_seed: u64, episode: u64) -> u64 {
    split(master_seed, episode)
}

fn policy_stream(seed: u64, episode: u64) -> Stream {
    StreamKey::new(seed).child(episode).phase(Phase::Policy).stream()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub day_index: usize,
    pub profit_eur: f64,
    pub reward: f64,
    /// Net energy delivered into cars.
    pub energy_sold_kwh: f64,
    pub missing_kwh: f64,
    pub overtime_steps: f64,
    pub departures: u64,
    pub arrivals: u64,
    pub declined: u64,
}

impl EpisodeRecord {
    fn from_state(episode: u64, state: &EnvState) -> Self {
        let m = &state.metrics;
        Self {
            episode,
            seed: state.seed,
            day_index: state.day_index,
            profit_eur: m.profit_eur,
            reward: m.reward,
            energy_sold_kwh: m.energy_to_cars_kwh,
            missing_kwh: m.missing_kwh,
            overtime_steps: m.overtime_steps,
            departures: m.departures,
            arrivals: m.arrivals,
            declined: m.declined,
        }
    }

    fn rounded(&self) -> Self {
        Self {
            profit_eur: round_sig9(self.profit_eur),
            reward: round_sig9(self.reward),
            energy_sold_kwh: round_sig9(self.energy_sold_kwh),
            missing_kwh: round_sig9(self.missing_kwh),
            overtime_steps: round_sig9(self.overtime_steps),
            ..self.clone()
        }
    }
}

/// Aggregate evaluation metrics. Episodes are one day long, so per-episode
/// profit is daily profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub episodes: usize,
    pub mean_daily_profit_eur: f64,
    /// Sample standard deviation; 0 for a single episode.
    pub std_daily_profit_eur: f64,
    pub mean_reward: f64,
    pub missing_kwh_per_departure: f64,
    pub overtime_steps_per_departure: f64,
    pub declined_per_episode: f64,
    /// Mean net energy delivered into cars per episode.
    pub energy_sold_kwh: f64,
    pub config_fingerprint: String,
    pub records: Vec<EpisodeRecord>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl MetricsReport {
    pub fn from_records(policy: &str, config_fingerprint: String, records: Vec<EpisodeRecord>) -> Self {
        let n = records.len();
        let mean_profit = mean(records.iter().map(|r| r.profit_eur));
        let std = if n > 1 {
            (records.iter().map(|r| (r.profit_eur - mean_profit).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let departures: u64 = records.iter().map(|r| r.departures).sum();
        let per_departure = |total: f64| if departures == 0 { 0.0 } else { total / departures as f64 };
        Self {
            policy: policy.to_string(),
            episodes: n,
            mean_daily_profit_eur: mean_profit,
            std_daily_profit_eur: std,
            mean_reward: mean(records.iter().map(|r| r.reward)),
            missing_kwh_per_departure: per_departure(records.iter().map(|r| r.missing_kwh).sum()),
            overtime_steps_per_departure: per_departure(records.iter().map(|r| r.overtime_steps).sum()),
            declined_per_episode: mean(records.iter().map(|r| r.declined as f64)),
            energy_sold_kwh: mean(records.iter().map(|r| r.energy_sold_kwh)),
            config_fingerprint,
            records,
        }
    }

    /// The report as it reads back from its JSON export.
    pub fn rounded(&self) -> Self {
        serde_json::from_value(rounded_value(serde_json::to_value(self).expect("report serializes")))
            .expect("rounded report deserializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }
}

/// Hash of everything that determines a run besides the policy and seed.
pub fn config_fingerprint(env: &ChargingEnv) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(env.config()).expect("config serializes"));
    h.update(env.station().to_json_string());
    let data = env.data();
    for series in
        [&data.prices.hourly_buy_eur_per_kwh, &data.prices.hourly_sell_grid_eur_per_kwh, &data.arrivals.rates_per_step]
    {
        for x in series {
            h.update(x.to_le_bytes());
        }
    }
    h.update(data.arrivals.weekday_scale.to_le_bytes());
    h.update(data.arrivals.weekend_scale.to_le_bytes());
    h.update(serde_json::to_vec(data.catalog.entries()).expect("catalog serializes"));
    h.update(serde_json::to_vec(&data.users).expect("users serialize"));
    h.update(serde_json::to_vec(&data.aux).expect("aux serializes"));
    h.update(data.prices.start_date.to_string());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `episodes` full episodes in batches of `batch`. Episode `e` uses seed
/// [`episode_seed`]`(seed, e)` for every policy, so comparisons are paired.
pub fn evaluate(
    env: &ChargingEnv,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
    batch: usize,
    workers: Option<usize>,
) -> Result<MetricsReport, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::InvalidArgument("episodes must be at least 1".into()));
    }
    if batch == 0 {
        return Err(HarnessError::InvalidArgument("batch must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(episodes);
    let a = env.action_len();
    let ids: Vec<u64> = (0..episodes as u64).collect();
    for chunk in ids.chunks(batch) {
        let seeds: Vec<u64> = chunk.iter().map(|&e| episode_seed(seed, e)).collect();
        let mut rngs: Vec<Stream> = seeds.iter().map(|&s| policy_stream(s, 0)).collect();
        let mut b = BatchEnv::with_seeds(env.clone(), seeds)?;
        b.set_auto_reset(false);
        b.set_workers(workers)?;
        let mut actions = vec![0u32; chunk.len() * a];
        let mut obs = vec![0.0; chunk.len() * b.obs_len()];
        let mut rewards = vec![0.0; chunk.len()];
        let mut dones = vec![false; chunk.len()];
        for _ in 0..env.config().episode_steps {
            for ((state, rng), row) in b.states().iter().zip(&mut rngs).zip(actions.chunks_mut(a)) {
                policy.act(env, state, rng, row);
            }
            b.step_into(&actions, &mut obs, &mut rewards, &mut dones)?;
        }
        records.extend(chunk.iter().zip(b.states()).map(|(&e, s)| EpisodeRecord::from_state(e, s)));
    }
    Ok(MetricsReport::from_records(policy.name(), config_fingerprint(env), records))
}

pub fn bench(
    env: &ChargingEnv,
    batch: usize,
    steps: u64,
    workers: Option<usize>,
    seed: u64,
) -> Result<ThroughputReport, HarnessError> {
    if steps == 0 {
        return Err(HarnessError::InvalidArgument("steps must be at least 1".into()));
    }
    if batch == 0 {
        return Err(HarnessError::InvalidArgument("batch must be at least 1".into()));
    }
    Ok(throughput_probe(env, batch, steps, workers, seed)?)
}

/// One simulated step, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub episode: u64,
    pub step: usize,
    pub day_index: usize,
    pub p_buy: f64,
    pub p_sell_grid: f64,
    pub lambda_arrivals: f64,
    pub sampled_arrivals: usize,
    pub declined: u32,
    pub departures: usize,
    pub occupied: usize,
    pub sum_requested_a: f64,
    pub sum_applied_a: f64,
    pub battery_current_a: f64,
    pub battery_soc: f64,
    pub e_net_kwh: f64,
    pub e_grid_in_kwh: f64,
    pub e_to_grid_kwh: f64,
    pub e_battery_kwh: f64,
    pub e_grid_net_kwh: f64,
    pub missing_kwh: f64,
    pub constraint_excess_a: f64,
    pub profit_eur: f64,
    pub reward: f64,
}

impl TrajectoryRow {
    pub fn new(info: &StepInfo, state: &EnvState) -> Self {
        let f = &info.flows;
        Self {
            episode: info.episode,
            step: info.step,
            day_index: info.day_index,
            p_buy: info.frame.p_buy,
            p_sell_grid: info.frame.p_sell_grid,
            lambda_arrivals: info.frame.lambda_arrivals,
            sampled_arrivals: info.arrivals.len(),
            declined: info.declined,
            departures: info.departures.len(),
            occupied: state.num_occupied(),
            sum_requested_a: info.requested_currents_a.iter().sum(),
            sum_applied_a: info.applied_currents_a.iter().sum(),
            battery_current_a: info.battery_current_a,
            battery_soc: state.battery.map_or(0.0, |b| b.soc),
            e_net_kwh: f.e_net_kwh,
            e_grid_in_kwh: f.e_grid_in_kwh,
            e_to_grid_kwh: f.e_to_grid_kwh,
            e_battery_kwh: f.e_battery_kwh,
            e_grid_net_kwh: f.e_grid_net_kwh,
            missing_kwh: info.departures.iter().map(|d| d.missing_kwh).sum(),
            constraint_excess_a: info.reward.c_constraint,
            profit_eur: info.reward.profit_eur,
            reward: info.reward.total,
        }
    }

    fn rounded(&self) -> Self {
        let r = round_sig9;
        Self {
            p_buy: r(self.p_buy),
            p_sell_grid: r(self.p_sell_grid),
            lambda_arrivals: r(self.lambda_arrivals),
            sum_requested_a: r(self.sum_requested_a),
            sum_applied_a: r(self.sum_applied_a),
            battery_current_a: r(self.battery_current_a),
            battery_soc: r(self.battery_soc),
            e_net_kwh: r(self.e_net_kwh),
            e_grid_in_kwh: r(self.e_grid_in_kwh),
            e_to_grid_kwh: r(self.e_to_grid_kwh),
            e_battery_kwh: r(self.e_battery_kwh),
            e_grid_net_kwh: r(self.e_grid_net_kwh),
            missing_kwh: r(self.missing_kwh),
            constraint_excess_a: r(self.constraint_excess_a),
            profit_eur: r(self.profit_eur),
            reward: r(self.reward),
            ..self.clone()
        }
    }
}

/// Runs `episodes` consecutive episodes of one environment seeded with `seed`.
pub fn simulate(
    env: &ChargingEnv,
    policy: &dyn Policy,
    seed: u64,
    episodes: u64,
) -> Result<Vec<TrajectoryRow>, HarnessError> {
    let mut rows = Vec::with_capacity(episodes as usize * env.config().episode_steps);
    let mut action = vec![0u32; env.action_len()];
    for e in 0..episodes {
        let (mut state, _) = env.reset_episode(seed, e);
        let mut rng = policy_stream(seed, e);
        loop {
            policy.act(env, &state, &mut rng, &mut action);
            let (_, done, info) = env.step_state(&mut state, &ActionVector(action.clone()))?;
            rows.push(TrajectoryRow::new(&info, &state));
            if done {
                break;
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown format {s:?}; expected json or csv")),
        }
    }
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn rounded_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rounded_value).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, rounded_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and floats rounded to 9 significant digits.
pub fn to_stable_json<T: Serialize>(value: &T) -> String {
    // serde_json's map is ordered by key unless `preserve_order` is enabled
    let v = rounded_value(serde_json::to_value(value).expect("value serializes"));
    let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
    s.push('\n');
    s
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// JSON: the full report. CSV: one row per episode record.
pub fn report_to_string(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => to_stable_json(report),
        Format::Csv => to_csv(report.records.iter().map(EpisodeRecord::rounded)),
    }
}

pub fn trajectory_to_string(rows: &[TrajectoryRow], format: Format) -> String {
    match format {
        Format::Json => to_stable_json(&rows),
        Format::Csv => to_csv(rows.iter().map(TrajectoryRow::rounded)),
    }
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents)
        .map_err(|e| HarnessError::Write { path: path.display().to_string(), msg: e.to_string() })
}

pub fn export_report(report: &MetricsReport, path: &Path, format: Format) -> Result<(), HarnessError> {
    write_output(path, &report_to_string(report, format))
}

pub fn export_trajectory(rows: &[TrajectoryRow], path: &Path, format: Format) -> Result<(), HarnessError> {
    write_output(path, &trajectory_to_string(rows, format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::exogenous::{generate_synthetic_defaults, SyntheticProfile};
    use crate::topology::{preset_station, Layout, PresetParams};
    use std::sync::Arc;

    fn env(cfg: EnvConfig) -> ChargingEnv {
        let station = preset_station(Layout::MultiType, 2, 2, &PresetParams::default()).unwrap();
        let data = generate_synthetic_defaults(&SyntheticProfile::default(), 0, cfg.dt_min, cfg.episode_steps);
        ChargingEnv::new(cfg, Arc::new(station), Arc::new(data)).unwrap()
    }

    fn short() -> EnvConfig {
        EnvConfig { episode_steps: 24, ..EnvConfig::default() }
    }

    #[test]
    fn idle_index_examples() {
        assert_eq!(idle_index(0.0, 32.0, 10, false), 10);
        assert_eq!(idle_index(16.0, 32.0, 10, false), 5);
        assert_eq!(idle_index(3.2, 32.0, 10, false), 9);
        assert_eq!(idle_index(3.0, 32.0, 10, false), 9);
        assert_eq!(idle_index(3.0, 32.0, 10, true), 9);
        assert_eq!(idle_index(1.0, 32.0, 10, true), 10);
        assert_eq!(idle_index(-16.0, 32.0, 10, true), 15);
        assert_eq!(idle_index(40.0, 32.0, 10, false), 0);
    }

    #[test]
    fn max_charge_encoding() {
        let e = env(short());
        let (mut s, _) = e.reset(0);
        s.ports[1].car = Some(crate::vehicle::CarState::arrive(
            e.data().catalog.entries()[0].profile,
            &crate::vehicle::UserProfile {
                stay_steps: 3,
                energy_requested_kwh: 1.0,
                soc_arrival: 0.5,
                preference: crate::vehicle::Preference::TimeSensitive,
            },
            e.station().evse(1).kind,
        ));
        let mut out = vec![0; 5];
        MaxCharge.act(&e, &s, &mut policy_stream(0, 0), &mut out);
        assert_eq!(out, vec![10, 20, 10, 10, 10]);
    }

    #[test]
    fn random_policy_is_reproducible_and_uniform() {
        let e = env(short());
        let (s, _) = e.reset(0);
        let mut a = vec![0; 5];
        let mut b = vec![0; 5];
        RandomActions.act(&e, &s, &mut policy_stream(3, 0), &mut a);
        RandomActions.act(&e, &s, &mut policy_stream(3, 0), &mut b);
        assert_eq!(a, b);
        let mut counts = [0u32; 21];
        let mut rng = policy_stream(4, 0);
        let draws = 200_000;
        let mut out = vec![0; 5];
        for _ in 0..draws / 5 {
            RandomActions.act(&e, &s, &mut rng, &mut out);
            for &x in &out {
                counts[x as usize] += 1;
            }
        }
        let p = 1.0 / 21.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn idle_policy_profit_is_fixed_cost() {
        let cfg = EnvConfig { fixed_cost_per_step: 0.01, ..short() };
        let e = env(cfg);
        let r = evaluate(&e, &Idle, 3, 5, 2, Some(1)).unwrap();
        for rec in &r.records {
            assert_eq!(rec.energy_sold_kwh, 0.0);
            assert!((rec.profit_eur + 24.0 * 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_is_deterministic_and_batch_independent() {
        let e = env(short());
        let a = evaluate(&e, &RandomActions, 5, 11, 2, Some(1)).unwrap();
        let b = evaluate(&e, &RandomActions, 5, 11, 5, Some(2)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&e, &RandomActions, episode_seed(11, 3), 1).unwrap();
        let profit: f64 = c.iter().map(|r| r.profit_eur).sum();
        assert_eq!(profit, a.records[3].profit_eur);
    }

    #[test]
    fn single_episode_has_zero_std() {
        let r = evaluate(&env(short()), &MaxCharge, 1, 0, 4, Some(1)).unwrap();
        assert_eq!(r.episodes, 1);
        assert_eq!(r.std_daily_profit_eur, 0.0);
        assert!(evaluate(&env(short()), &MaxCharge, 0, 0, 4, Some(1)).is_err());
    }

    #[test]
    fn aggregates_match_records() {
        let r = evaluate(&env(short()), &MaxCharge, 6, 2, 4, None).unwrap();
        let again = MetricsReport::from_records(&r.policy, r.config_fingerprint.clone(), r.records.clone());
        assert_eq!(r, again);
        let dep: u64 = r.records.iter().map(|x| x.departures).sum();
        let miss: f64 = r.records.iter().map(|x| x.missing_kwh).sum();
        if dep > 0 {
            assert!((r.missing_kwh_per_departure - miss / dep as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn export_is_stable_and_round_trips() {
        let r = evaluate(&env(short()), &RandomActions, 3, 1, 3, Some(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        export_report(&r, &p1, Format::Json).unwrap();
        export_report(&r, &p2, Format::Json).unwrap();
        let (t1, t2) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(t1, t2);
        let back = MetricsReport::from_json_str(std::str::from_utf8(&t1).unwrap()).unwrap();
        assert_eq!(back, r.rounded());
        assert_eq!(report_to_string(&back, Format::Json), report_to_string(&r, Format::Json));
        let text = String::from_utf8(t1).unwrap();
        let policy_at = text.find("\"policy\"").unwrap();
        assert!(text.find("\"episodes\"").unwrap() < policy_at);
        assert!(export_report(&r, &dir.path().join("no/such/dir.json"), Format::Json).is_err());
    }

    #[test]
    fn trajectory_csv_has_one_row_per_step() {
        let e = env(short());
        let rows = simulate(&e, &MaxCharge, 3, 2).unwrap();
        let csv = trajectory_to_string(&rows, Format::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 48);
        assert!(lines[0].starts_with("episode,step,day_index,p_buy"));
        assert_eq!(csv, trajectory_to_string(&simulate(&e, &MaxCharge, 3, 2).unwrap(), Format::Csv));
    }

    #[test]
    fn round_sig9_examples() {
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(123456789.4), 123456789.0);
        assert_eq!(round_sig9(0.0), 0.0);
    }

    #[test]
    fn bench_rejects_zero_steps() {
        assert!(matches!(bench(&env(short()), 1, 0, Some(1), 0), Err(HarnessError::InvalidArgument(_))));
    }

    #[test]
    fn policy_names_parse() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!("max-charge".parse::<PolicyKind>().unwrap(), PolicyKind::MaxCharge);
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
