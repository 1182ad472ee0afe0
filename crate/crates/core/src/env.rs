//! The charging-station MDP.
//!
//! One transition runs four phases in a fixed order:
//!
//! 1. apply actions: decode current deltas, clip to car and port limits, then
//!    rescale to the station's node capacities;
//! 2. charge: integrate every parked car (and the battery) over the interval,
//!    then tick each parked car's remaining-time counter;
//! 3. departures: time-sensitive users leave when their time is up,
//!    charge-sensitive users when their request is met;
//! 4. arrivals: draw new cars and park them first-fit; overflow is declined.
//!
//! The reward is the profit of the interval minus a weighted sum of penalties.
//!
//! All exogenous randomness (arrival counts and profiles) comes from a stream
//! keyed by `(seed, episode, step)`. Profiles are drawn for every sampled car,
//! admitted or not, so the exogenous sequence never depends on the actions.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exogenous::{sample_arrival_count, sample_car_index, sample_user, DataError, Datasets, ExogenousFrame};
use crate::rng::{Phase, StreamKey};
use crate::topology::StationTree;
use crate::vehicle::{
    integrate_battery, integrate_charge, kw_to_amps, BatteryState, CarProfile, CarState, Preference, UserProfile,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("episode is done; reset before stepping")]
    EpisodeDone,
    #[error("action vector has length {got}, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("action index {value} at position {position} exceeds {max}")]
    ActionOutOfRange { position: usize, value: u32, max: u32 },
}

/// Penalty coefficients; every term defaults to 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyWeights {
    pub constraint: f64,
    pub satisfaction_time: f64,
    pub satisfaction_charge: f64,
    pub sustainability: f64,
    pub declined: f64,
    pub degradation_battery: f64,
    pub degradation_cars: f64,
    pub grid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt_min: f64,
    pub episode_steps: usize,
    pub discretization_k: u32,
    pub p_sell_eur_per_kwh: f64,
    pub fixed_cost_per_step: f64,
    pub alpha: PenaltyWeights,
    /// Weight of early-departure satisfaction against overtime.
    pub beta: f64,
    pub allow_discharge: bool,
    pub battery_enabled: bool,
    /// Number of future buy prices appended to the observation.
    pub observe_price_horizon: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt_min: 5.0,
            episode_steps: 288,
            discretization_k: 10,
            p_sell_eur_per_kwh: 0.75,
            fixed_cost_per_step: 0.0,
            alpha: PenaltyWeights::default(),
            beta: 0.5,
            allow_discharge: false,
            battery_enabled: false,
            observe_price_horizon: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.dt_min > 0.0 && self.dt_min.is_finite()) {
            return Err(EnvError::Config(format!("dt_min must be positive, got {}", self.dt_min)));
        }
        if self.discretization_k < 1 {
            return Err(EnvError::Config("discretization_k must be at least 1".into()));
        }
        if self.episode_steps < 1 {
            return Err(EnvError::Config("episode_steps must be at least 1".into()));
        }
        if !self.p_sell_eur_per_kwh.is_finite() || !self.fixed_cost_per_step.is_finite() || !self.beta.is_finite() {
            return Err(EnvError::Config("prices and coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt_min / 60.0
    }

    /// Number of choices per port, `2K + 1`.
    pub fn action_choices(&self) -> u32 {
        2 * self.discretization_k + 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PortState {
    pub i_drawn_a: f64,
    pub car: Option<CarState>,
}

impl PortState {
    #[inline]
    pub fn occupied(&self) -> bool {
        self.car.is_some()
    }
}

/// Running totals over the current episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub reward: f64,
    pub profit_eur: f64,
    pub energy_to_cars_kwh: f64,
    pub energy_grid_net_kwh: f64,
    pub missing_kwh: f64,
    pub overtime_steps: f64,
    pub early_steps: f64,
    pub departures: u64,
    pub arrivals: u64,
    pub declined: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub step: usize,
    pub day_index: usize,
    pub ports: Vec<PortState>,
    pub battery: Option<BatteryState>,
    /// Master seed of this environment's streams.
    pub seed: u64,
    /// Episode counter; selects the substream for the current episode.
    pub episode: u64,
    pub metrics: EpisodeMetrics,
}

impl EnvState {
    pub fn num_occupied(&self) -> usize {
        self.ports.iter().filter(|p| p.occupied()).count()
    }
}

/// One discrete choice in `[0, 2K]` per port, battery last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<u32>);

impl ActionVector {
    /// All ports at the center index (no change in current).
    pub fn hold(num_ports: usize, k: u32) -> Self {
        Self(vec![k; num_ports + 1])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyFlows {
    /// Energy delivered into car batteries (negative when discharging).
    pub e_net_kwh: f64,
    /// Grid-side energy needed for charging ports, after losses (>= 0).
    pub e_grid_in_kwh: f64,
    /// Grid-side energy returned by discharging ports, after losses (<= 0).
    pub e_to_grid_kwh: f64,
    /// Grid-side battery energy, positive when charging.
    pub e_battery_kwh: f64,
    /// Net energy drawn from the grid.
    pub e_grid_net_kwh: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub profit_eur: f64,
    pub c_constraint: f64,
    pub c_satisfaction_time: f64,
    pub c_satisfaction_charge: f64,
    pub c_sustainability: f64,
    pub c_declined: f64,
    pub c_degradation_battery: f64,
    pub c_degradation_cars: f64,
    pub c_grid: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Weighted penalty sum.
    pub fn penalty(&self, a: &PenaltyWeights) -> f64 {
        a.constraint * self.c_constraint
            + a.satisfaction_time * self.c_satisfaction_time
            + a.satisfaction_charge * self.c_satisfaction_charge
            + a.sustainability * self.c_sustainability
            + a.declined * self.c_declined
            + a.degradation_battery * self.c_degradation_battery
            + a.degradation_cars * self.c_degradation_cars
            + a.grid * self.c_grid
    }
}

/// A car leaving its port (or, in `StepInfo::unfinished`, still parked at the end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    pub port: usize,
    pub preference: Preference,
    pub missing_kwh: f64,
    pub overtime_steps: u32,
    pub early_steps: u32,
    pub capacity_kwh: f64,
    pub soc_arrival: f64,
    pub soc_departure: f64,
    pub energy_requested_kwh: f64,
}

impl Departure {
    fn from_car(port: usize, car: &CarState) -> Self {
        Self {
            port,
            preference: car.preference,
            missing_kwh: car.de_remain_kwh.max(0.0),
            overtime_steps: (-car.dt_remain_steps).max(0) as u32,
            early_steps: car.dt_remain_steps.max(0) as u32,
            capacity_kwh: car.profile.capacity_kwh,
            soc_arrival: car.soc_arrival,
            soc_departure: car.soc,
            energy_requested_kwh: car.energy_requested_kwh,
        }
    }
}

/// One sampled arrival; `port` is `None` when the car was declined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalDraw {
    pub car_index: usize,
    pub car: CarProfile,
    pub user: UserProfile,
    pub port: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Index of the step that was executed.
    pub step: usize,
    pub day_index: usize,
    pub episode: u64,
    pub frame: ExogenousFrame,
    pub flows: EnergyFlows,
    pub reward: RewardBreakdown,
    /// Port currents after per-port clipping, before capacity rescaling.
    pub requested_currents_a: Vec<f64>,
    /// Port currents actually applied.
    pub applied_currents_a: Vec<f64>,
    pub battery_current_a: f64,
    /// Energy delivered into each port's car this step.
    pub port_delivered_kwh: Vec<f64>,
    pub departures: Vec<Departure>,
    pub arrivals: Vec<ArrivalDraw>,
    pub declined: u32,
    pub done: bool,
    /// Cars still parked when the episode ended. Not penalized.
    pub unfinished: Vec<Departure>,
}

/// Departure rule for a parked car after the charging phase.
#[inline]
pub fn should_depart(preference: Preference, dt_remain_steps: i32, de_remain_kwh: f64) -> bool {
    match preference {
        Preference::TimeSensitive => dt_remain_steps <= 0,
        Preference::ChargeSensitive => de_remain_kwh <= 0.0,
    }
}

/// Profit of one interval.
pub fn compute_profit(flows: &EnergyFlows, p_buy: f64, p_sell_grid: f64, config: &EnvConfig) -> f64 {
    let grid_price = if flows.e_grid_net_kwh > 0.0 { p_buy } else { p_sell_grid };
    config.p_sell_eur_per_kwh * flows.e_net_kwh - grid_price * flows.e_grid_net_kwh - config.fixed_cost_per_step
}

/// Raw inputs of the penalty terms for one transition.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyInputs<'a> {
    pub constraint_excess_a: f64,
    pub departures: &'a [Departure],
    pub flows: &'a EnergyFlows,
    pub declined: u32,
    pub frame: &'a ExogenousFrame,
}

/// Fills every penalty term and the combined reward.
pub fn compute_penalties(inputs: &PenaltyInputs<'_>, profit_eur: f64, config: &EnvConfig) -> RewardBreakdown {
    let mut r = RewardBreakdown { profit_eur, c_constraint: inputs.constraint_excess_a, ..Default::default() };
    for d in inputs.departures {
        match d.preference {
            Preference::TimeSensitive => r.c_satisfaction_time += d.missing_kwh,
            Preference::ChargeSensitive => {
                r.c_satisfaction_charge += d.overtime_steps as f64 - config.beta * d.early_steps as f64
            }
        }
    }
    let f = inputs.flows;
    r.c_sustainability = inputs.frame.moer_kg_per_kwh.map_or(0.0, |m| m * f.e_grid_net_kwh);
    r.c_declined = inputs.declined as f64;
    r.c_degradation_battery = if f.e_battery_kwh < 0.0 { -f.e_battery_kwh } else { 0.0 };
    r.c_degradation_cars = f.e_to_grid_kwh.abs();
    r.c_grid = inputs.frame.grid_demand_kwh.map_or(0.0, |d| (f.e_net_kwh - d).abs());
    r.total = profit_eur - r.penalty(&config.alpha);
    r
}

/// Offsets of the flat observation vector.
///
/// ```text
/// per port (x N): occupied, i_drawn / i_max, soc, de_remain / C, dt_remain / episode_steps, u
/// battery:        soc, i / i_max
/// global:         p_buy, p_sell_grid, p_sell, sin(day phase), cos(day phase), is_weekday, day / 365
/// horizon (x H):  p_buy at steps t+1 .. t+H
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub ports: usize,
    pub horizon: usize,
}

impl ObsLayout {
    pub const PORT_FEATURES: usize = 6;
    pub const BATTERY_FEATURES: usize = 2;
    pub const GLOBAL_FEATURES: usize = 7;

    pub fn len(&self) -> usize {
        self.ports * Self::PORT_FEATURES + Self::BATTERY_FEATURES + Self::GLOBAL_FEATURES + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn port(&self, i: usize) -> usize {
        i * Self::PORT_FEATURES
    }

    pub fn battery(&self) -> usize {
        self.ports * Self::PORT_FEATURES
    }

    pub fn global(&self) -> usize {
        self.battery() + Self::BATTERY_FEATURES
    }

    pub fn horizon(&self) -> usize {
        self.global() + Self::GLOBAL_FEATURES
    }
}

/// Immutable environment definition shared by any number of states.
#[derive(Debug, Clone)]
pub struct ChargingEnv {
    config: EnvConfig,
    station: Arc<StationTree>,
    data: Arc<Datasets>,
}

impl ChargingEnv {
    pub fn new(config: EnvConfig, station: Arc<StationTree>, data: Arc<Datasets>) -> Result<Self, EnvError> {
        config.validate()?;
        if data.num_days() == 0 {
            return Err(DataError::Empty.into());
        }
        if data.arrivals.rates_per_step.len() < config.episode_steps {
            return Err(EnvError::Config(format!(
                "arrival profile covers {} steps but the episode has {}",
                data.arrivals.rates_per_step.len(),
                config.episode_steps
            )));
        }
        if config.battery_enabled && station.battery().is_none() {
            return Err(EnvError::Config("battery_enabled requires a station battery".into()));
        }
        Ok(Self { config, station, data })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn station(&self) -> &StationTree {
        &self.station
    }

    pub fn station_arc(&self) -> &Arc<StationTree> {
        &self.station
    }

    pub fn data(&self) -> &Datasets {
        &self.data
    }

    pub fn data_arc(&self) -> &Arc<Datasets> {
        &self.data
    }

    pub fn num_ports(&self) -> usize {
        self.station.num_ports()
    }

    /// Ports plus the battery slot.
    pub fn action_len(&self) -> usize {
        self.station.num_ports() + 1
    }

    pub fn obs_layout(&self) -> ObsLayout {
        ObsLayout { ports: self.station.num_ports(), horizon: self.config.observe_price_horizon }
    }

    pub fn obs_len(&self) -> usize {
        self.obs_layout().len()
    }

    fn battery_active(&self) -> bool {
        self.config.battery_enabled && self.station.battery().is_some()
    }

    fn episode_key(seed: u64, episode: u64) -> StreamKey {
        StreamKey::new(seed).child(episode)
    }

    /// Starts episode 0 for `seed`.
    pub fn reset(&self, seed: u64) -> (EnvState, Vec<f64>) {
        self.reset_episode(seed, 0)
    }

    /// Starts episode `episode` of the stream `seed`; the day is drawn
    /// uniformly from the price data.
    pub fn reset_episode(&self, seed: u64, episode: u64) -> (EnvState, Vec<f64>) {
        let mut rng = Self::episode_key(seed, episode).phase(Phase::Reset).stream();
        let day_index = rng.random_range(0..self.data.num_days());
        let state = EnvState {
            step: 0,
            day_index,
            ports: vec![PortState::default(); self.num_ports()],
            battery: self.station.battery().filter(|_| self.config.battery_enabled).map(|b| b.initial_state()),
            seed,
            episode,
            metrics: EpisodeMetrics::default(),
        };
        let obs = self.observe(&state);
        (state, obs)
    }

    pub fn frame(&self, state: &EnvState) -> Result<ExogenousFrame, EnvError> {
        Ok(self.data.frame_at(state.day_index, state.step, self.config.dt_min)?)
    }

    pub fn validate_action(&self, action: &ActionVector) -> Result<(), EnvError> {
        let expected = self.action_len();
        if action.0.len() != expected {
            return Err(EnvError::ActionLength { expected, got: action.0.len() });
        }
        let max = 2 * self.config.discretization_k;
        if let Some((position, &value)) = action.0.iter().enumerate().find(|(_, &v)| v > max) {
            return Err(EnvError::ActionOutOfRange { position, value, max });
        }
        Ok(())
    }

    /// Maps action indices to current deltas (A), battery last.
    pub fn decode_action(&self, state: &EnvState, action: &ActionVector) -> Result<Vec<f64>, EnvError> {
        self.validate_action(action)?;
        let k = self.config.discretization_k as f64;
        let n = self.num_ports();
        let mut deltas = Vec::with_capacity(n + 1);
        for (i, &idx) in action.0.iter().enumerate() {
            let (i_max, i_prev) = if i < n {
                (self.station.evse(i).i_max_charge_a, state.ports[i].i_drawn_a)
            } else {
                match (self.station.battery(), &state.battery) {
                    (Some(spec), Some(b)) => (spec.i_max_a(), b.i_battery_a),
                    _ => (0.0, 0.0),
                }
            };
            let mut delta = (idx as f64 - k) / k * i_max;
            if !self.config.allow_discharge {
                delta = delta.max(-i_prev);
            }
            deltas.push(delta);
        }
        Ok(deltas)
    }

    /// Clips each port's target current to the car's rate limit and the port
    /// limits. Returns the port currents (before capacity rescaling) and the
    /// battery current.
    pub fn apply_actions(&self, state: &EnvState, deltas: &[f64]) -> (Vec<f64>, f64) {
        let n = self.num_ports();
        let mut currents = Vec::with_capacity(n);
        for (i, port) in state.ports.iter().enumerate() {
            let current = match &port.car {
                None => 0.0,
                Some(car) => {
                    let evse = self.station.evse(i);
                    let target = port.i_drawn_a + deltas[i];
                    if target >= 0.0 {
                        target.min(kw_to_amps(car.r_hat_kw, evse.voltage_v)).min(evse.i_max_charge_a)
                    } else {
                        -(-target).min(kw_to_amps(car.r_hat_discharge_kw(), evse.voltage_v)).min(evse.i_max_discharge_a)
                    }
                }
            };
            currents.push(current);
        }
        let battery_current = match (self.station.battery(), &state.battery) {
            (Some(spec), Some(b)) if self.battery_active() => {
                let i_max = spec.i_max_a();
                let target = b.i_battery_a + deltas[n];
                if target >= 0.0 {
                    target.min(kw_to_amps(b.r_hat_kw, spec.voltage_v)).min(i_max)
                } else {
                    -(-target).min(kw_to_amps(b.r_hat_discharge_kw(spec), spec.voltage_v)).min(i_max)
                }
            }
            _ => 0.0,
        };
        (currents, battery_current)
    }

    /// Integrates parked cars and the battery with the currents already set in
    /// `state`, then ticks the remaining-time counters.
    pub fn charge_phase(&self, state: &mut EnvState, battery_current_a: f64) -> (EnergyFlows, Vec<f64>) {
        let dt_h = self.config.dt_hours();
        let mut flows = EnergyFlows::default();
        let mut delivered = vec![0.0; state.ports.len()];
        for (i, port) in state.ports.iter_mut().enumerate() {
            let Some(car) = port.car.as_mut() else { continue };
            let evse = self.station.evse(i);
            let current = port.i_drawn_a;
            let (next, d) = integrate_charge(car, evse.voltage_v, current, dt_h);
            *car = next;
            delivered[i] = d;
            flows.e_net_kwh += d;
            if current > 0.0 {
                flows.e_grid_in_kwh += d / evse.eta_charge;
            } else if current < 0.0 {
                flows.e_to_grid_kwh += evse.eta_discharge * d;
            }
            car.dt_remain_steps -= 1;
        }
        if let (Some(spec), Some(b)) = (self.station.battery(), state.battery.as_mut()) {
            let (next, de) = integrate_battery(b, spec, battery_current_a, dt_h);
            *b = next;
            flows.e_battery_kwh = de;
        }
        flows.e_grid_net_kwh = flows.e_grid_in_kwh + flows.e_to_grid_kwh + flows.e_battery_kwh;
        (flows, delivered)
    }

    /// Removes departing cars and reports them.
    pub fn departure_phase(&self, state: &mut EnvState) -> Vec<Departure> {
        let mut out = Vec::new();
        for (i, port) in state.ports.iter_mut().enumerate() {
            let Some(car) = &port.car else { continue };
            if should_depart(car.preference, car.dt_remain_steps, car.de_remain_kwh) {
                out.push(Departure::from_car(i, car));
                *port = PortState::default();
            }
        }
        out
    }

    /// Samples this step's arrivals and parks them first-fit. Returns every
    /// draw and the number declined.
    pub fn arrival_phase(&self, state: &mut EnvState, frame: &ExogenousFrame) -> (Vec<ArrivalDraw>, u32) {
        let mut rng =
            Self::episode_key(state.seed, state.episode).phase(Phase::Arrivals).child(state.step as u64).stream();
        let m = sample_arrival_count(&mut rng, frame.lambda_arrivals).expect("validated non-negative rate");
        let mut draws = Vec::with_capacity(m as usize);
        for _ in 0..m {
            let car_index = sample_car_index(&mut rng, &self.data.catalog);
            let car = self.data.catalog.entries()[car_index].profile;
            let user = sample_user(&mut rng, &self.data.users, &car);
            draws.push(ArrivalDraw { car_index, car, user, port: None });
        }
        let free: Vec<usize> =
            self.station.parking_order().iter().copied().filter(|&p| !state.ports[p].occupied()).collect();
        let mut free = free.into_iter();
        let mut declined = 0;
        for draw in &mut draws {
            match free.next() {
                Some(port) => {
                    let kind = self.station.evse(port).kind;
                    state.ports[port] =
                        PortState { i_drawn_a: 0.0, car: Some(CarState::arrive(draw.car, &draw.user, kind)) };
                    draw.port = Some(port);
                }
                None => declined += 1,
            }
        }
        (draws, declined)
    }

    /// Advances `state` by one step and returns the reward, done flag and details.
    pub fn step_state(&self, state: &mut EnvState, action: &ActionVector) -> Result<(f64, bool, StepInfo), EnvError> {
        if state.step >= self.config.episode_steps {
            return Err(EnvError::EpisodeDone);
        }
        let frame = self.data.frame_unchecked(state.day_index, state.step, self.config.dt_min);

        let deltas = self.decode_action(state, action)?;
        let (requested, battery_current) = self.apply_actions(state, &deltas);
        let excess = self.station.excess_unchecked(&requested);
        let mut applied = requested.clone();
        self.station.enforce_limits_in_place(&mut applied).expect("port count matches station");
        for (port, &i) in state.ports.iter_mut().zip(&applied) {
            port.i_drawn_a = i;
        }

        let (flows, delivered) = self.charge_phase(state, battery_current);
        let departures = self.departure_phase(state);
        let (arrivals, declined) = self.arrival_phase(state, &frame);

        let profit = compute_profit(&flows, frame.p_buy, frame.p_sell_grid, &self.config);
        let reward = compute_penalties(
            &PenaltyInputs {
                constraint_excess_a: excess,
                departures: &departures,
                flows: &flows,
                declined,
                frame: &frame,
            },
            profit,
            &self.config,
        );

        let executed = state.step;
        state.step += 1;
        let done = state.step == self.config.episode_steps;
        let m = &mut state.metrics;
        m.reward += reward.total;
        m.profit_eur += profit;
        m.energy_to_cars_kwh += flows.e_net_kwh;
        m.energy_grid_net_kwh += flows.e_grid_net_kwh;
        for d in &departures {
            m.missing_kwh += d.missing_kwh;
            m.overtime_steps += d.overtime_steps as f64;
            m.early_steps += d.early_steps as f64;
        }
        m.departures += departures.len() as u64;
        m.arrivals += (arrivals.len() as u64) - declined as u64;
        m.declined += declined as u64;

        let unfinished = if done {
            state
                .ports
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.car.as_ref().map(|c| Departure::from_car(i, c)))
                .collect()
        } else {
            Vec::new()
        };
        let info = StepInfo {
            step: executed,
            day_index: state.day_index,
            episode: state.episode,
            frame,
            flows,
            reward,
            requested_currents_a: requested,
            applied_currents_a: applied,
            battery_current_a: state.battery.map_or(0.0, |b| b.i_battery_a),
            port_delivered_kwh: delivered,
            departures,
            arrivals,
            declined,
            done,
            unfinished,
        };
        Ok((reward.total, done, info))
    }

    /// Steps and returns `(observation, reward, done, info)`.
    pub fn step(
        &self,
        state: &mut EnvState,
        action: &ActionVector,
    ) -> Result<(Vec<f64>, f64, bool, StepInfo), EnvError> {
        let (reward, done, info) = self.step_state(state, action)?;
        Ok((self.observe(state), reward, done, info))
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let mut obs = vec![0.0; self.obs_len()];
        self.observe_into(state, &mut obs);
        obs
    }

    /// Writes the observation of `state` into `out` (length [`Self::obs_len`]).
    pub fn observe_into(&self, state: &EnvState, out: &mut [f64]) {
        let layout = self.obs_layout();
        assert_eq!(out.len(), layout.len(), "observation buffer length");
        let steps = self.config.episode_steps as f64;
        for (i, port) in state.ports.iter().enumerate() {
            let o = &mut out[layout.port(i)..layout.port(i) + ObsLayout::PORT_FEATURES];
            match &port.car {
                None => o.fill(0.0),
                Some(car) => {
                    let i_max = self.station.evse(i).i_max_charge_a;
                    o[0] = 1.0;
                    o[1] = if i_max > 0.0 { port.i_drawn_a / i_max } else { 0.0 };
                    o[2] = car.soc;
                    o[3] = car.de_remain_kwh / car.profile.capacity_kwh;
                    o[4] = car.dt_remain_steps as f64 / steps;
                    o[5] = car.preference as u8 as f64;
                }
            }
        }
        let b = layout.battery();
        match (self.station.battery(), &state.battery) {
            (Some(spec), Some(bs)) => {
                let i_max = spec.i_max_a();
                out[b] = bs.soc;
                out[b + 1] = if i_max > 0.0 { bs.i_battery_a / i_max } else { 0.0 };
            }
            _ => {
                out[b] = 0.0;
                out[b + 1] = 0.0;
            }
        }
        let dt = self.config.dt_min;
        let prices = &self.data.prices;
        let h = self.data.hour_index(state.day_index, state.step, dt);
        let steps_per_day = 1440.0 / dt;
        let phase = 2.0 * PI * (state.step as f64 % steps_per_day) / steps_per_day;
        let g = layout.global();
        out[g] = prices.hourly_buy_eur_per_kwh[h];
        out[g + 1] = prices.hourly_sell_grid_eur_per_kwh[h];
        out[g + 2] = self.config.p_sell_eur_per_kwh;
        out[g + 3] = phase.sin();
        out[g + 4] = phase.cos();
        out[g + 5] = if self.data.is_weekday(state.day_index) { 1.0 } else { 0.0 };
        out[g + 6] = state.day_index as f64 / 365.0;
        let f = layout.horizon();
        for j in 0..layout.horizon {
            let h = self.data.hour_index(state.day_index, state.step + j + 1, dt);
            out[f + j] = prices.hourly_buy_eur_per_kwh[h];
        }
    }

    /// Finite lower and upper bounds of every observation entry.
    pub fn observation_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let layout = self.obs_layout();
        let mut lo = vec![0.0; layout.len()];
        let mut hi = vec![1.0; layout.len()];
        let steps = self.config.episode_steps as f64;
        let max_stay = self.data.users.stay_steps_range.1 as f64;
        for (i, e) in self.station.evses().iter().enumerate() {
            let o = layout.port(i);
            lo[o + 1] = if e.i_max_charge_a > 0.0 { -e.i_max_discharge_a / e.i_max_charge_a } else { 0.0 };
            lo[o + 4] = -1.0;
            hi[o + 4] = (max_stay / steps).max(1.0);
        }
        lo[layout.battery() + 1] = -1.0;
        let p = &self.data.prices;
        let all = p.hourly_buy_eur_per_kwh.iter().chain(&p.hourly_sell_grid_eur_per_kwh);
        let (pmin, pmax) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let g = layout.global();
        (lo[g], hi[g], lo[g + 1], hi[g + 1]) = (pmin, pmax, pmin, pmax);
        (lo[g + 2], hi[g + 2]) = (self.config.p_sell_eur_per_kwh, self.config.p_sell_eur_per_kwh);
        (lo[g + 3], lo[g + 4]) = (-1.0, -1.0);
        hi[g + 6] = ((self.data.num_days() - 1) as f64 / 365.0).max(1.0);
        for j in 0..layout.horizon {
            (lo[layout.horizon() + j], hi[layout.horizon() + j]) = (pmin, pmax);
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exogenous::{
        generate_synthetic_defaults, synthetic_catalog, AuxSeries, CarRegion, SyntheticProfile, UserScenario,
        UserScenarioModel,
    };
    use crate::topology::{preset_station, ArchNode, ChargerKind, EvseSpec, Layout, PresetParams};

    fn env_with(config: EnvConfig, station: StationTree) -> ChargingEnv {
        let data = generate_synthetic_defaults(&SyntheticProfile::default(), 0, config.dt_min, config.episode_steps);
        ChargingEnv::new(config, Arc::new(station), Arc::new(data)).unwrap()
    }

    fn default_env() -> ChargingEnv {
        let station = preset_station(Layout::MultiType, 6, 10, &PresetParams::default()).unwrap();
        env_with(EnvConfig::default(), station)
    }

    fn one_port(i_max: f64, eta: f64) -> StationTree {
        let e = EvseSpec {
            id: 0,
            voltage_v: 400.0,
            i_max_charge_a: i_max,
            i_max_discharge_a: i_max,
            eta_charge: eta,
            eta_discharge: eta,
            kind: ChargerKind::Dc,
        };
        StationTree::from_root(ArchNode::new(0, 1e6, 1.0).with_evse(e)).unwrap()
    }

    fn parked(soc: f64, cap: f64, de: f64, stay: u32, pref: Preference) -> CarState {
        let profile = CarProfile { capacity_kwh: cap, r_max_ac_kw: 11.0, r_max_dc_kw: 150.0, tau: 0.8 };
        let user = UserProfile { stay_steps: stay, energy_requested_kwh: de, soc_arrival: soc, preference: pref };
        CarState::arrive(profile, &user, ChargerKind::Dc)
    }

    #[test]
    fn reset_is_deterministic_and_empty() {
        let env = default_env();
        let (s1, o1) = env.reset(42);
        let (s2, o2) = env.reset(42);
        assert_eq!(s1, s2);
        assert_eq!(o1, o2);
        assert!(o1[..env.num_ports() * ObsLayout::PORT_FEATURES].iter().all(|&x| x == 0.0));
        let g = env.obs_layout().global();
        assert_eq!(o1[g], env.data().prices.hourly_buy_eur_per_kwh[s1.day_index * 24]);
        assert_eq!(o1[g + 2], 0.75);
        assert_eq!(o1[g + 4], 1.0);
    }

    #[test]
    fn decode_examples() {
        let env = env_with(EnvConfig::default(), one_port(32.0, 1.0));
        let (s, _) = env.reset(0);
        let d = env.decode_action(&s, &ActionVector(vec![10, 10])).unwrap();
        assert_eq!(d[0], 0.0);
        let d = env.decode_action(&s, &ActionVector(vec![20, 10])).unwrap();
        assert_eq!(d[0], 32.0);
        let cfg = EnvConfig { allow_discharge: true, ..EnvConfig::default() };
        let env = env_with(cfg, one_port(32.0, 1.0));
        let d = env.decode_action(&s, &ActionVector(vec![5, 10])).unwrap();
        assert_eq!(d[0], -16.0);
        assert!(matches!(env.decode_action(&s, &ActionVector(vec![21, 10])), Err(EnvError::ActionOutOfRange { .. })));
        assert!(matches!(env.decode_action(&s, &ActionVector(vec![1])), Err(EnvError::ActionLength { .. })));
    }

    #[test]
    fn decode_floors_negative_without_discharge() {
        let env = env_with(EnvConfig::default(), one_port(32.0, 1.0));
        let (mut s, _) = env.reset(0);
        s.ports[0] = PortState { i_drawn_a: 6.0, car: Some(parked(0.5, 60.0, 10.0, 10, Preference::TimeSensitive)) };
        let d = env.decode_action(&s, &ActionVector(vec![0, 10])).unwrap();
        assert_eq!(d[0], -6.0);
    }

    #[test]
    fn apply_examples() {
        let cfg = EnvConfig { allow_discharge: true, ..EnvConfig::default() };
        let env = env_with(cfg, one_port(16.0, 1.0));
        let (mut s, _) = env.reset(0);
        // r_hat 150 kW at 400 V is 375 A
        s.ports[0] = PortState { i_drawn_a: 10.0, car: Some(parked(0.5, 60.0, 10.0, 10, Preference::TimeSensitive)) };
        assert_eq!(env.apply_actions(&s, &[5.0, 0.0]).0, vec![15.0]);
        let env = env_with(EnvConfig { allow_discharge: true, ..EnvConfig::default() }, one_port(32.0, 1.0));
        s.ports[0].i_drawn_a = 5.0;
        assert_eq!(env.apply_actions(&s, &[-10.0, 0.0]).0, vec![-5.0]);
        s.ports[0] = PortState::default();
        assert_eq!(env.apply_actions(&s, &[20.0, 0.0]).0, vec![0.0]);
    }

    #[test]
    fn charge_phase_examples() {
        for (eta, grid_in) in [(1.0, 5.0 / 3.0), (0.9, 5.0 / 3.0 / 0.9)] {
            let env = env_with(EnvConfig::default(), one_port(100.0, eta));
            let (mut s, _) = env.reset(0);
            s.ports[0] =
                PortState { i_drawn_a: 50.0, car: Some(parked(0.5, 60.0, 30.0, 10, Preference::TimeSensitive)) };
            let (flows, delivered) = env.charge_phase(&mut s, 0.0);
            assert!((flows.e_net_kwh - 5.0 / 3.0).abs() < 1e-12);
            assert!((flows.e_grid_in_kwh - grid_in).abs() < 1e-12);
            assert_eq!(flows.e_grid_net_kwh, flows.e_grid_in_kwh);
            assert_eq!(delivered, vec![flows.e_net_kwh]);
            assert_eq!(s.ports[0].car.unwrap().dt_remain_steps, 9);
        }
        let env = env_with(EnvConfig::default(), one_port(100.0, 1.0));
        let (mut s, _) = env.reset(0);
        let (flows, _) = env.charge_phase(&mut s, 0.0);
        assert_eq!(flows, EnergyFlows::default());
    }

    #[test]
    fn departure_examples() {
        let env = env_with(EnvConfig::default(), one_port(100.0, 1.0));
        let (mut s, _) = env.reset(0);
        let mut car = parked(0.5, 60.0, 5.0, 1, Preference::TimeSensitive);
        car.dt_remain_steps = 0;
        s.ports[0].car = Some(car);
        let d = env.departure_phase(&mut s);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].missing_kwh, 5.0);
        assert!(!s.ports[0].occupied());

        let mut car = parked(0.5, 60.0, 0.0, 2, Preference::ChargeSensitive);
        car.dt_remain_steps = 2;
        s.ports[0].car = Some(car);
        let d = env.departure_phase(&mut s);
        assert_eq!((d[0].early_steps, d[0].overtime_steps), (2, 0));

        let mut car = parked(0.5, 60.0, 5.0, 3, Preference::TimeSensitive);
        car.dt_remain_steps = 3;
        s.ports[0].car = Some(car);
        assert!(env.departure_phase(&mut s).is_empty());
    }

    fn forced_arrivals(lambda: f64, ports: usize) -> ChargingEnv {
        let mut root = ArchNode::new(0, 1e6, 1.0);
        for id in 0..ports {
            root = root.with_evse(EvseSpec {
                id,
                voltage_v: 400.0,
                i_max_charge_a: 100.0,
                i_max_discharge_a: 100.0,
                eta_charge: 1.0,
                eta_discharge: 1.0,
                kind: ChargerKind::Ac,
            });
        }
        let mut data = generate_synthetic_defaults(&SyntheticProfile::default(), 0, 5.0, 288);
        data.arrivals.rates_per_step = vec![lambda; 288];
        data.arrivals.weekday_scale = 1.0;
        data.arrivals.weekend_scale = 1.0;
        ChargingEnv::new(EnvConfig::default(), Arc::new(StationTree::from_root(root).unwrap()), Arc::new(data)).unwrap()
    }

    #[test]
    fn arrival_clipping() {
        let env = forced_arrivals(0.0, 2);
        let (mut s, _) = env.reset(0);
        let frame = env.frame(&s).unwrap();
        let (draws, declined) = env.arrival_phase(&mut s, &frame);
        assert!(draws.is_empty());
        assert_eq!(declined, 0);

        let env = forced_arrivals(6.0, 2);
        let mut found = false;
        for seed in 0..200 {
            let (mut s, _) = env.reset(seed);
            let frame = env.frame(&s).unwrap();
            let (draws, declined) = env.arrival_phase(&mut s, &frame);
            let admitted = draws.iter().filter(|d| d.port.is_some()).count();
            assert_eq!(admitted, draws.len().min(2));
            assert_eq!(declined as usize, draws.len() - admitted);
            if draws.len() == 5 {
                assert_eq!(declined, 3);
                assert_eq!(draws[0].port, Some(0));
                assert_eq!(draws[1].port, Some(1));
                found = true;
            }
            // station now full: everything is declined
            s.step += 1;
            let frame = env.frame(&s).unwrap();
            let (draws, declined) = env.arrival_phase(&mut s, &frame);
            if admitted == 2 {
                assert_eq!(declined as usize, draws.len());
            }
        }
        assert!(found);
    }

    #[test]
    fn arriving_car_rate_follows_port_kind() {
        let env = forced_arrivals(3.0, 4);
        let (mut s, _) = env.reset(3);
        let frame = env.frame(&s).unwrap();
        env.arrival_phase(&mut s, &frame);
        for p in s.ports.iter().filter_map(|p| p.car) {
            assert_eq!(p.r_bar_kw, p.profile.r_max_ac_kw);
            assert_eq!(p.r_hat_kw, crate::vehicle::charge_limit(p.soc, p.profile.tau, p.r_bar_kw).unwrap());
        }
    }

    #[test]
    fn profit_examples() {
        let cfg = EnvConfig::default();
        let flows = EnergyFlows {
            e_net_kwh: 10.0,
            e_grid_in_kwh: 10.0 / 0.9,
            e_grid_net_kwh: 10.0 / 0.9,
            ..Default::default()
        };
        assert!((compute_profit(&flows, 0.10, 0.05, &cfg) - (7.5 - 1.0 / 0.9)).abs() < 1e-12);
        assert!((compute_profit(&flows, 0.10, 0.05, &cfg) - 6.388_888_9).abs() < 1e-7);
        let cfg = EnvConfig { fixed_cost_per_step: 0.05, ..EnvConfig::default() };
        assert_eq!(compute_profit(&EnergyFlows::default(), 0.1, 0.1, &cfg), -0.05);
        let flows = EnergyFlows { e_net_kwh: -4.0, e_to_grid_kwh: -5.0, e_grid_net_kwh: -5.0, ..Default::default() };
        assert!((compute_profit(&flows, 0.3, 0.08, &cfg) - (-3.0 + 0.4 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn penalty_examples() {
        let frame = ExogenousFrame {
            p_buy: 0.1,
            p_sell_grid: 0.1,
            lambda_arrivals: 0.0,
            moer_kg_per_kwh: None,
            grid_demand_kwh: None,
            day_index: 0,
            is_weekday: true,
            step_of_day: 0,
        };
        let flows = EnergyFlows::default();
        let dep = Departure {
            port: 0,
            preference: Preference::TimeSensitive,
            missing_kwh: 5.0,
            overtime_steps: 0,
            early_steps: 0,
            capacity_kwh: 60.0,
            soc_arrival: 0.2,
            soc_departure: 0.3,
            energy_requested_kwh: 11.0,
        };
        let inputs =
            PenaltyInputs { constraint_excess_a: 8.0, departures: &[dep], flows: &flows, declined: 2, frame: &frame };
        let r = compute_penalties(&inputs, 3.0, &EnvConfig::default());
        assert_eq!(r.total, 3.0);
        let cfg = EnvConfig {
            alpha: PenaltyWeights { satisfaction_time: 0.1, ..Default::default() },
            ..EnvConfig::default()
        };
        assert!((compute_penalties(&inputs, 3.0, &cfg).total - 2.5).abs() < 1e-12);
        let cfg = EnvConfig { alpha: PenaltyWeights { constraint: 0.2, ..Default::default() }, ..EnvConfig::default() };
        assert!((compute_penalties(&inputs, 3.0, &cfg).total - (3.0 - 1.6)).abs() < 1e-12);
        let cfg = EnvConfig { alpha: PenaltyWeights { declined: 1.0, ..Default::default() }, ..EnvConfig::default() };
        assert_eq!(compute_penalties(&inputs, 3.0, &cfg).total, 1.0);
    }

    #[test]
    fn charge_sensitive_penalty_uses_beta() {
        let frame = ExogenousFrame {
            p_buy: 0.1,
            p_sell_grid: 0.1,
            lambda_arrivals: 0.0,
            moer_kg_per_kwh: Some(0.4),
            grid_demand_kwh: Some(2.0),
            day_index: 0,
            is_weekday: true,
            step_of_day: 0,
        };
        let flows = EnergyFlows { e_net_kwh: 5.0, e_grid_in_kwh: 5.0, e_grid_net_kwh: 5.0, ..Default::default() };
        let mk = |over, early| Departure {
            port: 0,
            preference: Preference::ChargeSensitive,
            missing_kwh: 0.0,
            overtime_steps: over,
            early_steps: early,
            capacity_kwh: 60.0,
            soc_arrival: 0.2,
            soc_departure: 0.3,
            energy_requested_kwh: 6.0,
        };
        let deps = [mk(3, 0), mk(0, 4)];
        let inputs =
            PenaltyInputs { constraint_excess_a: 0.0, departures: &deps, flows: &flows, declined: 0, frame: &frame };
        let cfg = EnvConfig { beta: 0.5, ..EnvConfig::default() };
        let r = compute_penalties(&inputs, 0.0, &cfg);
        assert_eq!(r.c_satisfaction_charge, 1.0);
        assert!((r.c_sustainability - 2.0).abs() < 1e-12);
        assert_eq!(r.c_grid, 3.0);
    }

    #[test]
    fn idle_step_on_empty_station() {
        let env = forced_arrivals(0.0, 3);
        let (mut s, _) = env.reset(1);
        let (obs, r, done, info) = env.step(&mut s, &ActionVector::hold(3, 10)).unwrap();
        assert_eq!(r, 0.0);
        assert!(!done);
        assert_eq!(s.step, 1);
        assert_eq!(info.step, 0);
        assert_eq!(obs.len(), env.obs_len());
    }

    #[test]
    fn stepping_past_the_end_fails() {
        let cfg = EnvConfig { episode_steps: 3, ..EnvConfig::default() };
        let env = env_with(cfg, one_port(10.0, 1.0));
        let (mut s, _) = env.reset(0);
        for i in 0..3 {
            let (_, _, done, _) = env.step(&mut s, &ActionVector::hold(1, 10)).unwrap();
            assert_eq!(done, i == 2);
        }
        assert!(matches!(env.step(&mut s, &ActionVector::hold(1, 10)), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn observation_layout_and_clock() {
        let env = env_with(EnvConfig { observe_price_horizon: 3, ..EnvConfig::default() }, one_port(32.0, 1.0));
        let (mut s, _) = env.reset(0);
        s.ports[0] = PortState { i_drawn_a: 16.0, car: Some(parked(0.5, 60.0, 6.0, 144, Preference::ChargeSensitive)) };
        s.step = 72;
        let o = env.observe(&s);
        assert_eq!(o.len(), 6 + 2 + 7 + 3);
        assert_eq!(&o[0..6], &[1.0, 0.5, 0.5, 0.1, 0.5, 1.0]);
        let g = env.obs_layout().global();
        assert!((o[g + 3] - (2.0 * PI * 72.0 / 288.0).sin()).abs() < 1e-15);
        assert!((o[g + 4] - (2.0 * PI * 72.0 / 288.0).cos()).abs() < 1e-15);
        // 06:00 -> hour 6; the next steps stay in that hour
        let h = s.day_index * 24 + 6;
        assert_eq!(o[g], env.data().prices.hourly_buy_eur_per_kwh[h]);
        assert_eq!(o[env.obs_layout().horizon()], env.data().prices.hourly_buy_eur_per_kwh[h]);
        let (lo, hi) = env.observation_bounds();
        assert!(o.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, u))| l <= x && x <= u));
    }

    #[test]
    fn battery_requires_station_battery() {
        let cfg = EnvConfig { battery_enabled: true, ..EnvConfig::default() };
        let data = generate_synthetic_defaults(&SyntheticProfile::default(), 0, 5.0, 288);
        assert!(ChargingEnv::new(cfg, Arc::new(one_port(10.0, 1.0)), Arc::new(data)).is_err());
    }

    #[test]
    fn battery_is_the_last_action_slot() {
        let cfg = EnvConfig { battery_enabled: true, allow_discharge: true, ..EnvConfig::default() };
        let params = PresetParams::default();
        let env = env_with(cfg, preset_station(Layout::SingleType, 2, 0, &params).unwrap());
        let (mut s, _) = env.reset(0);
        let mut a = ActionVector::hold(2, 10);
        a.0[2] = 15;
        let (_, _, _, info) = env.step(&mut s, &a).unwrap();
        let spec = env.station().battery().unwrap();
        assert!((info.battery_current_a - 0.5 * spec.i_max_a()).abs() < 1e-9);
        assert!((info.flows.e_battery_kwh - spec.voltage_v * info.battery_current_a / 1000.0 / 12.0).abs() < 1e-9);
        assert_eq!(info.flows.e_grid_net_kwh, info.flows.e_battery_kwh);
        a.0[2] = 0;
        let (_, _, _, info) = env.step(&mut s, &a).unwrap();
        assert!((info.battery_current_a + 0.5 * spec.i_max_a()).abs() < 1e-9);
        assert!(info.reward.c_degradation_battery > 0.0);
    }

    #[test]
    fn aux_series_feed_frames() {
        let mut data = generate_synthetic_defaults(&SyntheticProfile::default(), 0, 5.0, 288);
        let hours = data.prices.num_hours();
        data.aux = Some(AuxSeries {
            start_date: data.prices.start_date,
            moer_kg_per_kwh: vec![0.3; hours],
            grid_demand_kwh: vec![1.0; hours],
        });
        let f = data.frame_at(0, 0, 5.0).unwrap();
        assert_eq!((f.moer_kg_per_kwh, f.grid_demand_kwh), (Some(0.3), Some(1.0)));
        let users = UserScenarioModel { p_charge_sensitive: 0.0, ..data.users.clone() };
        assert!(crate::exogenous::Datasets::new(
            data.prices.clone(),
            data.arrivals.clone(),
            synthetic_catalog(CarRegion::Us),
            users,
            data.aux.clone()
        )
        .is_ok());
        let _ = UserScenario::Work;
    }
}
