//! Car and station-battery physics.
//!
//! Charging speed follows a piecewise-linear curve: constant `r_bar` up to the
//! transition SoC `tau`, then a linear taper to zero at full charge. The
//! discharge curve is the charge curve mirrored around SoC 0.5.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::ChargerKind;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("state of charge {0} outside [0, 1]")]
    SocOutOfRange(f64),
    #[error("transition point tau {0} outside (0, 1)")]
    TauOutOfRange(f64),
    #[error("rate {0} must be non-negative")]
    NegativeRate(f64),
    #[error("voltage {0} must be positive")]
    NonPositiveVoltage(f64),
    #[error("capacity {0} must be positive")]
    NonPositiveCapacity(f64),
    #[error("efficiency {0} outside (0, 1]")]
    InvalidEfficiency(f64),
}

fn check_curve(soc: f64, tau: f64, r_bar_kw: f64) -> Result<(), VehicleError> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(VehicleError::SocOutOfRange(soc));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(VehicleError::TauOutOfRange(tau));
    }
    if !(r_bar_kw >= 0.0) {
        return Err(VehicleError::NegativeRate(r_bar_kw));
    }
    Ok(())
}

/// Maximum charging power (kW) at the given state of charge.
pub fn charge_limit(soc: f64, tau: f64, r_bar_kw: f64) -> Result<f64, VehicleError> {
    check_curve(soc, tau, r_bar_kw)?;
    Ok(charge_curve(soc, tau, r_bar_kw))
}

/// Maximum discharging power (kW) at the given state of charge.
pub fn discharge_limit(soc: f64, tau: f64, r_bar_kw: f64) -> Result<f64, VehicleError> {
    check_curve(soc, tau, r_bar_kw)?;
    Ok(discharge_curve(soc, tau, r_bar_kw))
}

#[inline]
pub(crate) fn charge_curve(soc: f64, tau: f64, r_bar_kw: f64) -> f64 {
    if soc <= tau {
        r_bar_kw
    } else {
        (1.0 - soc) * r_bar_kw / (1.0 - tau)
    }
}

#[inline]
pub(crate) fn discharge_curve(soc: f64, tau: f64, r_bar_kw: f64) -> f64 {
    charge_curve(1.0 - soc, tau, r_bar_kw)
}

/// Converts a power in kW to a current in A at the given voltage.
pub fn power_to_current(p_kw: f64, voltage_v: f64) -> Result<f64, VehicleError> {
    if !(voltage_v > 0.0) {
        return Err(VehicleError::NonPositiveVoltage(voltage_v));
    }
    Ok(kw_to_amps(p_kw, voltage_v))
}

#[inline]
pub(crate) fn kw_to_amps(p_kw: f64, voltage_v: f64) -> f64 {
    1000.0 * p_kw / voltage_v
}

/// Energy (kWh) moved by a constant current over `dt_h` hours.
#[inline]
pub(crate) fn energy_kwh(voltage_v: f64, current_a: f64, dt_h: f64) -> f64 {
    dt_h * voltage_v * current_a / 1000.0
}

/// Physical properties of a car model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarProfile {
    pub capacity_kwh: f64,
    pub r_max_ac_kw: f64,
    pub r_max_dc_kw: f64,
    pub tau: f64,
}

impl CarProfile {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if !(self.capacity_kwh > 0.0 && self.capacity_kwh.is_finite()) {
            return Err(VehicleError::NonPositiveCapacity(self.capacity_kwh));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(VehicleError::TauOutOfRange(self.tau));
        }
        for r in [self.r_max_ac_kw, self.r_max_dc_kw] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(VehicleError::NegativeRate(r));
            }
        }
        Ok(())
    }

    pub fn r_max_for(&self, kind: ChargerKind) -> f64 {
        match kind {
            ChargerKind::Ac => self.r_max_ac_kw,
            ChargerKind::Dc => self.r_max_dc_kw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    /// Leaves when the stay is over, whatever the charge.
    TimeSensitive = 0,
    /// Leaves once the requested energy is delivered.
    ChargeSensitive = 1,
}

/// Demand side of an arriving car.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub stay_steps: u32,
    pub energy_requested_kwh: f64,
    pub soc_arrival: f64,
    pub preference: Preference,
}

/// A parked car.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub de_remain_kwh: f64,
    /// Steps until the planned departure; negative once overstaying.
    pub dt_remain_steps: i32,
    pub soc: f64,
    /// Charging limit (kW) at the current SoC for the port's charger type.
    pub r_hat_kw: f64,
    pub profile: CarProfile,
    pub preference: Preference,
    /// Rated power for the port kind the car is connected to; fixed for the stay.
    pub r_bar_kw: f64,
    pub soc_arrival: f64,
    pub energy_requested_kwh: f64,
}

impl CarState {
    /// A car that just parked at a port of the given kind.
    pub fn arrive(profile: CarProfile, user: &UserProfile, kind: ChargerKind) -> Self {
        let r_bar_kw = profile.r_max_for(kind);
        Self {
            de_remain_kwh: user.energy_requested_kwh,
            dt_remain_steps: user.stay_steps as i32,
            soc: user.soc_arrival,
            r_hat_kw: charge_curve(user.soc_arrival, profile.tau, r_bar_kw),
            profile,
            preference: user.preference,
            r_bar_kw,
            soc_arrival: user.soc_arrival,
            energy_requested_kwh: user.energy_requested_kwh,
        }
    }

    /// Discharge limit (kW) at the current SoC.
    #[inline]
    pub fn r_hat_discharge_kw(&self) -> f64 {
        discharge_curve(self.soc, self.profile.tau, self.r_bar_kw)
    }
}

/// Integrates one interval of constant current into a parked car.
///
/// Returns the updated car and the energy actually delivered into its battery
/// (negative when discharging). Charging stops at a full battery or at the
/// requested energy, whichever comes first; discharging stops at an empty
/// battery. The remaining-time counter is not touched here.
pub fn integrate_charge(car: &CarState, voltage_v: f64, current_a: f64, dt_h: f64) -> (CarState, f64) {
    let mut next = *car;
    let raw = energy_kwh(voltage_v, current_a, dt_h);
    let cap = car.profile.capacity_kwh;
    let delivered = if raw > 0.0 {
        let headroom = cap * (1.0 - car.soc);
        if raw >= headroom && headroom <= car.de_remain_kwh {
            next.soc = 1.0;
            next.de_remain_kwh = 0.0;
            headroom
        } else {
            let d = raw.min(car.de_remain_kwh);
            next.soc = (car.soc + d / cap).min(1.0);
            next.de_remain_kwh = (car.de_remain_kwh - d).max(0.0);
            d
        }
    } else if raw < 0.0 {
        let stored = cap * car.soc;
        if -raw >= stored {
            next.soc = 0.0;
            next.de_remain_kwh = car.de_remain_kwh + stored;
            -stored
        } else {
            next.soc = (car.soc + raw / cap).max(0.0);
            next.de_remain_kwh = car.de_remain_kwh - raw;
            raw
        }
    } else {
        return (next, 0.0);
    };
    next.r_hat_kw = charge_curve(next.soc, car.profile.tau, car.r_bar_kw);
    (next, delivered)
}

/// Station battery parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySpec {
    pub voltage_v: f64,
    pub capacity_kwh: f64,
    pub r_max_kw: f64,
    pub tau: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub initial_soc: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            voltage_v: 800.0,
            capacity_kwh: 200.0,
            r_max_kw: 100.0,
            tau: 0.8,
            eta_charge: 1.0,
            eta_discharge: 1.0,
            initial_soc: 0.5,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if !(self.voltage_v > 0.0) {
            return Err(VehicleError::NonPositiveVoltage(self.voltage_v));
        }
        if !(self.capacity_kwh > 0.0) {
            return Err(VehicleError::NonPositiveCapacity(self.capacity_kwh));
        }
        if !(self.r_max_kw >= 0.0) {
            return Err(VehicleError::NegativeRate(self.r_max_kw));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(VehicleError::TauOutOfRange(self.tau));
        }
        for eta in [self.eta_charge, self.eta_discharge] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(VehicleError::InvalidEfficiency(eta));
            }
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(VehicleError::SocOutOfRange(self.initial_soc));
        }
        Ok(())
    }

    /// Current equivalent of the rated power.
    pub fn i_max_a(&self) -> f64 {
        kw_to_amps(self.r_max_kw, self.voltage_v)
    }

    pub fn initial_state(&self) -> BatteryState {
        BatteryState {
            i_battery_a: 0.0,
            soc: self.initial_soc,
            r_hat_kw: charge_curve(self.initial_soc, self.tau, self.r_max_kw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub i_battery_a: f64,
    pub soc: f64,
    pub r_hat_kw: f64,
}

impl BatteryState {
    #[inline]
    pub fn r_hat_discharge_kw(&self, spec: &BatterySpec) -> f64 {
        discharge_curve(self.soc, spec.tau, spec.r_max_kw)
    }
}

/// Integrates one interval of constant battery current.
///
/// Returns the new state and the grid-side energy `dt * V * I` (positive when
/// the battery charges), truncated so the SoC stays in `[0, 1]`. Stored energy
/// is the grid-side energy times `eta_charge` when charging and divided by
/// `eta_discharge` when discharging.
pub fn integrate_battery(batt: &BatteryState, spec: &BatterySpec, current_a: f64, dt_h: f64) -> (BatteryState, f64) {
    let mut next = *batt;
    next.i_battery_a = current_a;
    let raw = energy_kwh(spec.voltage_v, current_a, dt_h);
    let cap = spec.capacity_kwh;
    let grid_side = if raw > 0.0 {
        let headroom = cap * (1.0 - batt.soc) / spec.eta_charge;
        if raw >= headroom {
            next.soc = 1.0;
            headroom
        } else {
            next.soc = (batt.soc + raw * spec.eta_charge / cap).min(1.0);
            raw
        }
    } else if raw < 0.0 {
        let available = cap * batt.soc * spec.eta_discharge;
        if -raw >= available {
            next.soc = 0.0;
            -available
        } else {
            next.soc = (batt.soc + raw / spec.eta_discharge / cap).max(0.0);
            raw
        }
    } else {
        0.0
    };
    next.r_hat_kw = charge_curve(next.soc, spec.tau, spec.r_max_kw);
    (next, grid_side)
}
