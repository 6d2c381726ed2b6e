//! Vehicle parameters and the energy/time arithmetic derived from them.
//!
//! All distances here are straight-line km. Usable range is the nominal
//! range multiplied by `route_scale`, so a leg of `d` km consumes
//! `d / (max_range_km * route_scale)` of the battery.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::ChargeKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvError {
    #[error("invalid vehicle parameters: {0}")]
    Params(String),
    #[error("state of charge must decrease along a leg ({from} -> {to})")]
    SocOrder { from: f64, to: f64 },
    #[error("charging target {to} below starting state of charge {from}")]
    ChargeOrder { from: f64, to: f64 },
    #[error("effective charging power is zero")]
    ZeroPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvParams {
    pub battery_kwh: f64,
    pub speed_kph: f64,
    pub max_range_km: f64,
    /// Vehicle DC acceptance limit.
    pub dc_charge_kw: f64,
    /// On-board charger limit for AC points.
    pub onboard_ac_limit_kw: f64,
    pub reserve_soc: f64,
    pub charge_target_soc: f64,
    pub route_scale: f64,
    /// SoC required on arrival at the final destination; `None` means
    /// the same as `reserve_soc`.
    pub destination_reserve_soc: Option<f64>,
    pub start_soc: f64,
}

impl Default for EvParams {
    fn default() -> Self {
        Self {
            battery_kwh: 24.0,
            speed_kph: 90.0,
            max_range_km: 110.0,
            dc_charge_kw: 45.0,
            onboard_ac_limit_kw: 22.0,
            reserve_soc: 0.20,
            charge_target_soc: 0.80,
            route_scale: 0.85,
            destination_reserve_soc: None,
            start_soc: 1.0,
        }
    }
}

impl EvParams {
    pub fn validate(&self) -> Result<(), EvError> {
        let positive = [
            ("battery_kwh", self.battery_kwh),
            ("speed_kph", self.speed_kph),
            ("max_range_km", self.max_range_km),
            ("dc_charge_kw", self.dc_charge_kw),
            ("onboard_ac_limit_kw", self.onboard_ac_limit_kw),
            ("route_scale", self.route_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EvError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        let ordered = 0.0 <= self.reserve_soc
            && self.reserve_soc < self.charge_target_soc
            && self.charge_target_soc <= 1.0;
        if !ordered {
            return Err(EvError::Params(format!(
                "need 0 <= reserve ({}) < charge target ({}) <= 1",
                self.reserve_soc, self.charge_target_soc
            )));
        }
        let dest = self.destination_reserve();
        if !(0.0..self.charge_target_soc).contains(&dest) {
            return Err(EvError::Params(format!(
                "destination reserve {dest} outside [0, charge target)"
            )));
        }
        if !(self.reserve_soc..=1.0).contains(&self.start_soc) {
            return Err(EvError::Params(format!("start soc {} outside [reserve, 1]", self.start_soc)));
        }
        Ok(())
    }

    pub fn destination_reserve(&self) -> f64 {
        self.destination_reserve_soc.unwrap_or(self.reserve_soc)
    }

    pub fn energy_per_km(&self) -> f64 {
        self.battery_kwh / self.max_range_km
    }

    /// Straight-line km per unit of SoC.
    pub fn usable_range_km(&self) -> f64 {
        self.max_range_km * self.route_scale
    }

    /// SoC consumed by a straight-line leg.
    pub fn soc_for_km(&self, km: f64) -> f64 {
        km / self.usable_range_km()
    }

    pub fn max_leg_km(&self, from_soc: f64, to_soc: f64) -> Result<f64, EvError> {
        if from_soc <= to_soc {
            return Err(EvError::SocOrder {
                from: from_soc,
                to: to_soc,
            });
        }
        Ok((from_soc - to_soc) * self.max_range_km * self.route_scale)
    }

    /// Power the vehicle actually draws at a point of the given kind.
    pub fn effective_power_kw(&self, kind: ChargeKind, point_power_kw: f64) -> f64 {
        let limit = match kind {
            ChargeKind::Dc => self.dc_charge_kw,
            ChargeKind::Ac => self.onboard_ac_limit_kw,
        };
        point_power_kw.min(limit)
    }

    /// Constant-power charging time in hours at an already-capped power.
    pub fn charge_duration_h(&self, from_soc: f64, to_soc: f64, power_kw: f64) -> Result<f64, EvError> {
        if to_soc < from_soc {
            return Err(EvError::ChargeOrder {
                from: from_soc,
                to: to_soc,
            });
        }
        if to_soc == from_soc {
            return Ok(0.0);
        }
        if !(power_kw > 0.0) {
            return Err(EvError::ZeroPower);
        }
        Ok((to_soc - from_soc) * self.battery_kwh / power_kw)
    }

    /// Long-run average speed of a drive/recharge cycle between the
    /// reserve and the charge target, using the unscaled range.
    pub fn effective_speed_kph(&self, power_kw: f64) -> Result<f64, EvError> {
        let span = self.charge_target_soc - self.reserve_soc;
        let cycle_km = span * self.max_range_km;
        let charge_h = self.charge_duration_h(self.reserve_soc, self.charge_target_soc, power_kw)?;
        Ok(cycle_km / (cycle_km / self.speed_kph + charge_h))
    }
}
