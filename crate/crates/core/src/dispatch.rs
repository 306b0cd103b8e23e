//! When a matched vehicle leaves to collect its batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchKind {
    Hard,
    Soft,
}

/// Unit in which the elapsed time enters the soft-target curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElapsedUnit {
    Hours,
    Minutes,
}

impl ElapsedUnit {
    pub fn from_hours(self, h: f64) -> f64 {
        match self {
            ElapsedUnit::Hours => h,
            ElapsedUnit::Minutes => h * 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchPolicy {
    pub kind: DispatchKind,
    pub u: usize,
    pub dispatch_cost: f64,
    pub value_of_time: f64,
    /// Maximum interval after the first assignment, hours.
    pub tau_bar: f64,
    pub elapsed_unit: ElapsedUnit,
}

impl DispatchPolicy {
    pub fn validate(&self, capacity: usize) -> Result<()> {
        if self.u == 0 || self.u > capacity {
            return Err(Error::Config(format!(
                "occupancy target must be in 1..={capacity}, got {}",
                self.u
            )));
        }
        if !(self.tau_bar > 0.0) {
            return Err(Error::Config("maximum interval must be positive".into()));
        }
        if self.kind == DispatchKind::Soft && !(self.dispatch_cost > 0.0 && self.value_of_time > 0.0) {
            return Err(Error::Config(
                "soft target needs positive dispatch cost and value of time".into(),
            ));
        }
        Ok(())
    }

    /// Current occupancy threshold after `elapsed_h` hours of waiting.
    pub fn threshold(&self, elapsed_h: f64) -> f64 {
        match self.kind {
            DispatchKind::Hard => self.u as f64,
            DispatchKind::Soft => soft_target(
                self.elapsed_unit.from_hours(elapsed_h),
                self.dispatch_cost,
                self.value_of_time,
                self.u,
            ),
        }
    }

    pub fn should_dispatch(&self, assigned: usize, clock: &DispatchClock, t: f64) -> bool {
        let Some(first) = clock.first_assignment else {
            return false;
        };
        if assigned == 0 {
            return false;
        }
        let deadline = clock.deadline(self.tau_bar).unwrap_or(first + self.tau_bar);
        if t >= deadline - 1e-12 {
            return true;
        }
        match self.kind {
            DispatchKind::Hard => assigned >= self.u,
            DispatchKind::Soft => assigned as f64 >= self.threshold(t - first),
        }
    }
}

/// `min(2 c_f / (beta tau), u)`; at `tau = 0` the cap binds.
pub fn soft_target(tau: f64, dispatch_cost: f64, value_of_time: f64, u: usize) -> f64 {
    if tau <= 0.0 {
        return u as f64;
    }
    (2.0 * dispatch_cost / (value_of_time * tau)).min(u as f64)
}

/// Deadline bookkeeping, armed at the first assignment of a batch.
///
/// The soft-target clock runs from the first assignment. The maximum
/// interval runs from the earliest call time among the batch's requests, so
/// that a dispatch always precedes that patron's tolerance running out.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DispatchClock {
    pub first_assignment: Option<f64>,
    pub first_call: Option<f64>,
}

impl DispatchClock {
    /// Starts the clock at `t` (if not yet running) for a request called at `call_time`.
    pub fn arm(&mut self, t: f64, call_time: f64) {
        if self.first_assignment.is_none() {
            self.first_assignment = Some(t);
        }
        let call = call_time.min(t);
        self.first_call = Some(self.first_call.map_or(call, |c| c.min(call)));
    }

    /// Clock started at `t` by a request called at `t`.
    pub fn armed_at(t: f64) -> Self {
        Self { first_assignment: Some(t), first_call: Some(t) }
    }

    pub fn deadline(&self, tau_bar: f64) -> Option<f64> {
        self.first_call.or(self.first_assignment).map(|t| t + tau_bar)
    }

    pub fn elapsed(&self, t: f64) -> f64 {
        self.first_assignment.map_or(0.0, |f| t - f)
    }

    pub fn reset(&mut self) {
        self.first_assignment = None;
        self.first_call = None;
    }

    pub fn is_armed(&self) -> bool {
        self.first_assignment.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waiting<'a> {
    pub vehicle: VehicleId,
    pub assigned: usize,
    pub clock: &'a DispatchClock,
}

/// Vehicles that should depart now, in ascending id order.
pub fn dispatch_step(vehicles: &[Waiting<'_>], policy: &DispatchPolicy, t: f64) -> Vec<VehicleId> {
    let mut out: Vec<VehicleId> = vehicles
        .iter()
        .filter(|w| policy.should_dispatch(w.assigned, w.clock, t))
        .map(|w| w.vehicle)
        .collect();
    out.sort_unstable();
    out
}
