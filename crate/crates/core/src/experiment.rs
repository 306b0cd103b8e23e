//! Replications, parameter sweeps and fleet-size comparisons.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::dispatch::DispatchKind;
use crate::engine::{run_on, Metrics, RunOptions, RunOutput};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::scenario::{Mode, Scenario};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "FEEDERSIM_WORKERS";

/// Largest fleet tried by [`compare_modes`].
pub const DEFAULT_FLEET_CAP: usize = 80;

pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers.or_else(workers_from_env) {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Seeds for which the metric was defined.
    pub n: usize,
}

pub const METRIC_NAMES: [&str; 8] = [
    "service_rate",
    "outbound_service_rate",
    "avg_wait_h",
    "avg_ride_h",
    "avg_trip_h",
    "vehicle_km",
    "avg_occupancy",
    "leftover_pct",
];

pub fn metric_value(m: &Metrics, name: &str) -> Option<f64> {
    match name {
        "service_rate" => m.service_rate,
        "outbound_service_rate" => m.outbound_service_rate,
        "avg_wait_h" => m.avg_wait_h,
        "avg_ride_h" => m.avg_ride_h,
        "avg_trip_h" => m.avg_trip_h,
        "vehicle_km" => Some(m.vehicle_km),
        "avg_occupancy" => m.avg_occupancy,
        "leftover_pct" => m.leftover_pct,
        _ => None,
    }
}

/// Whether a metric is reported as a time (hours) rather than a rate or count.
pub fn is_time_metric(name: &str) -> bool {
    name.ends_with("_h")
}

/// Mean and sample standard deviation. Values are sorted first so the
/// result does not depend on input order.
pub fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(sd))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub runs: Vec<RunOutput>,
    pub summary: Vec<Summary>,
}

impl Replication {
    pub fn from_runs(runs: Vec<RunOutput>) -> Self {
        let summary = summarize(&runs);
        Self { runs, summary }
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.runs.iter().filter_map(|r| metric_value(&r.metrics, metric)).collect()
    }

    pub fn median(&self, metric: &str) -> Option<f64> {
        median(&self.values(metric))
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.metric == metric).and_then(|s| s.mean)
    }
}

fn summarize(runs: &[RunOutput]) -> Vec<Summary> {
    METRIC_NAMES
        .iter()
        .map(|&name| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| metric_value(&r.metrics, name)).collect();
            let (mean, sd) = mean_sd(&vals);
            Summary { metric: name, mean, sd, n: vals.len() }
        })
        .collect()
}

/// Runs one replication per seed on a shared network. Results are in seed order.
pub fn replicate_on(
    net: &Network,
    sc: &Scenario,
    seeds: &[u64],
    options: RunOptions,
    workers: Option<usize>,
) -> Result<Replication> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    sc.validate()?;
    let runs = pool(workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_on(net, sc, s, options))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Replication::from_runs(runs))
}

pub fn replicate(sc: &Scenario, seeds: &[u64]) -> Result<Replication> {
    let net = sc.build_network()?;
    replicate_on(&net, sc, seeds, RunOptions::default(), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DemandScale,
    InboundScale,
    Fleet,
    U,
    Alpha,
    Policy,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::DemandScale => "demand_scale",
            SweepAxis::InboundScale => "inbound_scale",
            SweepAxis::Fleet => "fleet",
            SweepAxis::U => "u",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Policy => "policy",
        }
    }

    /// Returns the scenario with this axis set to `value`.
    pub fn apply(self, sc: &Scenario, value: &str) -> Result<Scenario> {
        let bad = || Error::InvalidArgument(format!("invalid {} value '{value}'", self.as_str()));
        let num = || value.trim().parse::<f64>().map_err(|_| bad());
        let int = || value.trim().parse::<usize>().map_err(|_| bad());
        let mut out = sc.clone();
        match self {
            SweepAxis::DemandScale => out.demand_scale = num()?,
            SweepAxis::InboundScale => out.inbound_scale = num()?,
            SweepAxis::Fleet => out.fleet = int()?,
            SweepAxis::U => out.occupancy_target = int()?,
            SweepAxis::Alpha => out.alpha = num()?,
            SweepAxis::Policy => {
                if sc.mode != Mode::Rpaf {
                    return Err(Error::InvalidArgument(format!(
                        "policy axis applies to rpaf only, not {}",
                        sc.mode.as_str()
                    )));
                }
                out.dispatch = match value.trim() {
                    "hard" => DispatchKind::Hard,
                    "soft" => DispatchKind::Soft,
                    _ => return Err(bad()),
                }
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "demand_scale" => SweepAxis::DemandScale,
            "inbound_scale" => SweepAxis::InboundScale,
            "fleet" => SweepAxis::Fleet,
            "u" | "occupancy_target" => SweepAxis::U,
            "alpha" => SweepAxis::Alpha,
            "policy" | "dispatch" => SweepAxis::Policy,
            _ => return Err(Error::InvalidArgument(format!("unknown sweep axis '{s}'"))),
        })
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub replication: Replication,
}

pub fn sweep(sc: &Scenario, axis: SweepAxis, values: &[String], seeds: &[u64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    let scenarios = values
        .iter()
        .map(|v| axis.apply(sc, v))
        .collect::<Result<Vec<_>>>()?;
    let net = sc.build_network()?;
    scenarios
        .iter()
        .zip(values)
        .map(|(s, v)| {
            Ok(SweepPoint {
                value: v.clone(),
                replication: replicate_on(&net, s, seeds, RunOptions::default(), None)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub mode: &'static str,
    /// Smallest fleet meeting the target, or the largest fleet tried if none did.
    pub fleet: usize,
    pub attainable: bool,
    pub service_rate: Option<f64>,
    pub avg_trip_h: Option<f64>,
    pub avg_wait_h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareSettings {
    pub target_service_rate: f64,
    pub fleet_cap: usize,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self { target_service_rate: 90.0, fleet_cap: DEFAULT_FLEET_CAP }
    }
}

struct Probe {
    fleet: usize,
    rate: f64,
    rep: Replication,
}

fn probe(net: &Network, sc: &Scenario, fleet: usize, seeds: &[u64]) -> Result<Probe> {
    let s = Scenario { fleet, ..sc.clone() };
    let rep = replicate_on(net, &s, seeds, RunOptions::default(), None)?;
    // No resolved request means nothing was refused.
    let rate = rep.median("service_rate").unwrap_or(100.0);
    Ok(Probe { fleet, rate, rep })
}

fn row(mode: Mode, p: &Probe, attainable: bool) -> CompareRow {
    CompareRow {
        mode: mode.as_str(),
        fleet: p.fleet,
        attainable,
        service_rate: Some(p.rate),
        avg_trip_h: p.rep.median("avg_trip_h"),
        avg_wait_h: p.rep.median("avg_wait_h"),
    }
}

/// Smallest fleet whose median service rate reaches the target, found by
/// bisection between one vehicle per zone and the fleet cap.
pub fn min_fleet_for(sc: &Scenario, target: f64, cap: usize, seeds: &[u64]) -> Result<CompareRow> {
    let net = sc.build_network()?;
    let zones = sc.zone_rects(&net).len();
    let cap = cap.max(zones);
    let low = probe(&net, sc, zones, seeds)?;
    if low.rate >= target {
        return Ok(row(sc.mode, &low, true));
    }
    let high = probe(&net, sc, cap, seeds)?;
    if high.rate < target {
        return Ok(row(sc.mode, &high, false));
    }
    let (mut lo, mut hi) = (low, high);
    while hi.fleet - lo.fleet > 1 {
        let mid = probe(&net, sc, (lo.fleet + hi.fleet) / 2, seeds)?;
        if mid.rate >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(row(sc.mode, &hi, true))
}

pub fn compare_modes(sc: &Scenario, modes: &[Mode], settings: CompareSettings, seeds: &[u64]) -> Result<Vec<CompareRow>> {
    if modes.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two modes".into()));
    }
    modes
        .iter()
        .map(|&m| min_fleet_for(&Scenario { mode: m, ..sc.clone() }, settings.target_service_rate, settings.fleet_cap, seeds))
        .collect()
}

/// Service rate and trip time of each mode at one fixed fleet size.
pub fn fixed_fleet(sc: &Scenario, modes: &[Mode], fleet: usize, seeds: &[u64]) -> Result<Vec<CompareRow>> {
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no modes given".into()));
    }
    let net = sc.build_network()?;
    modes
        .iter()
        .map(|&m| {
            let p = probe(&net, &Scenario { mode: m, ..sc.clone() }, fleet, seeds)?;
            Ok(row(m, &p, true))
        })
        .collect()
}
