//! Scenario configuration: a flat TOML document layered over the built-in
//! baseline, with `key=value` overrides on top.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::demand::{rect_rate, DemandSpec};
use crate::dispatch::{DispatchKind, DispatchPolicy, ElapsedUnit};
use crate::error::{Error, Result};
use crate::network::{build_grid, Metric, Network, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rpaf,
    Rsaf,
    Flexfbt,
    Taxi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rpaf => "rpaf",
            Mode::Rsaf => "rsaf",
            Mode::Flexfbt => "flexfbt",
            Mode::Taxi => "taxi",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rpaf" => Ok(Mode::Rpaf),
            "rsaf" => Ok(Mode::Rsaf),
            "flexfbt" => Ok(Mode::Flexfbt),
            "taxi" => Ok(Mode::Taxi),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingRule {
    /// Batch matching inside the optimal buffer distance.
    Buffer,
    /// Each request goes to the closest vehicle with room, no buffer.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zoning {
    /// Quadrants for uniform outbound demand, equal-demand strips otherwise.
    Auto,
    None,
    Quadrants,
    Strips,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub mode: Mode,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub network_file: Option<PathBuf>,
    pub region_width_km: f64,
    pub region_height_km: f64,
    pub grid_spacing_km: f64,
    pub freeway_length_km: f64,
    pub freeway_speed_kmh: f64,
    pub street_speed_kmh: f64,
    pub intersection_delay_s: f64,

    pub lambda_ob: f64,
    pub lambda_ib: f64,
    pub mu_ob: f64,
    pub mu_ib: f64,
    /// Multiplies `lambda_ob`.
    pub demand_scale: f64,
    /// Multiplies `lambda_ib`.
    pub inbound_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_trace: Option<PathBuf>,

    pub fleet: usize,
    pub capacity: usize,
    pub occupancy_target: usize,
    pub dispatch: DispatchKind,
    pub dispatch_cost: f64,
    pub value_of_time: f64,
    pub soft_target_elapsed_unit: ElapsedUnit,
    pub max_wait_h: f64,
    pub alpha: f64,
    pub metric: Metric,
    pub stop_delay_s: f64,
    pub matching: MatchingRule,

    pub zoning: Zoning,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub zone_rects: Vec<[f64; 4]>,

    pub horizon_h: f64,
    pub warmup_h: f64,
    pub step_s: f64,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub headway_min: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mode: Mode::Rpaf,
            network_file: None,
            region_width_km: 5.0,
            region_height_km: 5.0,
            grid_spacing_km: 0.1,
            freeway_length_km: 5.0,
            freeway_speed_kmh: 60.0,
            street_speed_kmh: 30.0,
            intersection_delay_s: 10.0,
            lambda_ob: 7.2,
            lambda_ib: 0.8,
            mu_ob: 0.0,
            mu_ib: 0.0,
            demand_scale: 1.0,
            inbound_scale: 1.0,
            request_trace: None,
            fleet: 27,
            capacity: 4,
            occupancy_target: 4,
            dispatch: DispatchKind::Hard,
            dispatch_cost: 18.0,
            value_of_time: 20.0,
            soft_target_elapsed_unit: ElapsedUnit::Minutes,
            max_wait_h: 0.1,
            alpha: 0.5,
            metric: Metric::Manhattan,
            stop_delay_s: 3.0,
            matching: MatchingRule::Buffer,
            zoning: Zoning::Auto,
            zone_rects: Vec::new(),
            horizon_h: 2.5,
            warmup_h: 0.5,
            step_s: 1.0,
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            headway_min: 9.42,
        }
    }
}

/// Parses a scenario document; missing keys take baseline values.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Applies `key=value` overrides, each value in TOML syntax (bare words
    /// are read as strings).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Scenario> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("round-trips");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            let raw = raw.trim();
            let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.to_string()),
            };
            table.insert(key.to_string(), value);
        }
        let text = toml::to_string(&table).expect("table serializes");
        parse_scenario(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::Config(m.to_string()));
        let positive = [
            ("region_width_km", self.region_width_km),
            ("region_height_km", self.region_height_km),
            ("grid_spacing_km", self.grid_spacing_km),
            ("freeway_length_km", self.freeway_length_km),
            ("freeway_speed_kmh", self.freeway_speed_kmh),
            ("street_speed_kmh", self.street_speed_kmh),
            ("horizon_h", self.horizon_h),
            ("step_s", self.step_s),
            ("max_wait_h", self.max_wait_h),
            ("headway_min", self.headway_min),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("intersection_delay_s", self.intersection_delay_s),
            ("lambda_ob", self.lambda_ob),
            ("lambda_ib", self.lambda_ib),
            ("mu_ob", self.mu_ob),
            ("mu_ib", self.mu_ib),
            ("demand_scale", self.demand_scale),
            ("inbound_scale", self.inbound_scale),
            ("stop_delay_s", self.stop_delay_s),
            ("warmup_h", self.warmup_h),
            ("dispatch_cost", self.dispatch_cost),
            ("value_of_time", self.value_of_time),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.warmup_h >= self.horizon_h {
            return cfg("warmup_h must be shorter than horizon_h");
        }
        if self.capacity == 0 {
            return cfg("capacity must be at least 1");
        }
        if self.fleet == 0 {
            return cfg("fleet must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return cfg("alpha must lie in [0, 1]");
        }
        if self.seeds.is_empty() {
            return cfg("seeds must not be empty");
        }
        if self.zoning == Zoning::Custom && self.zone_rects.is_empty() {
            return cfg("zoning = \"custom\" needs zone_rects");
        }
        if self.zoning != Zoning::Custom && !self.zone_rects.is_empty() {
            return cfg("zone_rects is only used with zoning = \"custom\"");
        }
        self.dispatch_policy().validate(self.capacity)?;
        Ok(())
    }

    /// Occupancy target actually used by the mode.
    pub fn effective_u(&self) -> usize {
        match self.mode {
            Mode::Taxi => 1,
            Mode::Flexfbt => self.capacity,
            _ => self.occupancy_target,
        }
    }

    pub fn effective_capacity(&self) -> usize {
        match self.mode {
            Mode::Taxi => 1,
            _ => self.capacity,
        }
    }

    pub fn dispatch_policy(&self) -> DispatchPolicy {
        DispatchPolicy {
            kind: self.dispatch,
            u: self.occupancy_target,
            dispatch_cost: self.dispatch_cost,
            value_of_time: self.value_of_time,
            tau_bar: self.max_wait_h,
            elapsed_unit: self.soft_target_elapsed_unit,
        }
    }

    pub fn demand_spec(&self, seed: u64) -> DemandSpec {
        DemandSpec {
            lambda_ob: self.lambda_ob * self.demand_scale,
            lambda_ib: self.lambda_ib * self.inbound_scale,
            mu_ob: self.mu_ob,
            mu_ib: self.mu_ib,
            horizon_h: self.horizon_h,
            seed,
        }
    }

    pub fn build_network(&self) -> Result<Network> {
        match &self.network_file {
            Some(path) => Network::read_json(path),
            None => build_grid(
                self.region_width_km,
                self.region_height_km,
                self.grid_spacing_km,
                self.freeway_length_km,
                self.street_speed_kmh,
                self.freeway_speed_kmh,
                self.intersection_delay_s,
            ),
        }
    }

    /// Zone rectangles for this scenario on `net`.
    pub fn zone_rects(&self, net: &Network) -> Vec<Rect> {
        let region = net.region();
        let snap = |v: f64, lo: f64| match net.grid_spacing() {
            Some(s) => lo + ((v - lo) / s).round() * s,
            None => v,
        };
        let quadrants = || {
            let xm = snap(region.center().x, region.x_min);
            let ym = snap(region.center().y, region.y_min);
            vec![
                Rect::new(region.x_min, region.y_min, xm, ym),
                Rect::new(region.x_min, ym, xm, region.y_max),
                Rect::new(xm, region.y_min, region.x_max, ym),
                Rect::new(xm, ym, region.x_max, region.y_max),
            ]
        };
        let strips = || {
            let mut cuts = vec![region.x_min];
            let total = rect_rate(1.0, self.mu_ob, &region);
            for k in 1..4 {
                let target = total * k as f64 / 4.0;
                let (mut lo, mut hi) = (region.x_min, region.x_max);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let part = rect_rate(1.0, self.mu_ob, &Rect::new(region.x_min, region.y_min, mid, region.y_max));
                    if part < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(snap(0.5 * (lo + hi), region.x_min));
            }
            cuts.push(region.x_max);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            cuts.windows(2)
                .map(|w| Rect::new(w[0], region.y_min, w[1], region.y_max))
                .collect()
        };
        match self.zoning {
            Zoning::None => vec![region],
            Zoning::Quadrants => quadrants(),
            Zoning::Strips => strips(),
            Zoning::Auto if self.mu_ob == 0.0 => quadrants(),
            Zoning::Auto => strips(),
            Zoning::Custom => self
                .zone_rects
                .iter()
                .map(|r| Rect::new(r[0], r[1], r[2], r[3]))
                .collect(),
        }
    }

    pub fn headway_h(&self) -> f64 {
        self.headway_min / 60.0
    }
}
