//! Poisson request streams with exponential distance decay away from the
//! freeway edge of the suburb.

use std::path::Path as FsPath;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Location, Rect};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "OB")]
    Outbound,
    #[serde(rename = "IB")]
    Inbound,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Outbound => "OB",
            Direction::Inbound => "IB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    /// Outbound density at the freeway edge, patrons/km²/h.
    pub lambda_ob: f64,
    pub lambda_ib: f64,
    /// Decay coefficients, 1/km (0 = uniform).
    pub mu_ob: f64,
    pub mu_ib: f64,
    pub horizon_h: f64,
    pub seed: u64,
}

impl DemandSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.lambda_ob, self.lambda_ib, self.mu_ob, self.mu_ib]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(Error::Config("demand rates and decay coefficients must be >= 0".into()));
        }
        if !(self.horizon_h > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    fn params(&self, direction: Direction) -> (f64, f64) {
        match direction {
            Direction::Outbound => (self.lambda_ob, self.mu_ob),
            Direction::Inbound => (self.lambda_ib, self.mu_ib),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub id: u64,
    /// Call time in hours.
    pub t: f64,
    pub direction: Direction,
    /// Origin for outbound requests, destination for inbound ones.
    pub x: f64,
    pub y: f64,
}

impl RequestEvent {
    pub fn point(&self) -> Location {
        Location::new(self.x, self.y)
    }
}

/// Distance from `l` to the freeway edge (the `x = 0` boundary).
pub fn edge_distance(l: Location) -> f64 {
    l.x.max(0.0)
}

pub fn intensity_at(spec: &DemandSpec, l: Location, direction: Direction) -> f64 {
    let (lambda, mu) = spec.params(direction);
    decayed(lambda, mu, l)
}

pub fn decayed(lambda: f64, mu: f64, l: Location) -> f64 {
    lambda * (-mu * edge_distance(l)).exp()
}

/// Integral of `lambda * exp(-mu * x)` over `rect` (x clamped at 0).
pub fn rect_rate(lambda: f64, mu: f64, rect: &Rect) -> f64 {
    let x0 = rect.x_min.max(0.0);
    let x1 = rect.x_max.max(0.0);
    let neg = (rect.x_max.min(0.0) - rect.x_min.min(0.0)).max(0.0);
    let along_x = if mu == 0.0 {
        x1 - x0
    } else {
        ((-mu * x0).exp() - (-mu * x1).exp()) / mu
    };
    lambda * rect.height() * (along_x + neg)
}

pub fn total_rate(spec: &DemandSpec, region: &Rect, direction: Direction) -> f64 {
    let (lambda, mu) = spec.params(direction);
    rect_rate(lambda, mu, region)
}

fn sample_point(rng: &mut ChaCha8Rng, mu: f64, region: &Rect) -> Location {
    let x0 = region.x_min.max(0.0);
    loop {
        let x = rng.random_range(region.x_min..=region.x_max);
        let y = rng.random_range(region.y_min..=region.y_max);
        let accept = (-mu * (x.max(0.0) - x0)).exp();
        if mu == 0.0 || rng.random::<f64>() < accept {
            return Location::new(x, y);
        }
    }
}

fn generate(
    spec: &DemandSpec,
    region: &Rect,
    direction: Direction,
    rng: &mut ChaCha8Rng,
) -> Vec<RequestEvent> {
    let (lambda, mu) = spec.params(direction);
    let rate = rect_rate(lambda, mu, region);
    let mut out = Vec::new();
    if !(rate > 0.0) {
        return out;
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= spec.horizon_h {
            break;
        }
        let p = sample_point(rng, mu, region);
        out.push(RequestEvent {
            id: out.len() as u64,
            t,
            direction,
            x: p.x,
            y: p.y,
        });
    }
    out
}

pub fn generate_outbound(spec: &DemandSpec, region: &Rect, rng: &mut ChaCha8Rng) -> Vec<RequestEvent> {
    generate(spec, region, Direction::Outbound, rng)
}

pub fn generate_inbound(spec: &DemandSpec, region: &Rect, rng: &mut ChaCha8Rng) -> Vec<RequestEvent> {
    generate(spec, region, Direction::Inbound, rng)
}

/// Both directions from independent streams of `spec.seed`, merged by call
/// time and renumbered so ids increase with call time.
pub fn generate_requests(spec: &DemandSpec, region: &Rect) -> Vec<RequestEvent> {
    let mut ob = generate_outbound(spec, region, &mut rng::stream(spec.seed, rng::OUTBOUND));
    let ib = generate_inbound(spec, region, &mut rng::stream(spec.seed, rng::INBOUND));
    ob.extend(ib);
    renumber(ob)
}

fn renumber(mut events: Vec<RequestEvent>) -> Vec<RequestEvent> {
    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then(a.direction.cmp(&b.direction))
    });
    for (i, e) in events.iter_mut().enumerate() {
        e.id = i as u64;
    }
    events
}

pub fn write_trace(path: &FsPath, events: &[RequestEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a request trace; events are re-sorted by call time and renumbered.
pub fn read_trace(path: &FsPath) -> Result<Vec<RequestEvent>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut events = Vec::new();
    for rec in r.deserialize() {
        let e: RequestEvent = rec?;
        if !(e.t >= 0.0) || !e.point().is_finite() {
            return Err(Error::Config(format!("trace event {} is malformed", e.id)));
        }
        events.push(e);
    }
    Ok(renumber(events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda_ob: f64, mu: f64) -> DemandSpec {
        DemandSpec {
            lambda_ob,
            lambda_ib: 0.8,
            mu_ob: mu,
            mu_ib: mu,
            horizon_h: 2.5,
            seed: 7,
        }
    }

    #[test]
    fn intensity_examples() {
        let s = spec(7.2, 0.0);
        assert_eq!(intensity_at(&s, Location::new(3.0, 1.0), Direction::Outbound), 7.2);
        let s = spec(7.2, 0.1);
        let v = intensity_at(&s, Location::new(5.0, 0.0), Direction::Outbound);
        assert!((v - 7.2 * (-0.5f64).exp()).abs() < 1e-12);
        let near = intensity_at(&s, Location::new(0.0, 0.0), Direction::Outbound);
        let far = intensity_at(&s, Location::new(10.0, 0.0), Direction::Outbound);
        assert!((near / far - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_gives_empty_stream() {
        let region = Rect::new(0.0, -2.5, 5.0, 2.5);
        let mut s = spec(0.0, 0.0);
        s.lambda_ib = 0.0;
        assert!(generate_requests(&s, &region).is_empty());
    }

    #[test]
    fn rect_rate_uniform() {
        let region = Rect::new(0.0, -2.5, 5.0, 2.5);
        assert!((rect_rate(7.2, 0.0, &region) - 180.0).abs() < 1e-9);
    }

    #[test]
    fn merged_ids_follow_call_time() {
        let region = Rect::new(0.0, -2.5, 5.0, 2.5);
        let ev = generate_requests(&spec(7.2, 0.1), &region);
        assert!(ev.windows(2).all(|w| w[0].t <= w[1].t && w[0].id < w[1].id));
        assert!(ev.iter().all(|e| region.contains(e.point())));
    }
}
