//! Urgency-driven relocation of vehicles that finished inbound service.

use crate::matching::{PatronId, PendingRequest, VehicleId};
use crate::network::{matching_distance, Location, Metric};

/// `alpha * wait - (1 - alpha) * distance / speed`, all in hours.
pub fn urgency(alpha: f64, unmatched_time_h: f64, distance_km: f64, street_speed: f64) -> f64 {
    alpha * unmatched_time_h - (1.0 - alpha) * distance_km / street_speed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrgencyParams {
    pub alpha: f64,
    pub street_speed: f64,
    pub metric: Metric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdleVehicle {
    pub vehicle: VehicleId,
    pub location: Location,
    pub at_hub: bool,
    /// Boarding point of the last outbound pickup, if any.
    pub last_pickup: Option<Location>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    /// Drive to the request's location.
    Relocate { vehicle: VehicleId, request: PatronId },
    /// Return from the hub to the last pickup point, switching to outbound now.
    Return { vehicle: VehicleId, to: Location },
    /// Stay where the last drop-off happened, switching to outbound.
    Wait { vehicle: VehicleId },
}

/// Pairs idle vehicles with unmatched requests, highest urgency first; each
/// request and each vehicle is used at most once. Vehicles left over fall
/// through to the empty-queue rule.
pub fn reposition_step(
    idle: &[IdleVehicle],
    unmatched: &[PendingRequest],
    params: &UrgencyParams,
    t: f64,
) -> Vec<Order> {
    let mut pairs: Vec<(f64, VehicleId, PatronId, usize, usize)> = Vec::new();
    for (vi, v) in idle.iter().enumerate() {
        for (ri, r) in unmatched.iter().enumerate() {
            let d = matching_distance(v.location, r.location, params.metric);
            let w = (t - r.call_time).max(0.0);
            pairs.push((urgency(params.alpha, w, d, params.street_speed), v.vehicle, r.id, vi, ri));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut vehicle_used = vec![false; idle.len()];
    let mut request_used = vec![false; unmatched.len()];
    let mut orders = Vec::new();
    for &(_, vehicle, request, vi, ri) in &pairs {
        if vehicle_used[vi] || request_used[ri] {
            continue;
        }
        vehicle_used[vi] = true;
        request_used[ri] = true;
        orders.push(Order::Relocate { vehicle, request });
    }
    let mut rest: Vec<&IdleVehicle> = idle
        .iter()
        .enumerate()
        .filter(|&(i, _)| !vehicle_used[i])
        .map(|(_, v)| v)
        .collect();
    rest.sort_by_key(|v| v.vehicle);
    for v in rest {
        match (v.at_hub, v.last_pickup) {
            (true, Some(to)) => orders.push(Order::Return { vehicle: v.vehicle, to }),
            _ => orders.push(Order::Wait { vehicle: v.vehicle }),
        }
    }
    orders.sort_by_key(|o| match *o {
        Order::Relocate { vehicle, .. } | Order::Return { vehicle, .. } | Order::Wait { vehicle } => vehicle,
    });
    orders
}
