//! Batch-based vehicle–request matching inside a buffer distance, and the
//! closed-form batch size / buffer optimum.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::network::{matching_distance, Location, Metric};
use crate::reposition::urgency;

pub type VehicleId = usize;
pub type PatronId = u64;

/// 1 / (1/S' + u * t_d), with `t_d` given in seconds and used in hours.
pub fn commercial_speed(street_speed: f64, u: usize, stop_delay_s: f64) -> f64 {
    1.0 / (1.0 / street_speed + u as f64 * stop_delay_s / 3600.0)
}

/// Pooling plus pickup delay per patron for batch size `batch` over area `area`.
pub fn delay_objective(batch: usize, area: f64, u: usize, lambda: f64, speed: f64, k: f64) -> f64 {
    let (bu, uu) = (batch as f64, u as f64);
    let tour = bu * (k * (area * uu).sqrt() / speed) * (uu / (bu + 1.0));
    let pool = uu * uu / (2.0 * lambda * area) + (bu - uu) * uu / (lambda * area);
    tour + pool
}

/// Returns `(U*, A*)`.
pub fn optimal_batch_and_area(u: usize, lambda: f64, speed: f64, k: f64) -> (usize, f64) {
    let uu = u as f64;
    let area = uu.powf(-1.0 / 3.0) * ((uu + 1.0) * speed / (k * lambda)).powf(2.0 / 3.0);
    (u, area)
}

pub fn optimal_buffer_distance(u: usize, lambda: f64, speed: f64, metric: Metric) -> f64 {
    let uu = u as f64;
    match metric {
        Metric::Manhattan => {
            (8.0 * uu).powf(-1.0 / 6.0) * ((uu + 1.0) * speed / (1.15 * lambda)).cbrt()
        }
        Metric::Euclidean => {
            let pi3 = std::f64::consts::PI.powi(3);
            (pi3 * uu).powf(-1.0 / 6.0) * ((uu + 1.0) * speed / (0.9 * lambda)).cbrt()
        }
    }
}

/// Mean distance of the u-th closest of U points with radii uniform on [0, Δ].
pub fn expected_uth_distance(u: usize, batch: usize, delta: f64) -> Result<f64> {
    if u == 0 || u > batch || !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= u <= U and delta > 0, got u={u}, U={batch}, delta={delta}"
        )));
    }
    Ok(u as f64 * delta / (batch as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferParams {
    pub u: usize,
    pub batch: usize,
    pub delta: f64,
    pub metric: Metric,
    pub k: f64,
    pub commercial_speed: f64,
}

impl BufferParams {
    pub fn optimal(u: usize, lambda: f64, street_speed: f64, stop_delay_s: f64, metric: Metric) -> Self {
        let speed = commercial_speed(street_speed, u, stop_delay_s);
        Self {
            u,
            batch: u,
            delta: optimal_buffer_distance(u, lambda, speed, metric),
            metric,
            k: metric.tour_constant(),
            commercial_speed: speed,
        }
    }
}

/// Vehicle → assigned requests, plus the queue of unmatched requests.
#[derive(Debug, Clone, Default)]
pub struct MatchMap {
    assigned: HashMap<VehicleId, Vec<PatronId>>,
    owner: HashMap<PatronId, VehicleId>,
    unmatched: BTreeSet<PatronId>,
}

impl MatchMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a new request to the unmatched queue. Ids grow with call time, so
    /// id order is call-time order.
    pub fn push_unmatched(&mut self, id: PatronId) {
        debug_assert!(!self.owner.contains_key(&id));
        self.unmatched.insert(id);
    }

    pub fn unmatched(&self) -> impl Iterator<Item = PatronId> + '_ {
        self.unmatched.iter().copied()
    }

    pub fn unmatched_len(&self) -> usize {
        self.unmatched.len()
    }

    pub fn is_unmatched(&self, id: PatronId) -> bool {
        self.unmatched.contains(&id)
    }

    pub fn assigned(&self, vehicle: VehicleId) -> &[PatronId] {
        self.assigned.get(&vehicle).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn owner(&self, id: PatronId) -> Option<VehicleId> {
        self.owner.get(&id).copied()
    }

    pub fn assign(&mut self, vehicle: VehicleId, id: PatronId) {
        self.unmatched.remove(&id);
        let prev = self.owner.insert(id, vehicle);
        assert!(prev.is_none(), "request {id} matched twice");
        self.assigned.entry(vehicle).or_default().push(id);
    }

    /// Drops a request from wherever it sits (cancellation).
    pub fn remove(&mut self, id: PatronId) {
        self.unmatched.remove(&id);
        if let Some(v) = self.owner.remove(&id) {
            if let Some(list) = self.assigned.get_mut(&v) {
                list.retain(|&p| p != id);
            }
        }
    }

    /// Clears a vehicle's assignment set and returns it.
    pub fn take(&mut self, vehicle: VehicleId) -> Vec<PatronId> {
        let list = self.assigned.remove(&vehicle).unwrap_or_default();
        for id in &list {
            self.owner.remove(id);
        }
        list
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub vehicle: VehicleId,
    pub location: Location,
    /// Current |X_n|.
    pub assigned: usize,
    /// Untruncated buffer distance for this vehicle.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingRequest {
    pub id: PatronId,
    pub location: Location,
    /// Call time, hours.
    pub call_time: f64,
}

/// Buffer distance of each candidate after capping at half the distance to
/// the nearest other candidate already receiving requests (`assigned > 0`).
/// Empty vehicles do not cap each other.
pub fn truncated_deltas(candidates: &[Candidate], metric: Metric) -> Vec<f64> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let nearest = candidates
                .iter()
                .enumerate()
                .filter(|&(j, o)| j != i && o.assigned > 0)
                .map(|(_, o)| matching_distance(c.location, o.location, metric))
                .fold(f64::INFINITY, f64::min);
            c.delta.min(0.5 * nearest)
        })
        .collect()
}

/// One round of batch matching. Candidates are served in ascending vehicle
/// id; each takes the closest in-buffer unmatched requests up to `u`.
/// Returns the new `(vehicle, request)` pairs in commit order.
pub fn match_step(
    map: &mut MatchMap,
    candidates: &[Candidate],
    pending: &[PendingRequest],
    u: usize,
    metric: Metric,
) -> Vec<(VehicleId, PatronId)> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].vehicle);
    let deltas = truncated_deltas(candidates, metric);
    let mut out = Vec::new();
    for i in order {
        let c = &candidates[i];
        let room = u.saturating_sub(c.assigned);
        if room == 0 {
            continue;
        }
        let mut in_range: Vec<(f64, PatronId)> = pending
            .iter()
            .filter(|r| map.is_unmatched(r.id))
            .map(|r| (matching_distance(c.location, r.location, metric), r.id))
            .filter(|&(d, _)| d <= deltas[i])
            .collect();
        in_range.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, id) in in_range.iter().take(room) {
            map.assign(c.vehicle, id);
            out.push((c.vehicle, id));
        }
    }
    out
}

/// Matching for a vehicle that just finished relocating: the `u - |X_n|`
/// most urgent in-range requests, ties to the lower request id.
#[allow(clippy::too_many_arguments)]
pub fn oversaturated_match(
    map: &mut MatchMap,
    vehicle: &Candidate,
    pending: &[PendingRequest],
    u: usize,
    alpha: f64,
    street_speed: f64,
    metric: Metric,
    t: f64,
) -> Vec<PatronId> {
    let room = u.saturating_sub(vehicle.assigned);
    let mut scored: Vec<(f64, PatronId)> = pending
        .iter()
        .filter(|r| map.is_unmatched(r.id))
        .filter_map(|r| {
            let d = matching_distance(vehicle.location, r.location, metric);
            (d <= vehicle.delta).then(|| (urgency(alpha, (t - r.call_time).max(0.0), d, street_speed), r.id))
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let chosen: Vec<PatronId> = scored.iter().take(room).map(|&(_, id)| id).collect();
    for &id in &chosen {
        map.assign(vehicle.vehicle, id);
    }
    chosen
}

/// Buffer-free alternative: every unmatched request, oldest first, goes to
/// the closest candidate that still has room (ties to the lower vehicle id).
pub fn nearest_vehicle_match(
    map: &mut MatchMap,
    candidates: &[Candidate],
    pending: &[PendingRequest],
    u: usize,
    metric: Metric,
) -> Vec<(VehicleId, PatronId)> {
    let mut room: Vec<usize> = candidates.iter().map(|c| u.saturating_sub(c.assigned)).collect();
    let mut reqs: Vec<&PendingRequest> = pending.iter().filter(|r| map.is_unmatched(r.id)).collect();
    reqs.sort_by_key(|r| r.id);
    let mut out = Vec::new();
    for r in reqs {
        let best = candidates
            .iter()
            .enumerate()
            .filter(|&(i, _)| room[i] > 0)
            .map(|(i, c)| (matching_distance(c.location, r.location, metric), c.vehicle, i))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if let Some((_, v, i)) = best {
            room[i] -= 1;
            map.assign(v, r.id);
            out.push((v, r.id));
        }
    }
    out
}
