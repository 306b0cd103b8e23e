//! Comparison systems: instant ride-sharing (RSaF), non-shared taxi,
//! headway-dispatched flexible feeder buses (Flex-FBT), and the ride-matching
//! check for trips that stay inside the suburb.

use crate::matching::{MatchMap, PatronId, PendingRequest, VehicleId};
use crate::network::{matching_distance, Location, Metric, NodeId, Router};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsafCandidate {
    pub vehicle: VehicleId,
    pub location: Location,
    pub assigned: usize,
    /// Whether the first assigned patron is already aboard.
    pub boarded: bool,
}

/// Every unmatched request (oldest first) goes to the nearest vehicle that
/// has nobody aboard yet and fewer than `u` assignments; ties to the lower id.
pub fn rsaf_match_step(
    map: &mut MatchMap,
    candidates: &[RsafCandidate],
    pending: &[PendingRequest],
    u: usize,
    metric: Metric,
) -> Vec<(VehicleId, PatronId)> {
    let mut load: Vec<usize> = candidates.iter().map(|c| c.assigned).collect();
    let mut reqs: Vec<&PendingRequest> = pending.iter().filter(|r| map.is_unmatched(r.id)).collect();
    reqs.sort_by_key(|r| r.id);
    let mut out = Vec::new();
    for r in reqs {
        let best = candidates
            .iter()
            .enumerate()
            .filter(|&(i, c)| !c.boarded && load[i] < u)
            .map(|(i, c)| (matching_distance(c.location, r.location, metric), c.vehicle, i))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if let Some((_, v, i)) = best {
            load[i] += 1;
            map.assign(v, r.id);
            out.push((v, r.id));
        }
    }
    out
}

/// Non-shared taxi: RSaF with one patron per vehicle.
pub fn taxi_step(
    map: &mut MatchMap,
    candidates: &[RsafCandidate],
    pending: &[PendingRequest],
    metric: Metric,
) -> Vec<(VehicleId, PatronId)> {
    rsaf_match_step(map, candidates, pending, 1, metric)
}

/// Greedy next stop: the remaining pickup node reachable soonest from
/// `from`, ties to the lower node id. `None` means head to the hub.
pub fn rsaf_route_next(router: &mut Router<'_>, from: NodeId, remaining: &[NodeId]) -> Option<NodeId> {
    remaining
        .iter()
        .map(|&n| (router.time_us(from, n).unwrap_or(u64::MAX), n))
        .min()
        .map(|(_, n)| n)
}

/// Per-zone headway clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexSchedule {
    pub headway_h: f64,
    pub next_departure: f64,
}

impl FlexSchedule {
    pub fn new(headway_h: f64) -> Self {
        Self { headway_h, next_departure: headway_h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexDeparture {
    pub outbound: Vec<PatronId>,
    pub inbound: usize,
}

/// One zone's departure decision. `backlog` is the zone's unserved outbound
/// requests in call order. A bus leaves when the backlog fills a bus, or when
/// the headway fires with a nonempty backlog; either way the next headway is
/// counted from now. A firing with an empty backlog just restarts the clock.
pub fn flexfbt_zone_step(
    schedule: &mut FlexSchedule,
    backlog: &[PatronId],
    inbound_waiting: usize,
    bus_available: bool,
    capacity: usize,
    t: f64,
) -> Option<FlexDeparture> {
    let due = t >= schedule.next_departure - 1e-12;
    if backlog.is_empty() {
        if due {
            schedule.next_departure = t + schedule.headway_h;
        }
        return None;
    }
    if !bus_available {
        return None;
    }
    if backlog.len() >= capacity || due {
        schedule.next_departure = t + schedule.headway_h;
        let take = backlog.len().min(capacity);
        return Some(FlexDeparture {
            outbound: backlog[..take].to_vec(),
            inbound: inbound_waiting.min(capacity),
        });
    }
    None
}

/// A seeker riding from `origin` to `destination`, now at `current`.
/// Vehicles travel the horizontal leg first, then the vertical one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmTrip {
    pub origin: Location,
    pub destination: Location,
    pub current: Location,
    /// Horizontal distance already traveled, km.
    pub traveled: f64,
}

impl RmTrip {
    /// Horizontal distance between origin and destination.
    pub fn horizontal_span(&self) -> f64 {
        (self.destination.x - self.origin.x).abs()
    }

    pub fn is_live(&self) -> bool {
        self.traveled < self.horizontal_span()
    }

    /// Maps a point into the frame where the destination lies up and to the
    /// right of the origin.
    fn frame(&self, p: Location) -> Location {
        let sx = if self.destination.x >= self.origin.x { 1.0 } else { -1.0 };
        let sy = if self.destination.y >= self.origin.y { 1.0 } else { -1.0 };
        Location::new(sx * (p.x - self.origin.x), sy * (p.y - self.origin.y))
    }
}

/// Whether a taker going `a -> b` can share the seeker's vehicle without
/// detour and be picked up within `tau_bar` at speed `speed`. `region` bounds
/// the area beyond the seeker's destination.
pub fn rm_check(
    seeker: &RmTrip,
    a: Location,
    b: Location,
    tau_bar: f64,
    speed: f64,
    region: &crate::network::Rect,
) -> bool {
    if !seeker.is_live() {
        return false;
    }
    let c = seeker.frame(seeker.current);
    let d = seeker.frame(seeker.destination);
    let fa = seeker.frame(a);
    let fb = seeker.frame(b);

    // Origin: ahead of the vehicle and within reach before the patience runs out.
    let reach = matching_distance(a, seeker.current, Metric::Manhattan) <= tau_bar * speed;
    let ahead = fa.x >= c.x && fa.y >= c.y;
    if !(reach && ahead) {
        return false;
    }

    // Destination: up-right of the taker's origin, either inside the box
    // between the vehicle and the seeker's destination, or beyond it.
    if !(fb.x >= fa.x && fb.y >= fa.y) {
        return false;
    }
    let in_r1 = fb.x >= c.x && fb.x <= d.x && fb.y >= c.y && fb.y <= d.y;
    let in_r2 = fb.x >= d.x && fb.y >= d.y && region.contains(b);
    in_r1 || in_r2
}

/// A taker request for [`rm_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmTaker {
    /// Hours after the seeker boarded.
    pub t: f64,
    pub origin: Location,
    pub destination: Location,
}

/// Runs the ride-matching loop for one seeker: the vehicle moves along the
/// horizontal leg at `speed`; each taker arising while the leg is unfinished
/// is checked against the vehicle's position at that time. Returns the index
/// of the first matched taker.
pub fn rm_scan(
    origin: Location,
    destination: Location,
    takers: &[RmTaker],
    tau_bar: f64,
    speed: f64,
    region: &crate::network::Rect,
) -> Option<usize> {
    let span = (destination.x - origin.x).abs();
    let dir = if destination.x >= origin.x { 1.0 } else { -1.0 };
    for (i, tk) in takers.iter().enumerate() {
        let z = speed * tk.t;
        if z >= span {
            break;
        }
        let trip = RmTrip {
            origin,
            destination,
            current: Location::new(origin.x + dir * z, origin.y),
            traveled: z,
        };
        if rm_check(&trip, tk.origin, tk.destination, tau_bar, speed, region) {
            return Some(i);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Rect;

    fn region() -> Rect {
        Rect::new(0.0, 0.0, 10.0, 10.0)
    }

    fn seeker() -> RmTrip {
        RmTrip {
            origin: Location::new(0.0, 0.0),
            destination: Location::new(6.0, 4.0),
            current: Location::new(1.0, 0.0),
            traveled: 1.0,
        }
    }

    #[test]
    fn origin_feasibility_threshold() {
        let s = seeker();
        let reach = 0.1 * 30.0;
        let b = Location::new(5.0, 3.0);
        assert!(rm_check(&s, Location::new(1.0 + reach, 0.0), b, 0.1, 30.0, &region()));
        assert!(!rm_check(&s, Location::new(1.0 + reach + 1e-6, 0.0), b, 0.1, 30.0, &region()));
    }

    #[test]
    fn destination_feasibility() {
        let s = seeker();
        let a = Location::new(2.0, 1.0);
        assert!(rm_check(&s, a, Location::new(8.0, 7.0), 0.1, 30.0, &region()));
        assert!(rm_check(&s, a, Location::new(4.0, 3.0), 0.1, 30.0, &region()));
        // Down-left of A inside R1 needs a detour.
        assert!(!rm_check(&s, a, Location::new(1.5, 0.5), 0.1, 30.0, &region()));
    }

    #[test]
    fn finished_leg_stops_matching() {
        let mut s = seeker();
        s.traveled = 6.0;
        assert!(!rm_check(&s, Location::new(2.0, 1.0), Location::new(4.0, 3.0), 0.1, 30.0, &region()));
    }

    #[test]
    fn flex_full_bus_departs_immediately() {
        let mut s = FlexSchedule::new(9.42 / 60.0);
        let d = flexfbt_zone_step(&mut s, &[1, 2, 3, 4], 0, true, 4, 0.01).unwrap();
        assert_eq!(d.outbound, vec![1, 2, 3, 4]);
        assert!((s.next_departure - (0.01 + 9.42 / 60.0)).abs() < 1e-12);
    }

    #[test]
    fn flex_headway_fires_with_partial_backlog() {
        let mut s = FlexSchedule::new(0.1);
        assert!(flexfbt_zone_step(&mut s, &[1, 2], 3, true, 4, 0.05).is_none());
        let d = flexfbt_zone_step(&mut s, &[1, 2], 3, true, 4, 0.1).unwrap();
        assert_eq!(d.outbound, vec![1, 2]);
        assert_eq!(d.inbound, 3);
    }

    #[test]
    fn flex_empty_backlog_restarts_clock() {
        let mut s = FlexSchedule::new(0.1);
        assert!(flexfbt_zone_step(&mut s, &[], 2, true, 4, 0.1).is_none());
        assert!((s.next_departure - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rsaf_stops_after_first_boarding() {
        let mut map = MatchMap::new();
        map.push_unmatched(7);
        let reqs = [PendingRequest { id: 7, location: Location::new(0.0, 0.0), call_time: 0.0 }];
        let cands = [
            RsafCandidate { vehicle: 0, location: Location::new(0.1, 0.0), assigned: 1, boarded: true },
            RsafCandidate { vehicle: 1, location: Location::new(2.0, 0.0), assigned: 0, boarded: false },
        ];
        assert_eq!(rsaf_match_step(&mut map, &cands, &reqs, 4, Metric::Manhattan), vec![(1, 7)]);
    }

    #[test]
    fn rsaf_tie_goes_to_lower_id() {
        let mut map = MatchMap::new();
        map.push_unmatched(0);
        let reqs = [PendingRequest { id: 0, location: Location::new(0.0, 0.0), call_time: 0.0 }];
        let cands = [
            RsafCandidate { vehicle: 4, location: Location::new(1.0, 0.0), assigned: 0, boarded: false },
            RsafCandidate { vehicle: 2, location: Location::new(0.0, 1.0), assigned: 0, boarded: false },
        ];
        assert_eq!(rsaf_match_step(&mut map, &cands, &reqs, 4, Metric::Manhattan), vec![(2, 0)]);
    }

    #[test]
    fn taxi_takes_one_patron() {
        let mut map = MatchMap::new();
        map.push_unmatched(0);
        map.push_unmatched(1);
        let reqs = [
            PendingRequest { id: 0, location: Location::new(0.0, 0.0), call_time: 0.0 },
            PendingRequest { id: 1, location: Location::new(0.1, 0.0), call_time: 0.0 },
        ];
        let cands = [RsafCandidate { vehicle: 0, location: Location::ORIGIN, assigned: 0, boarded: false }];
        assert_eq!(taxi_step(&mut map, &cands, &reqs, Metric::Manhattan), vec![(0, 0)]);
        assert!(map.is_unmatched(1));
    }
}
