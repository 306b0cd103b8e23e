//! Patron and vehicle state, and the transitions applied to them by the engine.

use std::collections::VecDeque;

use serde::Serialize;

use crate::demand::Direction;
use crate::dispatch::DispatchClock;
use crate::matching::{PatronId, VehicleId};
use crate::network::{Location, Network, NodeId, Router};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatronState {
    Unmatched,
    Matched,
    PickedUp,
    Completed,
    Canceled,
}

impl PatronState {
    pub fn as_str(self) -> &'static str {
        match self {
            PatronState::Unmatched => "unmatched",
            PatronState::Matched => "matched",
            PatronState::PickedUp => "picked_up",
            PatronState::Completed => "completed",
            PatronState::Canceled => "canceled",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, PatronState::Completed | PatronState::Canceled)
    }

    /// Whether `self -> next` is a legal life-cycle step.
    pub fn can_become(self, next: PatronState) -> bool {
        use PatronState::*;
        matches!(
            (self, next),
            (Unmatched, Matched)
                | (Matched, PickedUp)
                | (PickedUp, Completed)
                | (Unmatched, Canceled)
                | (Matched, Canceled)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patron {
    pub id: PatronId,
    pub direction: Direction,
    /// Call time, hours. Inbound patrons appear at the hub at this time.
    pub call_time: f64,
    /// Origin (outbound) or destination (inbound).
    pub location: Location,
    pub node: NodeId,
    pub zone: usize,
    pub state: PatronState,
    pub vehicle: Option<VehicleId>,
    pub pickup_time: Option<f64>,
    pub dropoff_time: Option<f64>,
    /// Could not board the first vehicle that left the hub for its zone.
    pub left_behind: bool,
}

impl Patron {
    pub fn new(id: PatronId, direction: Direction, call_time: f64, location: Location, node: NodeId, zone: usize) -> Self {
        Self {
            id,
            direction,
            call_time,
            location,
            node,
            zone,
            state: PatronState::Unmatched,
            vehicle: None,
            pickup_time: None,
            dropoff_time: None,
            left_behind: false,
        }
    }

    fn set_state(&mut self, next: PatronState) {
        assert!(
            self.state.can_become(next),
            "patron {}: illegal transition {:?} -> {:?}",
            self.id,
            self.state,
            next
        );
        self.state = next;
    }

    pub fn wait_time(&self) -> Option<f64> {
        self.pickup_time.map(|p| p - self.call_time)
    }

    pub fn ride_time(&self) -> Option<f64> {
        match (self.pickup_time, self.dropoff_time) {
            (Some(p), Some(d)) => Some(d - p),
            _ => None,
        }
    }

    pub fn trip_time(&self) -> Option<f64> {
        Some(self.wait_time()? + self.ride_time()?)
    }

    pub fn mark_matched(&mut self, vehicle: VehicleId) {
        self.set_state(PatronState::Matched);
        self.vehicle = Some(vehicle);
    }

    pub fn cancel(&mut self) {
        self.set_state(PatronState::Canceled);
        self.vehicle = None;
    }
}

/// Cancel exactly when the patron has waited strictly longer than `tau_bar`
/// and is not yet on a dispatched vehicle.
pub fn patron_cancel_check(patron: &Patron, t: f64, tau_bar: f64, vehicle_dispatched: bool) -> bool {
    match patron.state {
        PatronState::Unmatched => t - patron.call_time > tau_bar,
        PatronState::Matched => !vehicle_dispatched && t - patron.call_time > tau_bar,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Stationary (or finishing its current link) and open to assignments.
    Waiting,
    Collecting,
    Linehaul,
    Delivering,
    /// Finished inbound work; awaiting a repositioning decision.
    IdleInbound,
    Relocating,
    /// Driving back from the hub to its last pickup point; still matchable.
    Returning,
    /// Flex-FBT bus waiting at the hub.
    Parked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    Pickup,
    Dropoff,
    Hub,
    Relocate,
    Return,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stop {
    pub node: NodeId,
    pub kind: StopKind,
}

/// Position along a list of links. `progress_km` is measured on `links[idx]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Motion {
    pub links: Vec<usize>,
    pub idx: usize,
    pub progress_km: f64,
}

impl Motion {
    pub fn is_moving(&self) -> bool {
        self.idx < self.links.len()
    }

    pub fn clear(&mut self) {
        self.links.clear();
        self.idx = 0;
        self.progress_km = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub zone: usize,
    pub direction: Direction,
    pub phase: Phase,
    /// Last node reached.
    pub node: NodeId,
    pub motion: Motion,
    /// Remaining stationary time (dwell or intersection delay), seconds.
    pub hold_s: f64,
    pub aboard: Vec<PatronId>,
    pub plan: VecDeque<Stop>,
    pub clock: DispatchClock,
    pub last_pickup: Option<NodeId>,
    pub relocation_target: Option<PatronId>,
    pub just_relocated: bool,
    /// The current relocation started from the hub side.
    pub relocated_from_hub: bool,
    pub distance_km: f64,
}

impl Vehicle {
    pub fn new(id: VehicleId, zone: usize, node: NodeId, phase: Phase) -> Self {
        Self {
            id,
            zone,
            direction: Direction::Outbound,
            phase,
            node,
            motion: Motion::default(),
            hold_s: 0.0,
            aboard: Vec::new(),
            plan: VecDeque::new(),
            clock: DispatchClock::default(),
            last_pickup: None,
            relocation_target: None,
            just_relocated: false,
            relocated_from_hub: false,
            distance_km: 0.0,
        }
    }

    pub fn location(&self, net: &Network) -> Location {
        if self.motion.is_moving() && self.motion.progress_km > 0.0 {
            let link = net.link(self.motion.links[self.motion.idx]);
            let frac = self.motion.progress_km / link.length_km;
            net.location(link.from).lerp(&net.location(link.to), frac)
        } else {
            net.location(self.node)
        }
    }

    /// Node from which a new route can start: the end of the current link
    /// when part-way along it, otherwise the current node.
    pub fn anchor(&self, net: &Network) -> NodeId {
        if self.motion.is_moving() && self.motion.progress_km > 0.0 {
            net.link(self.motion.links[self.motion.idx]).to
        } else {
            self.node
        }
    }

    /// Replaces the route with the fastest path to `target`, finishing the
    /// current link first if part-way along it. Returns `false` if the
    /// vehicle is already standing at `target`.
    pub fn route_to(&mut self, router: &mut Router<'_>, target: NodeId) -> bool {
        let net = router.network();
        let mid_link = self.motion.is_moving() && self.motion.progress_km > 0.0;
        let mut links = Vec::new();
        if mid_link {
            links.push(self.motion.links[self.motion.idx]);
        }
        let from = self.anchor(net);
        let path = router
            .path(from, target)
            .expect("network is strongly connected");
        links.extend(path.links);
        let progress = if mid_link { self.motion.progress_km } else { 0.0 };
        self.motion = Motion { links, idx: 0, progress_km: progress };
        self.motion.is_moving()
    }

    /// Stop at the next node (or right here if at a node).
    pub fn halt(&mut self) {
        if self.motion.is_moving() && self.motion.progress_km > 0.0 {
            let current = self.motion.links[self.motion.idx];
            self.motion = Motion { links: vec![current], idx: 0, progress_km: self.motion.progress_km };
        } else {
            self.motion.clear();
        }
    }

    /// Moves the vehicle for `dt_s` seconds. Holds are consumed before any
    /// motion; passing an intersection adds `intersection_delay_s` of hold.
    /// Returns `true` when the end of the route is reached in this step.
    pub fn advance(&mut self, net: &Network, dt_s: f64) -> bool {
        let mut budget = dt_s;
        while budget > 1e-12 {
            if self.hold_s > 0.0 {
                let take = self.hold_s.min(budget);
                self.hold_s -= take;
                budget -= take;
                continue;
            }
            if !self.motion.is_moving() {
                break;
            }
            let link = net.link(self.motion.links[self.motion.idx]);
            let remaining = link.length_km - self.motion.progress_km;
            let needed_s = remaining / link.speed_kmh * 3600.0;
            if needed_s <= budget + 1e-9 {
                budget -= needed_s.min(budget);
                self.distance_km += remaining;
                self.node = link.to;
                self.motion.idx += 1;
                self.motion.progress_km = 0.0;
                if !self.motion.is_moving() {
                    self.motion.clear();
                    return true;
                }
                if net.is_intersection(self.node) {
                    self.hold_s += net.intersection_delay_s();
                }
            } else {
                let d = link.speed_kmh * budget / 3600.0;
                self.motion.progress_km += d;
                self.distance_km += d;
                budget = 0.0;
            }
        }
        false
    }
}

/// Boards an assigned outbound patron at the vehicle's current stop.
pub fn pickup(vehicle: &mut Vehicle, patron: &mut Patron, t: f64) {
    patron.set_state(PatronState::PickedUp);
    patron.pickup_time = Some(t);
    vehicle.aboard.push(patron.id);
    vehicle.last_pickup = Some(patron.node);
}

/// Boards an inbound patron at the hub (matched and picked up at once).
pub fn board_inbound(vehicle: &mut Vehicle, patron: &mut Patron, t: f64) {
    patron.mark_matched(vehicle.id);
    pickup(vehicle, patron, t);
}

/// Completes everyone aboard; returns how many were unloaded.
pub fn hub_unload(vehicle: &mut Vehicle, patrons: &mut [Patron], t: f64) -> usize {
    let n = vehicle.aboard.len();
    for id in vehicle.aboard.drain(..) {
        let p = &mut patrons[id as usize];
        p.set_state(PatronState::Completed);
        p.dropoff_time = Some(t);
    }
    vehicle.direction = Direction::Inbound;
    n
}

/// Boards up to `capacity` patrons FIFO from `queue`; whoever is still queued
/// afterwards is marked as left behind. Returns the boarded ids.
pub fn hub_load(
    vehicle: &mut Vehicle,
    queue: &mut VecDeque<PatronId>,
    patrons: &mut [Patron],
    capacity: usize,
    t: f64,
) -> Vec<PatronId> {
    let room = capacity.saturating_sub(vehicle.aboard.len());
    let n = room.min(queue.len());
    let boarded: Vec<PatronId> = queue.drain(..n).collect();
    for &id in &boarded {
        let p = &mut patrons[id as usize];
        p.set_state(PatronState::Matched);
        p.vehicle = Some(vehicle.id);
        p.set_state(PatronState::PickedUp);
        p.pickup_time = Some(t);
        vehicle.aboard.push(id);
    }
    for &id in queue.iter() {
        patrons[id as usize].left_behind = true;
    }
    boarded
}

/// Drops every aboard patron whose destination is `node`; returns how many.
pub fn deliver_at(vehicle: &mut Vehicle, patrons: &mut [Patron], node: NodeId, direction: Direction, t: f64) -> usize {
    let mut dropped = 0;
    vehicle.aboard.retain(|&id| {
        let p = &mut patrons[id as usize];
        if p.node == node && p.direction == direction {
            p.set_state(PatronState::Completed);
            p.dropoff_time = Some(t);
            dropped += 1;
            false
        } else {
            true
        }
    });
    dropped
}
