//! Time-stepped operator loop.
//!
//! Each step runs, in this order: inject new requests, cancel impatient
//! patrons, match, dispatch (with tour planning), reposition, move vehicles
//! (handling arrivals), then check invariants if asked. Reordering these
//! phases changes results.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path as FsPath;

use rand::Rng;
use serde::Serialize;

use crate::agents::{
    deliver_at, hub_load, hub_unload, patron_cancel_check, pickup, Patron, PatronState, Phase,
    Stop, StopKind, Vehicle,
};
use crate::baselines::{flexfbt_zone_step, rsaf_match_step, rsaf_route_next, FlexSchedule, RsafCandidate};
use crate::demand::{decayed, generate_requests, read_trace, rect_rate, Direction, RequestEvent};
use crate::dispatch::{dispatch_step, DispatchPolicy, Waiting};
use crate::error::Result;
use crate::matching::{
    commercial_speed, match_step, nearest_vehicle_match, optimal_buffer_distance, oversaturated_match, Candidate,
    MatchMap, PatronId, PendingRequest, VehicleId,
};
use crate::network::{partition_zones, zone_of, Location, Network, NodeId, Router, Zone};
use crate::reposition::{reposition_step, IdleVehicle, Order, UrgencyParams};
use crate::rng;
use crate::routing::plan_node_tour;
use crate::scenario::{MatchingRule, Mode, Scenario};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Check conservation, occupancy and movement invariants every step.
    pub check_invariants: bool,
    /// Record a vehicle state row every this many steps.
    pub trace_every: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneMetrics {
    pub zone: usize,
    pub fleet: usize,
    pub requests: usize,
    pub completed: usize,
    pub canceled: usize,
    pub avg_trip_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub requests: usize,
    pub completed: usize,
    pub canceled: usize,
    pub in_system: usize,
    /// Percent of post-warm-up requests completed among those resolved.
    pub service_rate: Option<f64>,
    pub outbound_service_rate: Option<f64>,
    pub avg_wait_h: Option<f64>,
    pub avg_ride_h: Option<f64>,
    pub avg_trip_h: Option<f64>,
    pub vehicle_km: f64,
    /// Mean patrons aboard when an outbound vehicle starts its line-haul.
    pub avg_occupancy: Option<f64>,
    /// Percent of inbound patrons who could not board the first vehicle.
    pub leftover_pct: Option<f64>,
    pub zones: Vec<ZoneMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripRecord {
    pub id: PatronId,
    pub direction: &'static str,
    pub zone: usize,
    pub call_time_h: f64,
    pub pickup_time_h: Option<f64>,
    pub dropoff_time_h: Option<f64>,
    pub wait_h: Option<f64>,
    pub ride_h: Option<f64>,
    pub status: &'static str,
    pub left_behind: bool,
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t_h: f64,
    pub vehicle: VehicleId,
    pub zone: usize,
    pub phase: Phase,
    pub direction: &'static str,
    pub x: f64,
    pub y: f64,
    pub aboard: usize,
    pub assigned: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub metrics: Metrics,
    pub trips: Vec<TripRecord>,
    pub trace: Vec<TraceRow>,
    pub violations: Vec<String>,
}

impl RunOutput {
    pub fn write_trips(&self, path: &FsPath) -> Result<()> {
        write_csv(path, &self.trips)
    }

    pub fn write_trace(&self, path: &FsPath) -> Result<()> {
        write_csv(path, &self.trace)
    }

    /// The trip log as CSV text.
    pub fn trips_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.trips {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn write_csv<T: Serialize>(path: &FsPath, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub struct Simulation<'n> {
    sc: Scenario,
    seed: u64,
    net: &'n Network,
    router: Router<'n>,
    zones: Vec<Zone>,
    u: usize,
    capacity: usize,
    policy: DispatchPolicy,
    speed_u: f64,
    lambda_ob: f64,
    requests: Vec<RequestEvent>,
    next_request: usize,
    patrons: Vec<Patron>,
    vehicles: Vec<Vehicle>,
    map: MatchMap,
    hub_queues: Vec<VecDeque<PatronId>>,
    flex: Vec<FlexSchedule>,
    zone_centres: Vec<NodeId>,
    step: u64,
    total_steps: u64,
    linehaul_loads: Vec<(f64, usize)>,
    options: RunOptions,
    violations: Vec<String>,
    trace: Vec<TraceRow>,
}

impl<'n> Simulation<'n> {
    pub fn new(net: &'n Network, sc: &Scenario, seed: u64, options: RunOptions) -> Result<Self> {
        sc.validate()?;
        let spec = sc.demand_spec(seed);
        let region = net.region();
        let requests: Vec<RequestEvent> = match &sc.request_trace {
            Some(path) => read_trace(path)?
                .into_iter()
                .filter(|e| e.t < sc.horizon_h)
                .collect(),
            None => generate_requests(&spec, &region),
        };

        let rects = sc.zone_rects(net);
        let (lambda, mu) = (spec.lambda_ob, spec.mu_ob);
        let zones = partition_zones(net, &rects, &|r| rect_rate(lambda, mu, r), sc.fleet)?;

        let mut zone_nodes: Vec<Vec<NodeId>> = vec![Vec::new(); zones.len()];
        for n in net.suburb_nodes() {
            zone_nodes[zone_of(&zones, net.location(n))].push(n);
        }
        let zone_centres: Vec<NodeId> = zones.iter().map(|z| net.snap(z.rect.center())).collect();

        let mut placement = rng::stream(seed, rng::PLACEMENT);
        let mut vehicles = Vec::with_capacity(sc.fleet);
        for z in &zones {
            for _ in 0..z.fleet_share {
                let id = vehicles.len();
                let v = if sc.mode == Mode::Flexfbt {
                    Vehicle::new(id, z.id, net.hub(), Phase::Parked)
                } else {
                    let nodes = &zone_nodes[z.id];
                    let node = if nodes.is_empty() {
                        zone_centres[z.id]
                    } else {
                        nodes[placement.random_range(0..nodes.len())]
                    };
                    Vehicle::new(id, z.id, node, Phase::Waiting)
                };
                vehicles.push(v);
            }
        }

        let u = sc.effective_u();
        Ok(Self {
            seed,
            net,
            router: Router::new(net),
            u,
            capacity: sc.effective_capacity(),
            policy: DispatchPolicy { u, ..sc.dispatch_policy() },
            speed_u: commercial_speed(sc.street_speed_kmh, u, sc.stop_delay_s),
            lambda_ob: spec.lambda_ob,
            requests,
            next_request: 0,
            patrons: Vec::new(),
            vehicles,
            map: MatchMap::new(),
            hub_queues: vec![VecDeque::new(); zones.len()],
            flex: vec![FlexSchedule::new(sc.headway_h()); zones.len()],
            zone_centres,
            zones,
            step: 0,
            total_steps: (sc.horizon_h * 3600.0 / sc.step_s).round() as u64,
            linehaul_loads: Vec::new(),
            options,
            violations: Vec::new(),
            trace: Vec::new(),
            sc: sc.clone(),
        })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn patrons(&self) -> &[Patron] {
        &self.patrons
    }

    pub fn match_map(&self) -> &MatchMap {
        &self.map
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Clock at the start of the current step, hours.
    pub fn now(&self) -> f64 {
        self.step as f64 * self.sc.step_s / 3600.0
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.total_steps
    }

    pub fn step(&mut self) {
        let t = self.now();
        self.inject(t);
        self.cancel(t);
        match self.sc.mode {
            Mode::Rpaf => {
                self.match_rpaf(t);
                self.dispatch_rpaf(t);
                self.reposition(t);
            }
            Mode::Rsaf | Mode::Taxi => {
                self.match_rsaf(t);
                self.reposition(t);
            }
            Mode::Flexfbt => self.flex_departures(t),
        }
        let t_next = (self.step + 1) as f64 * self.sc.step_s / 3600.0;
        self.advance_all(t_next);
        if self.options.check_invariants {
            self.check_invariants(t_next);
        }
        if let Some(every) = self.options.trace_every {
            if every > 0 && self.step.is_multiple_of(every) {
                self.record_trace(t_next);
            }
        }
        self.step += 1;
    }

    pub fn run_to_end(mut self) -> RunOutput {
        while !self.is_finished() {
            self.step();
        }
        self.finish()
    }

    fn inject(&mut self, t: f64) {
        while let Some(e) = self.requests.get(self.next_request) {
            if e.t > t + 1e-12 {
                break;
            }
            let e = *e;
            self.next_request += 1;
            let loc = e.point();
            let id = self.patrons.len() as PatronId;
            debug_assert_eq!(id, e.id);
            let zone = zone_of(&self.zones, loc);
            self.patrons
                .push(Patron::new(id, e.direction, e.t, loc, self.net.snap(loc), zone));
            match e.direction {
                Direction::Outbound => self.map.push_unmatched(id),
                Direction::Inbound => self.hub_queues[zone].push_back(id),
            }
        }
    }

    fn is_dispatched(&self, v: VehicleId) -> bool {
        !matches!(self.vehicles[v].phase, Phase::Waiting | Phase::Returning)
    }

    fn cancel(&mut self, t: f64) {
        let tau_bar = self.sc.max_wait_h;
        let mut victims: Vec<PatronId> = Vec::new();
        for id in self.map.unmatched() {
            let p = &self.patrons[id as usize];
            if t - p.call_time <= tau_bar {
                break;
            }
            if patron_cancel_check(p, t, tau_bar, false) {
                victims.push(id);
            }
        }
        for v in 0..self.vehicles.len() {
            if self.is_dispatched(v) {
                continue;
            }
            for &id in self.map.assigned(v) {
                if patron_cancel_check(&self.patrons[id as usize], t, tau_bar, false) {
                    victims.push(id);
                }
            }
        }
        for id in victims {
            self.patrons[id as usize].cancel();
            let owner = self.map.owner(id);
            self.map.remove(id);
            if let Some(v) = owner {
                if self.map.assigned(v).is_empty() {
                    self.vehicles[v].clock.reset();
                }
            }
        }
    }

    fn pending_in_zone(&self, zone: usize) -> Vec<PendingRequest> {
        self.map
            .unmatched()
            .map(|id| &self.patrons[id as usize])
            .filter(|p| p.zone == zone)
            .map(|p| PendingRequest { id: p.id, location: p.location, call_time: p.call_time })
            .collect()
    }

    fn delta_at(&self, loc: Location) -> f64 {
        let lambda = decayed(self.lambda_ob, self.sc.mu_ob, loc);
        if lambda > 0.0 {
            optimal_buffer_distance(self.u, lambda, self.speed_u, self.sc.metric)
        } else {
            f64::INFINITY
        }
    }

    fn on_assigned(&mut self, v: VehicleId, id: PatronId, t: f64) {
        self.patrons[id as usize].mark_matched(v);
        let call = self.patrons[id as usize].call_time;
        let veh = &mut self.vehicles[v];
        veh.clock.arm(t, call);
        if veh.phase == Phase::Returning {
            veh.plan.clear();
            veh.halt();
            veh.phase = Phase::Waiting;
        }
    }

    fn match_rpaf(&mut self, t: f64) {
        for z in 0..self.zones.len() {
            let pending = self.pending_in_zone(z);
            for v in 0..self.vehicles.len() {
                if self.vehicles[v].zone != z || !self.vehicles[v].just_relocated {
                    continue;
                }
                self.vehicles[v].just_relocated = false;
                if pending.is_empty() {
                    continue;
                }
                let loc = self.vehicles[v].location(self.net);
                let cand = Candidate {
                    vehicle: v,
                    location: loc,
                    assigned: self.map.assigned(v).len(),
                    delta: self.delta_at(loc),
                };
                let chosen = oversaturated_match(
                    &mut self.map,
                    &cand,
                    &pending,
                    self.u,
                    self.sc.alpha,
                    self.sc.street_speed_kmh,
                    self.sc.metric,
                    t,
                );
                for id in chosen {
                    self.on_assigned(v, id, t);
                }
            }
            if pending.iter().all(|r| !self.map.is_unmatched(r.id)) {
                continue;
            }
            let cands: Vec<Candidate> = self
                .vehicles
                .iter()
                .filter(|v| {
                    v.zone == z
                        && v.direction == Direction::Outbound
                        && matches!(v.phase, Phase::Waiting | Phase::Returning)
                        && v.aboard.is_empty()
                        && self.map.assigned(v.id).len() < self.u
                })
                .map(|v| {
                    let loc = v.location(self.net);
                    Candidate {
                        vehicle: v.id,
                        location: loc,
                        assigned: self.map.assigned(v.id).len(),
                        delta: self.delta_at(loc),
                    }
                })
                .collect();
            if cands.is_empty() {
                continue;
            }
            let new = match self.sc.matching {
                MatchingRule::Buffer => match_step(&mut self.map, &cands, &pending, self.u, self.sc.metric),
                MatchingRule::Nearest => {
                    nearest_vehicle_match(&mut self.map, &cands, &pending, self.u, self.sc.metric)
                }
            };
            for (v, id) in new {
                self.on_assigned(v, id, t);
            }
        }
    }

    fn dispatch_rpaf(&mut self, t: f64) {
        // Decide against the end of the step: a deadline falling inside this
        // step must beat the next step's cancellation check.
        let t_end = t + self.sc.step_s / 3600.0;
        let ready: Vec<VehicleId> = {
            let waiting: Vec<Waiting<'_>> = self
                .vehicles
                .iter()
                .filter(|v| v.phase == Phase::Waiting && !self.map.assigned(v.id).is_empty())
                .map(|v| Waiting { vehicle: v.id, assigned: self.map.assigned(v.id).len(), clock: &v.clock })
                .collect();
            dispatch_step(&waiting, &self.policy, t_end)
        };
        for v in ready {
            self.start_collection(v, t);
        }
    }

    fn pending_pickups(&self, v: VehicleId) -> Vec<NodeId> {
        self.map
            .assigned(v)
            .iter()
            .map(|&id| &self.patrons[id as usize])
            .filter(|p| p.state == PatronState::Matched && p.direction == Direction::Outbound)
            .map(|p| p.node)
            .collect()
    }

    fn start_collection(&mut self, v: VehicleId, t: f64) {
        let nodes = self.pending_pickups(v);
        let anchor = self.vehicles[v].anchor(self.net);
        let (order, _) = plan_node_tour(&mut self.router, anchor, &nodes).expect("suburb is connected");
        let veh = &mut self.vehicles[v];
        veh.clock.reset();
        veh.phase = Phase::Collecting;
        veh.plan.clear();
        if nodes.contains(&anchor) {
            veh.plan.push_back(Stop { node: anchor, kind: StopKind::Pickup });
        }
        for n in order {
            veh.plan.push_back(Stop { node: n, kind: StopKind::Pickup });
        }
        veh.plan.push_back(Stop { node: self.net.hub(), kind: StopKind::Hub });
        self.begin_leg(v, t);
    }

    fn match_rsaf(&mut self, t: f64) {
        for z in 0..self.zones.len() {
            let pending = self.pending_in_zone(z);
            if pending.is_empty() {
                continue;
            }
            let cands: Vec<RsafCandidate> = self
                .vehicles
                .iter()
                .filter(|v| {
                    v.zone == z
                        && v.direction == Direction::Outbound
                        && matches!(v.phase, Phase::Waiting | Phase::Returning | Phase::Collecting)
                        && v.aboard.is_empty()
                })
                .map(|v| RsafCandidate {
                    vehicle: v.id,
                    location: v.location(self.net),
                    assigned: self.map.assigned(v.id).len(),
                    boarded: !v.aboard.is_empty(),
                })
                .collect();
            if cands.is_empty() {
                continue;
            }
            let new = rsaf_match_step(&mut self.map, &cands, &pending, self.u, self.sc.metric);
            let mut touched = BTreeSet::new();
            for (v, id) in new {
                self.patrons[id as usize].mark_matched(v);
                touched.insert(v);
            }
            for v in touched {
                let veh = &mut self.vehicles[v];
                veh.phase = Phase::Collecting;
                veh.plan.clear();
                self.plan_rsaf_next(v);
                self.begin_leg(v, t);
            }
        }
    }

    /// Greedy next stop for RSaF and taxis: nearest remaining pickup, then the hub.
    fn plan_rsaf_next(&mut self, v: VehicleId) {
        let remaining = self.pending_pickups(v);
        let anchor = self.vehicles[v].anchor(self.net);
        let next = rsaf_route_next(&mut self.router, anchor, &remaining);
        let veh = &mut self.vehicles[v];
        match next {
            Some(node) => veh.plan.push_back(Stop { node, kind: StopKind::Pickup }),
            None => veh.plan.push_back(Stop { node: self.net.hub(), kind: StopKind::Hub }),
        }
    }

    fn reposition(&mut self, t: f64) {
        let params = UrgencyParams {
            alpha: self.sc.alpha,
            street_speed: self.sc.street_speed_kmh,
            metric: self.sc.metric,
        };
        for z in 0..self.zones.len() {
            let idle_ids: Vec<VehicleId> = self
                .vehicles
                .iter()
                .filter(|v| v.zone == z)
                .filter(|v| match v.phase {
                    Phase::IdleInbound => true,
                    Phase::Relocating => v
                        .relocation_target
                        .is_none_or(|r| !self.map.is_unmatched(r)),
                    _ => false,
                })
                .map(|v| v.id)
                .collect();
            if idle_ids.is_empty() {
                continue;
            }
            let targeted: BTreeSet<PatronId> = self
                .vehicles
                .iter()
                .filter(|v| v.phase == Phase::Relocating && !idle_ids.contains(&v.id))
                .filter_map(|v| v.relocation_target)
                .collect();
            let pending: Vec<PendingRequest> = self
                .pending_in_zone(z)
                .into_iter()
                .filter(|r| !targeted.contains(&r.id))
                .collect();
            let idle: Vec<IdleVehicle> = idle_ids
                .iter()
                .map(|&v| {
                    let veh = &self.vehicles[v];
                    let back = veh.last_pickup.unwrap_or(self.zone_centres[z]);
                    IdleVehicle {
                        vehicle: v,
                        location: veh.location(self.net),
                        // Anything short of the suburb streets counts as the hub side.
                        at_hub: self.on_hub_side(veh) || (veh.phase == Phase::Relocating && veh.relocated_from_hub),
                        last_pickup: Some(self.net.location(back)),
                    }
                })
                .collect();
            for order in reposition_step(&idle, &pending, &params, t) {
                match order {
                    Order::Relocate { vehicle, request } => {
                        let node = self.patrons[request as usize].node;
                        let from_hub = idle.iter().any(|i| i.vehicle == vehicle && i.at_hub);
                        let veh = &mut self.vehicles[vehicle];
                        veh.relocated_from_hub = from_hub;
                        veh.phase = Phase::Relocating;
                        veh.relocation_target = Some(request);
                        veh.plan.clear();
                        veh.plan.push_back(Stop { node, kind: StopKind::Relocate });
                        self.begin_leg(vehicle, t);
                    }
                    Order::Return { vehicle, to } => {
                        let node = self.net.snap(to);
                        let veh = &mut self.vehicles[vehicle];
                        veh.direction = Direction::Outbound;
                        veh.phase = Phase::Returning;
                        veh.relocation_target = None;
                        veh.plan.clear();
                        veh.plan.push_back(Stop { node, kind: StopKind::Return });
                        self.begin_leg(vehicle, t);
                    }
                    Order::Wait { vehicle } => {
                        let veh = &mut self.vehicles[vehicle];
                        veh.direction = Direction::Outbound;
                        veh.phase = Phase::Waiting;
                        veh.relocation_target = None;
                        veh.plan.clear();
                        veh.halt();
                    }
                }
            }
        }
    }

    fn on_hub_side(&self, v: &Vehicle) -> bool {
        let anchor = v.anchor(self.net);
        anchor == self.net.hub() || anchor == self.net.connection() || !self.net.is_intersection(anchor)
    }

    fn flex_departures(&mut self, t: f64) {
        for z in 0..self.zones.len() {
            let backlog: Vec<PatronId> = self
                .map
                .unmatched()
                .filter(|&id| self.patrons[id as usize].zone == z)
                .collect();
            let bus = self
                .vehicles
                .iter()
                .find(|v| v.zone == z && v.phase == Phase::Parked)
                .map(|v| v.id);
            let Some(dep) = flexfbt_zone_step(
                &mut self.flex[z],
                &backlog,
                self.hub_queues[z].len(),
                bus.is_some(),
                self.capacity,
                t,
            ) else {
                continue;
            };
            let v = bus.expect("departure needs a bus");
            for &id in &dep.outbound {
                self.map.assign(v, id);
                self.patrons[id as usize].mark_matched(v);
            }
            let boarded = {
                let veh = &mut self.vehicles[v];
                hub_load(veh, &mut self.hub_queues[z], &mut self.patrons, self.capacity, t)
            };
            let hub = self.net.hub();
            let drop_nodes: Vec<NodeId> = boarded.iter().map(|&id| self.patrons[id as usize].node).collect();
            let (drops, _) = plan_node_tour(&mut self.router, hub, &drop_nodes).expect("connected");
            let from = drops.last().copied().unwrap_or(hub);
            let pick_nodes = self.pending_pickups(v);
            let (picks, _) = plan_node_tour(&mut self.router, from, &pick_nodes).expect("connected");
            let veh = &mut self.vehicles[v];
            veh.plan.clear();
            for n in drops {
                veh.plan.push_back(Stop { node: n, kind: StopKind::Dropoff });
            }
            if pick_nodes.contains(&from) {
                veh.plan.push_back(Stop { node: from, kind: StopKind::Pickup });
            }
            for n in picks {
                veh.plan.push_back(Stop { node: n, kind: StopKind::Pickup });
            }
            veh.plan.push_back(Stop { node: hub, kind: StopKind::Hub });
            if boarded.is_empty() {
                veh.direction = Direction::Outbound;
                veh.phase = Phase::Collecting;
            } else {
                veh.direction = Direction::Inbound;
                veh.phase = Phase::Delivering;
                veh.hold_s += self.sc.stop_delay_s;
            }
            self.begin_leg(v, t);
        }
    }

    /// Routes the vehicle to its next stop, handling stops it is already at.
    fn begin_leg(&mut self, v: VehicleId, t: f64) {
        loop {
            let Some(stop) = self.vehicles[v].plan.front().copied() else {
                return;
            };
            if self.vehicles[v].route_to(&mut self.router, stop.node) {
                return;
            }
            self.arrive(v, t);
        }
    }

    fn arrive(&mut self, v: VehicleId, t: f64) {
        let Some(stop) = self.vehicles[v].plan.pop_front() else {
            return;
        };
        let dwell = self.sc.stop_delay_s;
        match stop.kind {
            StopKind::Pickup => {
                let here: Vec<PatronId> = self
                    .map
                    .assigned(v)
                    .iter()
                    .copied()
                    .filter(|&id| {
                        let p = &self.patrons[id as usize];
                        p.node == stop.node && p.state == PatronState::Matched
                    })
                    .collect();
                let veh = &mut self.vehicles[v];
                for &id in &here {
                    pickup(veh, &mut self.patrons[id as usize], t);
                }
                if !here.is_empty() {
                    veh.hold_s += dwell;
                }
                if matches!(self.sc.mode, Mode::Rsaf | Mode::Taxi) {
                    self.plan_rsaf_next(v);
                }
                self.maybe_start_linehaul(v, t);
            }
            StopKind::Hub => {
                let veh = &mut self.vehicles[v];
                hub_unload(veh, &mut self.patrons, t);
                self.map.take(v);
                veh.hold_s += dwell;
                if self.sc.mode == Mode::Flexfbt {
                    veh.direction = Direction::Outbound;
                    veh.phase = Phase::Parked;
                    return;
                }
                let z = veh.zone;
                let boarded = hub_load(veh, &mut self.hub_queues[z], &mut self.patrons, self.capacity, t);
                if boarded.is_empty() {
                    veh.phase = Phase::IdleInbound;
                    return;
                }
                let nodes: Vec<NodeId> = boarded.iter().map(|&id| self.patrons[id as usize].node).collect();
                let (order, _) = plan_node_tour(&mut self.router, self.net.hub(), &nodes).expect("connected");
                let veh = &mut self.vehicles[v];
                veh.phase = Phase::Delivering;
                for n in order {
                    veh.plan.push_back(Stop { node: n, kind: StopKind::Dropoff });
                }
            }
            StopKind::Dropoff => {
                let veh = &mut self.vehicles[v];
                if deliver_at(veh, &mut self.patrons, stop.node, Direction::Inbound, t) > 0 {
                    veh.hold_s += dwell;
                }
                let inbound_left = veh
                    .aboard
                    .iter()
                    .any(|&id| self.patrons[id as usize].direction == Direction::Inbound);
                if !inbound_left {
                    if self.sc.mode == Mode::Flexfbt {
                        veh.direction = Direction::Outbound;
                        veh.phase = Phase::Collecting;
                        self.maybe_start_linehaul(v, t);
                    } else {
                        veh.phase = Phase::IdleInbound;
                        veh.plan.clear();
                    }
                }
            }
            StopKind::Relocate => {
                let veh = &mut self.vehicles[v];
                veh.direction = Direction::Outbound;
                veh.phase = Phase::Waiting;
                veh.relocation_target = None;
                veh.just_relocated = true;
            }
            StopKind::Return | StopKind::Halt => {
                self.vehicles[v].phase = Phase::Waiting;
            }
        }
    }

    fn maybe_start_linehaul(&mut self, v: VehicleId, t: f64) {
        let veh = &mut self.vehicles[v];
        if matches!(veh.plan.front(), Some(s) if s.kind == StopKind::Hub) && veh.phase != Phase::Linehaul {
            veh.phase = Phase::Linehaul;
            self.linehaul_loads.push((t, veh.aboard.len()));
        }
    }

    fn advance_all(&mut self, t_next: f64) {
        let dt = self.sc.step_s;
        let max_speed = self
            .net
            .links()
            .iter()
            .map(|l| l.speed_kmh)
            .fold(0.0, f64::max);
        for v in 0..self.vehicles.len() {
            let before = self.vehicles[v].location(self.net);
            let arrived = self.vehicles[v].advance(self.net, dt);
            if arrived && !self.vehicles[v].plan.is_empty() {
                self.arrive(v, t_next);
                self.begin_leg(v, t_next);
            }
            if self.options.check_invariants {
                let after = self.vehicles[v].location(self.net);
                let moved = (after.x - before.x).abs() + (after.y - before.y).abs();
                // Manhattan displacement can exceed path length only on diagonal
                // links; allow the sqrt(2) factor.
                let limit = max_speed * dt / 3600.0 * std::f64::consts::SQRT_2 + 1e-9;
                if moved > limit {
                    self.violations
                        .push(format!("t={t_next:.6}: vehicle {v} moved {moved:.4} km in one step"));
                }
            }
        }
    }

    fn check_invariants(&mut self, t: f64) {
        let mut counts = [0usize; 5];
        for p in &self.patrons {
            counts[p.state as usize] += 1;
        }
        let [unmatched, matched, picked, completed, canceled] = counts;
        let mut errs = Vec::new();
        if unmatched + matched + picked + completed + canceled != self.patrons.len() {
            errs.push("patron states do not add up".to_string());
        }
        let queued: usize = self.hub_queues.iter().map(VecDeque::len).sum();
        if unmatched != self.map.unmatched_len() + queued {
            errs.push(format!(
                "{unmatched} unmatched patrons but {} in the outbound queue and {queued} at the hub",
                self.map.unmatched_len()
            ));
        }
        let aboard: usize = self.vehicles.iter().map(|v| v.aboard.len()).sum();
        if picked != aboard {
            errs.push(format!("{picked} patrons picked up but {aboard} aboard vehicles"));
        }
        let mut assigned_waiting = 0;
        for v in &self.vehicles {
            let x = self.map.assigned(v.id);
            assigned_waiting += x
                .iter()
                .filter(|&&id| self.patrons[id as usize].state == PatronState::Matched)
                .count();
            if x.len() > self.u {
                errs.push(format!("vehicle {} holds {} assignments (u = {})", v.id, x.len(), self.u));
            }
            let outbound_aboard = v
                .aboard
                .iter()
                .filter(|&&id| self.patrons[id as usize].direction == Direction::Outbound)
                .count();
            if outbound_aboard > self.u || v.aboard.len() > self.capacity {
                errs.push(format!("vehicle {} carries {} patrons", v.id, v.aboard.len()));
            }
        }
        if assigned_waiting != matched {
            errs.push(format!("{matched} matched patrons but {assigned_waiting} awaiting pickup"));
        }
        for e in errs {
            self.violations.push(format!("t={t:.6}: {e}"));
        }
    }

    fn record_trace(&mut self, t: f64) {
        for v in &self.vehicles {
            let loc = v.location(self.net);
            self.trace.push(TraceRow {
                t_h: t,
                vehicle: v.id,
                zone: v.zone,
                phase: v.phase,
                direction: v.direction.as_str(),
                x: loc.x,
                y: loc.y,
                aboard: v.aboard.len(),
                assigned: self.map.assigned(v.id).len(),
            });
        }
    }

    pub fn finish(self) -> RunOutput {
        let warmup = self.sc.warmup_h;
        let trips: Vec<TripRecord> = self
            .patrons
            .iter()
            .map(|p| {
                let status = match p.state {
                    PatronState::Completed => "completed",
                    PatronState::Canceled => "canceled",
                    _ => "in_system",
                };
                TripRecord {
                    id: p.id,
                    direction: p.direction.as_str(),
                    zone: p.zone,
                    call_time_h: p.call_time,
                    pickup_time_h: p.pickup_time,
                    dropoff_time_h: p.dropoff_time,
                    wait_h: if p.state == PatronState::Completed { p.wait_time() } else { None },
                    ride_h: p.ride_time(),
                    status,
                    left_behind: p.left_behind,
                    warmup: p.call_time < warmup,
                }
            })
            .collect();
        let metrics = compute_metrics(&self.patrons, &self.vehicles, &self.zones, &self.linehaul_loads, warmup);
        RunOutput { seed: self.seed, metrics, trips, trace: self.trace, violations: self.violations }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for x in xs {
        n += 1;
        s += x;
    }
    (n > 0).then(|| s / n as f64)
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn compute_metrics(
    patrons: &[Patron],
    vehicles: &[Vehicle],
    zones: &[Zone],
    loads: &[(f64, usize)],
    warmup: f64,
) -> Metrics {
    let post: Vec<&Patron> = patrons.iter().filter(|p| p.call_time >= warmup).collect();
    let done: Vec<&&Patron> = post.iter().filter(|p| p.state == PatronState::Completed).collect();
    let count = |f: &dyn Fn(&Patron) -> bool| post.iter().filter(|p| f(p)).count();
    let completed = done.len();
    let canceled = count(&|p| p.state == PatronState::Canceled);
    let ob_completed = count(&|p| p.direction == Direction::Outbound && p.state == PatronState::Completed);
    let ob_canceled = count(&|p| p.direction == Direction::Outbound && p.state == PatronState::Canceled);
    let inbound = count(&|p| p.direction == Direction::Inbound);
    let leftover = count(&|p| p.direction == Direction::Inbound && p.left_behind);

    let zone_metrics = zones
        .iter()
        .map(|z| {
            let in_zone: Vec<&&Patron> = post.iter().filter(|p| p.zone == z.id).collect();
            ZoneMetrics {
                zone: z.id,
                fleet: z.fleet_share,
                requests: in_zone.len(),
                completed: in_zone.iter().filter(|p| p.state == PatronState::Completed).count(),
                canceled: in_zone.iter().filter(|p| p.state == PatronState::Canceled).count(),
                avg_trip_h: mean(in_zone.iter().filter_map(|p| {
                    (p.state == PatronState::Completed).then(|| p.trip_time()).flatten()
                })),
            }
        })
        .collect();

    Metrics {
        requests: post.len(),
        completed,
        canceled,
        in_system: post.len() - completed - canceled,
        service_rate: percent(completed, completed + canceled),
        outbound_service_rate: percent(ob_completed, ob_completed + ob_canceled),
        avg_wait_h: mean(done.iter().filter_map(|p| p.wait_time())),
        avg_ride_h: mean(done.iter().filter_map(|p| p.ride_time())),
        avg_trip_h: mean(done.iter().filter_map(|p| p.trip_time())),
        vehicle_km: vehicles.iter().map(|v| v.distance_km).sum(),
        avg_occupancy: mean(loads.iter().filter(|l| l.0 >= warmup).map(|l| l.1 as f64)),
        leftover_pct: percent(leftover, inbound),
        zones: zone_metrics,
    }
}

/// Runs one replication on a prebuilt network.
pub fn run_on(net: &Network, sc: &Scenario, seed: u64, options: RunOptions) -> Result<RunOutput> {
    Ok(Simulation::new(net, sc, seed, options)?.run_to_end())
}

/// Builds the scenario's network and runs one replication with `sc.seed`.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    let net = sc.build_network()?;
    run_on(&net, sc, sc.seed, RunOptions::default())
}

