use feedersim::baselines::{
    flexfbt_zone_step, rm_check, rm_scan, rsaf_match_step, rsaf_route_next, taxi_step, FlexSchedule, RmTaker, RmTrip,
    RsafCandidate,
};
use feedersim::dispatch::{dispatch_step, soft_target, DispatchClock, DispatchKind, DispatchPolicy, ElapsedUnit, Waiting};
use feedersim::matching::{MatchMap, PendingRequest};
use feedersim::network::{build_grid, Location, Metric, Rect, Router};
use feedersim::reposition::{reposition_step, urgency, IdleVehicle, Order, UrgencyParams};
use feedersim::routing::plan_node_tour;
use proptest::prelude::*;

fn hard() -> DispatchPolicy {
    DispatchPolicy {
        kind: DispatchKind::Hard,
        u: 4,
        dispatch_cost: 18.0,
        value_of_time: 20.0,
        tau_bar: 0.1,
        elapsed_unit: ElapsedUnit::Hours,
    }
}

#[test]
fn soft_target_examples() {
    assert_eq!(soft_target(0.45, 18.0, 20.0, 4), 4.0);
    assert!((soft_target(0.6, 18.0, 20.0, 4) - 3.0).abs() < 1e-12);
    assert!((soft_target(0.9, 18.0, 20.0, 4) - 2.0).abs() < 1e-12);
    assert_eq!(soft_target(0.0, 18.0, 20.0, 4), 4.0);
    assert_eq!(soft_target(1e-9, 18.0, 20.0, 4), 4.0);
}

#[test]
fn hard_target_dispatches_on_full_batch_or_deadline() {
    let clock = DispatchClock::armed_at(0.0);
    let p = hard();
    assert!(p.should_dispatch(4, &clock, 0.01));
    assert!(!p.should_dispatch(2, &clock, 0.05));
    assert!(p.should_dispatch(2, &clock, 0.1));
    assert!(!p.should_dispatch(0, &DispatchClock::default(), 5.0));
}

#[test]
fn soft_target_dispatches_at_the_crossing() {
    let p = DispatchPolicy { kind: DispatchKind::Soft, tau_bar: 2.0, ..hard() };
    let clock = DispatchClock::armed_at(0.0);
    assert!(p.should_dispatch(3, &clock, 0.6));
    assert!(!p.should_dispatch(3, &clock, 0.5));
}

#[test]
fn dispatch_step_lists_ready_vehicles_in_id_order() {
    let c0 = DispatchClock::armed_at(0.0);
    let c1 = DispatchClock::armed_at(0.05);
    let waiting = [
        Waiting { vehicle: 7, assigned: 4, clock: &c1 },
        Waiting { vehicle: 2, assigned: 1, clock: &c0 },
        Waiting { vehicle: 5, assigned: 1, clock: &c1 },
    ];
    assert_eq!(dispatch_step(&waiting, &hard(), 0.1), vec![2, 7]);
}

#[test]
fn cleared_clock_is_idle() {
    let mut c = DispatchClock::armed_at(0.2);
    c.reset();
    assert!(!c.is_armed());
    c.reset();
    assert_eq!(c, DispatchClock::default());
}

#[test]
fn urgency_examples() {
    assert_eq!(urgency(1.0, 0.05, 3.0, 30.0), 0.05);
    assert!((urgency(0.0, 0.05, 3.0, 30.0) + 0.1).abs() < 1e-15);
    assert!((urgency(0.5, 0.05, 1.0, 30.0) - (0.025 - 1.0 / 60.0)).abs() < 1e-12);
    assert!((urgency(0.5, 0.05, 1.0, 30.0) - 0.00833).abs() < 1e-5);
}

fn params(alpha: f64) -> UrgencyParams {
    UrgencyParams { alpha, street_speed: 30.0, metric: Metric::Manhattan }
}

fn idle(vehicle: usize, x: f64, y: f64) -> IdleVehicle {
    IdleVehicle { vehicle, location: Location::new(x, y), at_hub: false, last_pickup: None }
}

#[test]
fn longest_waiting_request_attracts_the_vehicle_when_alpha_is_one() {
    let reqs = [
        PendingRequest { id: 0, location: Location::new(0.1, 0.0), call_time: 0.05 },
        PendingRequest { id: 1, location: Location::new(4.0, 2.0), call_time: 0.01 },
    ];
    let orders = reposition_step(&[idle(0, 0.0, 0.0)], &reqs, &params(1.0), 0.08);
    assert_eq!(orders, vec![Order::Relocate { vehicle: 0, request: 1 }]);
}

#[test]
fn one_request_two_vehicles_leaves_one_on_the_fallback() {
    let reqs = [PendingRequest { id: 3, location: Location::new(1.0, 0.0), call_time: 0.0 }];
    let hub_side = IdleVehicle { at_hub: true, last_pickup: Some(Location::new(2.0, 1.0)), ..idle(1, -5.0, 0.0) };
    let mut orders = reposition_step(&[idle(0, 0.5, 0.0), hub_side], &reqs, &params(0.5), 0.05);
    orders.sort_by_key(|o| match o {
        Order::Relocate { vehicle, .. } | Order::Return { vehicle, .. } | Order::Wait { vehicle } => *vehicle,
    });
    assert_eq!(
        orders,
        vec![
            Order::Relocate { vehicle: 0, request: 3 },
            Order::Return { vehicle: 1, to: Location::new(2.0, 1.0) },
        ]
    );
}

#[test]
fn empty_queue_sends_hub_vehicles_back_and_parks_suburb_ones() {
    let hub_side = IdleVehicle { at_hub: true, last_pickup: Some(Location::new(3.0, -1.0)), ..idle(4, -5.0, 0.0) };
    let orders = reposition_step(&[hub_side, idle(6, 1.0, 1.0)], &[], &params(0.5), 0.0);
    assert!(orders.contains(&Order::Return { vehicle: 4, to: Location::new(3.0, -1.0) }));
    assert!(orders.contains(&Order::Wait { vehicle: 6 }));
}

fn rsaf(vehicle: usize, x: f64, assigned: usize, boarded: bool) -> RsafCandidate {
    RsafCandidate { vehicle, location: Location::new(x, 0.0), assigned, boarded }
}

#[test]
fn rsaf_skips_vehicles_with_a_boarded_patron() {
    let reqs = [PendingRequest { id: 0, location: Location::new(0.0, 0.0), call_time: 0.0 }];
    let mut map = MatchMap::new();
    map.push_unmatched(0);
    let new = rsaf_match_step(&mut map, &[rsaf(0, 0.1, 1, true), rsaf(1, 2.0, 0, false)], &reqs, 4, Metric::Manhattan);
    assert_eq!(new, vec![(1, 0)]);
}

#[test]
fn rsaf_tie_goes_to_lower_id() {
    let reqs = [PendingRequest { id: 0, location: Location::new(0.0, 0.0), call_time: 0.0 }];
    let mut map = MatchMap::new();
    map.push_unmatched(0);
    let new = rsaf_match_step(&mut map, &[rsaf(5, 1.0, 0, false), rsaf(2, -1.0, 0, false)], &reqs, 4, Metric::Manhattan);
    assert_eq!(new, vec![(2, 0)]);
}

#[test]
fn one_taxi_two_callers_the_second_waits() {
    let reqs = [
        PendingRequest { id: 0, location: Location::new(1.0, 0.0), call_time: 0.0 },
        PendingRequest { id: 1, location: Location::new(0.5, 0.0), call_time: 0.0 },
    ];
    let mut map = MatchMap::new();
    map.push_unmatched(0);
    map.push_unmatched(1);
    let new = taxi_step(&mut map, &[rsaf(0, 0.0, 0, false)], &reqs, Metric::Manhattan);
    assert_eq!(new.len(), 1);
    assert_eq!(map.unmatched_len(), 1);
}

#[test]
fn ride_matching_scan_finds_the_first_feasible_taker() {
    let region = Rect::new(0.0, 0.0, 10.0, 10.0);
    let takers = [
        // Needs a detour.
        RmTaker { t: 0.01, origin: Location::new(1.0, 0.5), destination: Location::new(0.2, 0.2) },
        RmTaker { t: 0.02, origin: Location::new(1.5, 0.5), destination: Location::new(7.0, 5.0) },
        RmTaker { t: 0.03, origin: Location::new(2.0, 0.5), destination: Location::new(8.0, 6.0) },
    ];
    let o = Location::new(0.0, 0.0);
    let d = Location::new(6.0, 4.0);
    assert_eq!(rm_scan(o, d, &takers, 0.1, 30.0, &region), Some(1));
    // The seeker's leg ends before any taker appears.
    assert_eq!(rm_scan(o, Location::new(0.2, 4.0), &takers, 0.1, 30.0, &region), None);
}

#[test]
fn greedy_route_can_be_worse_than_the_tour() {
    let net = build_grid(5.0, 2.0, 0.1, 1.0, 30.0, 60.0, 0.0).unwrap();
    let mut router = Router::new(&net);
    let at = |x| net.snap(Location::new(x, 0.0));
    // Nearest stop first pulls the vehicle away from the far-left stop.
    let start = at(1.5);
    let stops = [at(2.5), at(0.0), at(4.5)];
    let (mut here, mut left, mut greedy) = (start, stops.to_vec(), 0.0);
    while let Some(next) = rsaf_route_next(&mut router, here, &left) {
        greedy += router.time_h(here, next).unwrap();
        left.retain(|&n| n != next);
        here = next;
    }
    let (_, tour) = plan_node_tour(&mut router, start, &stops).unwrap();
    assert!((greedy - 7.5 / 30.0).abs() < 1e-9, "{greedy}");
    assert!((tour - 6.0 / 30.0).abs() < 1e-9, "{tour}");
}

#[test]
fn flex_departs_on_full_bus_or_headway() {
    let mut s = FlexSchedule::new(0.157);
    let full = flexfbt_zone_step(&mut s, &[1, 2, 3, 4, 5], 1, true, 4, 0.05).unwrap();
    assert_eq!(full.outbound, vec![1, 2, 3, 4]);
    assert!((s.next_departure - (0.05 + 0.157)).abs() < 1e-12);
    assert!(flexfbt_zone_step(&mut s, &[7, 8], 0, true, 4, 0.1).is_none());
    let due = flexfbt_zone_step(&mut s, &[7, 8], 6, true, 4, 0.21).unwrap();
    assert_eq!((due.outbound.len(), due.inbound), (2, 4));
    assert!(flexfbt_zone_step(&mut s, &[], 0, true, 4, 0.5).is_none());
    assert!((s.next_departure - 0.657).abs() < 1e-12);
}

#[test]
fn ride_matching_examples() {
    let region = Rect::new(0.0, 0.0, 5.0, 5.0);
    let seeker = RmTrip {
        origin: Location::new(0.0, 0.0),
        destination: Location::new(3.0, 2.0),
        current: Location::new(1.0, 0.0),
        traveled: 1.0,
    };
    let reach = 0.1 * 30.0;
    // Origin just beyond reach.
    assert!(!rm_check(&seeker, Location::new(1.0 + reach + 1e-6, 0.0), Location::new(4.5, 4.5), 0.1, 30.0, &region));
    // Destination beyond the seeker's, no detour.
    assert!(rm_check(&seeker, Location::new(1.5, 0.5), Location::new(4.0, 3.0), 0.1, 30.0, &region));
    // Destination behind the taker's origin.
    assert!(!rm_check(&seeker, Location::new(2.0, 1.0), Location::new(1.5, 0.5), 0.1, 30.0, &region));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn soft_threshold_never_rises(t1 in 0.0..3.0f64, dt in 0.0..3.0f64, u in 1usize..5) {
        prop_assert!(soft_target(t1 + dt, 18.0, 20.0, u) <= soft_target(t1, 18.0, 20.0, u));
    }

    #[test]
    fn soft_never_dispatches_later_than_hard(arrivals in proptest::collection::vec(0.0..0.3f64, 1..4)) {
        let mut times = arrivals.clone();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let soft = DispatchPolicy { kind: DispatchKind::Soft, ..hard() };
        let first_dispatch = |p: &DispatchPolicy| {
            let clock = DispatchClock::armed_at(times[0]);
            (0..=4000).map(|k| k as f64 * 1e-4).find(|&t| {
                let n = times.iter().filter(|&&a| a <= t).count();
                t >= times[0] && p.should_dispatch(n, &clock, t)
            })
        };
        let (s, h) = (first_dispatch(&soft), first_dispatch(&hard()));
        prop_assert!(s.unwrap() <= h.unwrap());
    }

    #[test]
    fn alpha_one_picks_an_oldest_and_alpha_zero_a_nearest(
        reqs in proptest::collection::vec((0.0..5.0f64, -2.5..2.5f64, 0.0..0.1f64), 1..10),
        vx in 0.0..5.0f64, vy in -2.5..2.5f64,
    ) {
        let pending: Vec<PendingRequest> = reqs
            .iter()
            .enumerate()
            .map(|(i, &(x, y, c))| PendingRequest { id: i as u64, location: Location::new(x, y), call_time: c })
            .collect();
        let v = idle(0, vx, vy);
        let target = |alpha| match reposition_step(&[v], &pending, &params(alpha), 0.1)[0] {
            Order::Relocate { request, .. } => request as usize,
            other => panic!("unexpected {other:?}"),
        };
        let oldest = pending.iter().map(|r| r.call_time).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(pending[target(1.0)].call_time, oldest);
        let dist = |r: &PendingRequest| (r.location.x - vx).abs() + (r.location.y - vy).abs();
        let nearest = pending.iter().map(dist).fold(f64::INFINITY, f64::min);
        prop_assert!((dist(&pending[target(0.0)]) - nearest).abs() < 1e-12);
    }

    #[test]
    fn ride_matching_is_monotone_in_patience(
        ax in 0.0..5.0f64, ay in 0.0..5.0f64, bx in 0.0..5.0f64, by in 0.0..5.0f64,
        tau in 0.0..0.2f64, extra in 0.0..0.2f64,
    ) {
        let region = Rect::new(0.0, 0.0, 5.0, 5.0);
        let seeker = RmTrip {
            origin: Location::new(0.5, 0.5),
            destination: Location::new(4.0, 3.0),
            current: Location::new(1.5, 0.5),
            traveled: 1.0,
        };
        let (a, b) = (Location::new(ax, ay), Location::new(bx, by));
        if rm_check(&seeker, a, b, tau, 30.0, &region) {
            prop_assert!(rm_check(&seeker, a, b, tau + extra, 30.0, &region));
        }
    }

    #[test]
    fn flex_never_overfills(backlog in 0usize..12, inbound in 0usize..12, cap in 1usize..6, t in 0.0..1.0f64) {
        let ids: Vec<u64> = (0..backlog as u64).collect();
        let mut s = FlexSchedule::new(0.157);
        if let Some(d) = flexfbt_zone_step(&mut s, &ids, inbound, true, cap, t) {
            prop_assert!(d.outbound.len() <= cap && d.inbound <= cap && !d.outbound.is_empty());
        }
    }
}
