//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1-8 are exact and always decide the exit status. The scenario
//! criteria 9-15 are statistical reproductions; they are reported but only
//! fail the run when `FEEDERSIM_STRICT_ACCEPTANCE=1`.

use std::process::ExitCode;
use std::time::Instant;

use feedersim::dispatch::{soft_target, DispatchKind};
use feedersim::engine::RunOptions;
use feedersim::experiment::{compare_modes, replicate_on, CompareSettings, Replication};
use feedersim::matching::{commercial_speed, expected_uth_distance, optimal_batch_and_area, optimal_buffer_distance};
use feedersim::network::{buffer_area, Metric};
use feedersim::reposition::urgency;
use feedersim::routing::{brute_force_tour, plan_open_tour, TourProblem};
use feedersim::scenario::{MatchingRule, Mode, Scenario, Zoning};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Batch delay objective from first principles: pooling waits plus the
/// share of the pickup tour each batch member rides.
fn objective(big_u: usize, a: f64, u: usize, lambda: f64, s: f64) -> f64 {
    let (bu, uu) = (big_u as f64, u as f64);
    let rate = lambda * a;
    uu * uu / (2.0 * rate) + (bu - uu) * uu / rate + bu * uu / (bu + 1.0) * 1.15 * (a * uu).sqrt() / s
}

fn c1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ratio: f64 = 1.001;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = rng.random_range(2..=4usize);
        let lambda = rng.random_range(1.0..20.0);
        let s = rng.random_range(15.0..40.0);
        let (big_u, a_star) = optimal_batch_and_area(u, lambda, s, 1.15);
        if big_u != u {
            return outcome(false, format!("closed form gave U = {big_u} for u = {u}"));
        }
        let mut best = (f64::INFINITY, 0, 0.0);
        let mut a = 1e-2;
        while a < 1e2 {
            for bu in u..=u + 16 {
                let v = objective(bu, a, u, lambda, s);
                if v < best.0 {
                    best = (v, bu, a);
                }
            }
            a *= ratio;
        }
        if best.1 != u {
            return outcome(false, format!("grid argmin U = {} for u = {u}", best.1));
        }
        worst = worst.max((best.2 / a_star).ln().abs() / ratio.ln());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1.0 && secs < 5.0, format!("max |A - A*| = {worst:.3} cells, {secs:.2} s"))
}

fn c2() -> Outcome {
    let mut worst_area: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for metric in [Metric::Manhattan, Metric::Euclidean] {
        for (u, lambda) in [(1, 0.5), (2, 3.0), (3, 7.2), (4, 7.2), (4, 19.0)] {
            let s = commercial_speed(30.0, u, 3.0);
            let d = optimal_buffer_distance(u, lambda, s, metric);
            let (_, a) = optimal_batch_and_area(u, lambda, s, metric.tour_constant());
            worst_area = worst_area.max((buffer_area(d, metric).unwrap() - a).abs() / a);
            let d2 = optimal_buffer_distance(u, 2.0 * lambda, s, metric);
            worst_scale = worst_scale.max((d2 / d - 2f64.powf(-1.0 / 3.0)).abs());
        }
    }
    outcome(
        worst_area <= 1e-9 && worst_scale <= 1e-12,
        format!("area rel err {worst_area:.1e}, scaling err {worst_scale:.1e}"),
    )
}

fn c3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let mut parts = Vec::new();
    let mut pass = true;
    for (u, big_u) in [(1usize, 1usize), (2, 4), (4, 4)] {
        let mut radii = vec![0.0; big_u];
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            for r in radii.iter_mut() {
                *r = rng.random::<f64>();
            }
            radii.sort_by(f64::total_cmp);
            let x = radii[u - 1];
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        let z = (mean - expected_uth_distance(u, big_u, 1.0).unwrap()) / se;
        pass &= z.abs() < 3.0;
        parts.push(format!("({u},{big_u}) z={z:+.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 10.0, format!("{}, {secs:.2} s", parts.join(" ")))
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let problems: Vec<TourProblem> = (0..1000)
        .map(|i| {
            let n = 2 + i % 5;
            let xy: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..5.0), rng.random_range(-2.5..2.5))).collect();
            let cost = xy
                .iter()
                .map(|a| xy.iter().map(|b| ((a.0 - b.0).abs() + (a.1 - b.1).abs()) / 30.0).collect())
                .collect();
            TourProblem::new(cost).unwrap()
        })
        .collect();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for p in &problems {
        let exact = plan_open_tour(p).unwrap().cost;
        let brute = brute_force_tour(p).unwrap().cost;
        worst = worst.max((exact - brute).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 2.0, format!("max cost gap {worst:.1e}, {secs:.3} s"))
}

fn c5() -> Outcome {
    let vals = [soft_target(0.6, 18.0, 20.0, 4), soft_target(0.9, 18.0, 20.0, 4), soft_target(1e-12, 18.0, 20.0, 4)];
    outcome(vals == [3.0, 2.0, 4.0], format!("u(0.6) = {}, u(0.9) = {}, u(0+) = {}", vals[0], vals[1], vals[2]))
}

fn c6() -> Outcome {
    let cases = [(0.05, 3.0, 30.0), (0.2, 0.4, 25.0), (0.0, 1.0, 30.0), (0.11, 0.0, 30.0)];
    let mut worst: f64 = 0.0;
    for (w, d, s) in cases {
        worst = worst.max((urgency(1.0, w, d, s) - w).abs());
        worst = worst.max((urgency(0.0, w, d, s) + d / s).abs());
        worst = worst.max((urgency(0.5, w, d, s) - 0.5 * (w - d / s)).abs());
    }
    outcome(worst <= 1e-12, format!("max err {worst:.1e}"))
}

fn c7(net: &feedersim::network::Network, sc: &Scenario) -> Outcome {
    let logs = |workers| {
        replicate_on(net, sc, &[1, 1], RunOptions::default(), Some(workers))
            .unwrap()
            .runs
            .iter()
            .map(|r| r.trips_csv().unwrap())
            .collect::<Vec<_>>()
    };
    let (a, b) = (logs(1), logs(4));
    let same = a[0] == a[1] && b[0] == b[1] && a[0] == b[0];
    outcome(same, format!("{} trip rows, workers 1 and 4", a[0].lines().count() - 1))
}

fn c8(net: &feedersim::network::Network, sc: &Scenario) -> Outcome {
    let options = RunOptions { check_invariants: true, trace_every: None };
    let rep = replicate_on(net, sc, &SEEDS, options, None).unwrap();
    let bad: usize = rep.runs.iter().map(|r| r.violations.len()).sum();
    outcome(bad == 0, format!("{bad} violations over {} seeds", rep.runs.len()))
}

fn replicate(sc: &Scenario) -> Replication {
    let net = sc.build_network().unwrap();
    replicate_on(&net, sc, &SEEDS, RunOptions::default(), None).unwrap()
}

fn med(rep: &Replication, metric: &str) -> f64 {
    rep.median(metric).unwrap_or(f64::NAN)
}

fn c9(sc: &Scenario) -> Outcome {
    let start = Instant::now();
    let rep = replicate(sc);
    let per_run = start.elapsed().as_secs_f64();
    let svc = med(&rep, "service_rate");
    let trip = rep.mean("avg_trip_h").unwrap_or(f64::NAN);
    let pass = (80.0..=98.0).contains(&svc) && (0.30..=0.45).contains(&trip);
    outcome(pass, format!("service {svc:.1}% (80-98), trip {trip:.3} h (0.30-0.45), 5 runs in {per_run:.1} s"))
}

fn c10(sc: &Scenario) -> Outcome {
    let with = med(&replicate(sc), "avg_trip_h");
    let without = med(&replicate(&Scenario { zoning: Zoning::None, ..sc.clone() }), "avg_trip_h");
    outcome(with <= without, format!("trip with zoning {with:.3} h, without {without:.3} h"))
}

fn c11(sc: &Scenario) -> Outcome {
    let low = Scenario { demand_scale: 0.25, inbound_scale: 0.25, ..sc.clone() };
    let soft = |s: &Scenario| Scenario { dispatch: DispatchKind::Soft, ..s.clone() };
    let (low_soft, low_hard) = (med(&replicate(&soft(&low)), "avg_trip_h"), med(&replicate(&low), "avg_trip_h"));
    let (hi_soft, hi_hard) = (med(&replicate(&soft(sc)), "service_rate"), med(&replicate(sc), "service_rate"));
    outcome(
        low_soft < low_hard && hi_hard >= hi_soft,
        format!("25%: trip soft {low_soft:.3} < hard {low_hard:.3} h; 100%: service hard {hi_hard:.1}% >= soft {hi_soft:.1}%"),
    )
}

fn c12(sc: &Scenario) -> Outcome {
    let nonuniform = Scenario { mu_ob: 0.1, mu_ib: 0.1, ..sc.clone() };
    let rate = |alpha| med(&replicate(&Scenario { alpha, ..nonuniform.clone() }), "service_rate");
    let (a0, a5, a1) = (rate(0.0), rate(0.5), rate(1.0));
    outcome(a5 >= a0 && a5 >= a1, format!("service alpha=0 {a0:.1}%, 0.5 {a5:.1}%, 1 {a1:.1}%"))
}

fn c13(sc: &Scenario) -> Outcome {
    let start = Instant::now();
    let rows = compare_modes(
        sc,
        &[Mode::Rpaf, Mode::Rsaf, Mode::Flexfbt],
        CompareSettings { target_service_rate: 90.0, fleet_cap: 80 },
        &SEEDS,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let trip = |i: usize| rows[i].avg_trip_h.unwrap_or(f64::NAN);
    let all_found = rows.iter().all(|r| r.attainable);
    let pass = all_found && trip(1) <= trip(0) && trip(0) <= trip(2) && rows[0].fleet <= rows[1].fleet && secs < 600.0;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{} N={}{} T={:.3}", r.mode, r.fleet, if r.attainable { "" } else { "(cap)" }, r.avg_trip_h.unwrap_or(f64::NAN)))
        .collect();
    outcome(pass, format!("{}; {secs:.0} s", table.join(", ")))
}

fn c14(sc: &Scenario) -> Outcome {
    let buffer = med(&replicate(sc), "service_rate");
    let nearest = med(&replicate(&Scenario { matching: MatchingRule::Nearest, ..sc.clone() }), "service_rate");
    outcome(buffer >= nearest, format!("service buffer {buffer:.1}%, nearest {nearest:.1}%"))
}

fn c15(sc: &Scenario) -> Outcome {
    let left = |k: f64| med(&replicate(&Scenario { inbound_scale: k, ..sc.clone() }), "leftover_pct");
    let v: Vec<f64> = [0.25, 0.5, 1.0, 1.5].iter().map(|&k| left(k)).collect();
    let pass = v[0] == 0.0 && v[1] <= v[2] && v[2] <= v[3];
    outcome(pass, format!("leftover at 0.25/0.5/1/1.5x: {:.2}/{:.2}/{:.2}/{:.2}%", v[0], v[1], v[2], v[3]))
}

fn main() -> ExitCode {
    let strict = std::env::var("FEEDERSIM_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    let sc = Scenario::baseline();
    let net = sc.build_network().unwrap();

    let exact: Vec<Criterion> = vec![
        (1, "batch/area optimizer vs grid search", Box::new(c1)),
        (2, "buffer distance identity and scaling", Box::new(c2)),
        (3, "order statistic mean vs Monte Carlo", Box::new(c3)),
        (4, "exact tour vs brute force", Box::new(c4)),
        (5, "soft target values", Box::new(c5)),
        (6, "urgency degenerate cases", Box::new(c6)),
        (7, "determinism across worker counts", Box::new(|| c7(&net, &sc))),
        (8, "invariants on 5 baseline seeds", Box::new(|| c8(&net, &sc))),
    ];
    let scenario: Vec<Criterion> = vec![
        (9, "baseline service rate and trip time", Box::new(|| c9(&sc))),
        (10, "zoning shortens trips", Box::new(|| c10(&sc))),
        (11, "soft/hard dispatch crossover", Box::new(|| c11(&sc))),
        (12, "alpha = 0.5 serves best", Box::new(|| c12(&sc))),
        (13, "three-system ordering at 90% service", Box::new(|| c13(&sc))),
        (14, "buffer matching vs nearest vehicle", Box::new(|| c14(&sc))),
        (15, "leftover grows with inbound demand", Box::new(|| c15(&sc))),
    ];

    let mut fatal = 0;
    let mut soft_fails = 0;
    for (group, fatal_group) in [(exact, true), (scenario, strict)] {
        for (id, name, f) in group {
            let o = f();
            println!("criterion {id:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            if !o.pass {
                if fatal_group {
                    fatal += 1;
                } else {
                    soft_fails += 1;
                }
            }
        }
    }
    if soft_fails > 0 {
        println!("{soft_fails} scenario criteria failed (set FEEDERSIM_STRICT_ACCEPTANCE=1 to make them fatal)");
    }
    if fatal > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
