//! Exact open-tour TSP over a vehicle's stops.
//!
//! Index 0 of the cost matrix is the vehicle's start; indices `1..=θ` are the
//! points to visit. Costs are hours; `f64::INFINITY` marks an unreachable pair.

use crate::error::{Error, Result};
use crate::network::{NodeId, Router};

const TIE_EPS: f64 = 1e-9;
const MAX_POINTS: usize = 16;
const MAX_BRUTE_FORCE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TourProblem {
    pub cost: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    /// Visit order as indices into the problem's points (1-based, start excluded).
    pub order: Vec<usize>,
    pub cost: f64,
}

impl TourProblem {
    pub fn new(cost: Vec<Vec<f64>>) -> Result<Self> {
        let n = cost.len();
        if n < 2 {
            return Err(Error::Tour("need a start and at least one point".into()));
        }
        if cost.iter().any(|row| row.len() != n) {
            return Err(Error::Tour("cost matrix must be square".into()));
        }
        for (i, row) in cost.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c.is_nan() || c < 0.0 {
                    return Err(Error::Tour(format!("cost[{i}][{j}] = {c} is invalid")));
                }
            }
        }
        Ok(Self { cost })
    }

    pub fn points(&self) -> usize {
        self.cost.len() - 1
    }

    fn check_reachable(&self) -> Result<()> {
        for (i, row) in self.cost.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if j != 0 && i != j && c.is_infinite() {
                    return Err(Error::Tour(format!("point {j} is unreachable from {i}")));
                }
            }
        }
        Ok(())
    }

    pub fn tour_cost(&self, order: &[usize]) -> f64 {
        let mut at = 0;
        let mut total = 0.0;
        for &p in order {
            total += self.cost[at][p];
            at = p;
        }
        total
    }
}

/// Held–Karp over subsets. Among optimal tours returns the lexicographically
/// smallest visit order.
pub fn plan_open_tour(problem: &TourProblem) -> Result<RoutePlan> {
    let k = problem.points();
    if k > MAX_POINTS {
        return Err(Error::Tour(format!("{k} points exceed the exact solver limit of {MAX_POINTS}")));
    }
    problem.check_reachable()?;
    let c = &problem.cost;
    let full = (1usize << k) - 1;
    // go[mask][j]: cheapest cost to finish visiting all points outside `mask`
    // when standing at point j (0-based), having visited `mask`.
    let mut go = vec![vec![f64::INFINITY; k]; 1 << k];
    go[full].fill(0.0);
    for mask in (1..full).rev() {
        for j in 0..k {
            if mask & (1 << j) == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for nxt in 0..k {
                if mask & (1 << nxt) != 0 {
                    continue;
                }
                best = best.min(c[j + 1][nxt + 1] + go[mask | (1 << nxt)][nxt]);
            }
            go[mask][j] = best;
        }
    }
    let total = (0..k)
        .map(|j| c[0][j + 1] + go[1 << j][j])
        .fold(f64::INFINITY, f64::min);

    let mut order = Vec::with_capacity(k);
    let mut mask = 0usize;
    let mut at = 0usize;
    let mut spent = 0.0;
    while mask != full {
        let next = (0..k)
            .filter(|&j| mask & (1 << j) == 0)
            .find(|&j| spent + c[at][j + 1] + go[mask | (1 << j)][j] <= total + TIE_EPS)
            .expect("optimal continuation exists");
        spent += c[at][next + 1];
        mask |= 1 << next;
        at = next + 1;
        order.push(at);
    }
    Ok(RoutePlan { order, cost: total })
}

/// Exhaustive search over all visit orders; only for small instances.
pub fn brute_force_tour(problem: &TourProblem) -> Result<RoutePlan> {
    let k = problem.points();
    if k > MAX_BRUTE_FORCE {
        return Err(Error::Tour(format!(
            "brute force refuses {k} points (limit {MAX_BRUTE_FORCE})"
        )));
    }
    problem.check_reachable()?;
    let mut perm: Vec<usize> = (1..=k).collect();
    let mut best = RoutePlan { order: perm.clone(), cost: problem.tour_cost(&perm) };
    // Lexicographic permutation order; strict improvement keeps the earliest optimum.
    while next_permutation(&mut perm) {
        let cost = problem.tour_cost(&perm);
        if cost < best.cost - TIE_EPS {
            best = RoutePlan { order: perm.clone(), cost };
        }
    }
    Ok(best)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Plans a tour from `start` over `stops` on the street network. Coincident
/// nodes (including the start) are merged. Returns distinct stop nodes in
/// visit order and the tour time in hours.
pub fn plan_node_tour(router: &mut Router<'_>, start: NodeId, stops: &[NodeId]) -> Result<(Vec<NodeId>, f64)> {
    let mut points: Vec<NodeId> = Vec::new();
    for &s in stops {
        if s != start && !points.contains(&s) {
            points.push(s);
        }
    }
    if points.is_empty() {
        return Ok((Vec::new(), 0.0));
    }
    let mut all = vec![start];
    all.extend(&points);
    let n = all.len();
    let mut cost = vec![vec![0.0; n]; n];
    for j in 0..n {
        let times = router.times_to(all[j]);
        for i in 0..n {
            if i != j {
                let us = times[all[i]];
                cost[i][j] = if us == crate::network::UNREACHABLE {
                    f64::INFINITY
                } else {
                    us as f64 / 3.6e9
                };
            }
        }
    }
    let plan = plan_open_tour(&TourProblem::new(cost)?)?;
    Ok((plan.order.iter().map(|&i| all[i]).collect(), plan.cost))
}
