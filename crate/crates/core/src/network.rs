//! Street network: a suburb grid (or loaded graph) joined to the hub by a
//! freeway chain, plus the geometry used by the matching layer.
//!
//! Coordinates are kilometres, `x` east and `y` north. The point `(0, 0)` is
//! the suburb node where the freeway attaches; for generated grids it sits on
//! the west edge of the suburb, at the grid node closest to the edge midpoint,
//! and the hub lies `L` km further west.
//!
//! Routing costs are integer microseconds so that equal-time alternatives tie
//! exactly and the lexicographic tie-break is well defined.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::path::Path as FsPath;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const ORIGIN: Location = Location { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(&self, other: &Location, frac: f64) -> Location {
        Location::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }
}

/// Distance metric used for matching geometry (never for routing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Manhattan,
    Euclidean,
}

impl Metric {
    /// TSP tour-length constant for this metric.
    pub fn tour_constant(self) -> f64 {
        match self {
            Metric::Manhattan => 1.15,
            Metric::Euclidean => 0.90,
        }
    }
}

pub fn matching_distance(a: Location, b: Location, metric: Metric) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    match metric {
        Metric::Manhattan => dx.abs() + dy.abs(),
        Metric::Euclidean => dx.hypot(dy),
    }
}

/// Area covered by a matching buffer of radius `delta` km.
pub fn buffer_area(delta: f64, metric: Metric) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "buffer distance must be non-negative, got {delta}"
        )));
    }
    Ok(match metric {
        Metric::Manhattan => 2.0 * delta * delta,
        Metric::Euclidean => PI * delta * delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn contains(&self, p: Location) -> bool {
        p.x >= self.x_min - EPS
            && p.x <= self.x_max + EPS
            && p.y >= self.y_min - EPS
            && p.y <= self.y_max + EPS
    }

    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn center(&self) -> Location {
        Location::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub length_km: f64,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct GridLayout {
    spacing: f64,
    nx: usize,
    ny: usize,
    y0: f64,
}

/// Immutable street network. Safe to share across simulation workers.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Location>,
    links: Vec<Link>,
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
    hub: NodeId,
    connection: NodeId,
    freeway: Vec<usize>,
    intersection: Vec<bool>,
    intersection_delay_s: f64,
    region: Rect,
    grid: Option<GridLayout>,
    lanes_per_direction: u32,
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: usize) -> &Link {
        &self.links[id]
    }

    pub fn location(&self, node: NodeId) -> Location {
        self.nodes[node]
    }

    pub fn hub(&self) -> NodeId {
        self.hub
    }

    /// Suburb-side end of the freeway chain, i.e. the point `(0, 0)`.
    pub fn connection(&self) -> NodeId {
        self.connection
    }

    pub fn freeway_links(&self) -> &[usize] {
        &self.freeway
    }

    pub fn region(&self) -> Rect {
        self.region
    }

    pub fn intersection_delay_s(&self) -> f64 {
        self.intersection_delay_s
    }

    pub fn grid_spacing(&self) -> Option<f64> {
        self.grid.map(|g| g.spacing)
    }

    pub fn lanes_per_direction(&self) -> u32 {
        self.lanes_per_direction
    }

    /// Whether passing through this node costs the intersection delay.
    pub fn is_intersection(&self, node: NodeId) -> bool {
        self.intersection[node]
    }

    pub fn out_links(&self, node: NodeId) -> &[usize] {
        &self.out_links[node]
    }

    /// Suburb nodes (everything except the hub and freeway-only nodes).
    pub fn suburb_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(move |&n| self.intersection[n])
    }

    /// Nearest suburb node to `p` (Euclidean), ties to the lowest id.
    pub fn snap(&self, p: Location) -> NodeId {
        if let Some(g) = self.grid {
            if self.region.contains(p) {
                let i = nearest_index(p.x / g.spacing, g.nx);
                let j = nearest_index((p.y - g.y0) / g.spacing, g.ny);
                return j * g.nx + i;
            }
        }
        let mut best = (f64::INFINITY, 0);
        for n in self.suburb_nodes() {
            let d = matching_distance(self.nodes[n], p, Metric::Euclidean);
            if d < best.0 - 1e-12 {
                best = (d, n);
            }
        }
        best.1
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        nodes: Vec<Location>,
        links: Vec<Link>,
        hub: NodeId,
        freeway: Vec<usize>,
        intersection_delay_s: f64,
        region: Option<Rect>,
        grid: Option<GridLayout>,
        lanes_per_direction: u32,
    ) -> Result<Network> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Network("network has no nodes".into()));
        }
        if hub >= n {
            return Err(Error::Network(format!("hub node {hub} does not exist")));
        }
        if !(intersection_delay_s >= 0.0) {
            return Err(Error::Network("intersection delay must be >= 0".into()));
        }
        for (id, l) in links.iter().enumerate() {
            if l.from >= n || l.to >= n {
                return Err(Error::Network(format!(
                    "link {id} has a dangling endpoint ({} -> {})",
                    l.from, l.to
                )));
            }
            if !(l.length_km > 0.0) || !(l.speed_kmh > 0.0) {
                return Err(Error::Network(format!(
                    "link {id} must have positive length and speed"
                )));
            }
        }
        for p in &nodes {
            if !p.is_finite() {
                return Err(Error::Network("node coordinates must be finite".into()));
            }
        }

        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        for (id, l) in links.iter().enumerate() {
            out_links[l.from].push(id);
            in_links[l.to].push(id);
        }
        for adj in &mut out_links {
            adj.sort_by_key(|&id| (links[id].to, id));
        }
        for adj in &mut in_links {
            adj.sort_by_key(|&id| (links[id].from, id));
        }

        if freeway.is_empty() {
            return Err(Error::Network("freeway chain is empty".into()));
        }
        let mut is_freeway = vec![false; links.len()];
        for &f in &freeway {
            if f >= links.len() {
                return Err(Error::Network(format!("freeway link {f} does not exist")));
            }
            is_freeway[f] = true;
        }
        let intersection: Vec<bool> = (0..n)
            .map(|node| {
                node != hub
                    && out_links[node]
                        .iter()
                        .chain(in_links[node].iter())
                        .any(|&l| !is_freeway[l])
            })
            .collect();
        if !freeway
            .iter()
            .any(|&f| links[f].from == hub || links[f].to == hub)
        {
            return Err(Error::Network("freeway chain does not reach the hub".into()));
        }
        // The connection is the suburb node touched by the freeway.
        let connection = freeway
            .iter()
            .flat_map(|&f| [links[f].from, links[f].to])
            .filter(|&v| intersection[v])
            .min()
            .ok_or_else(|| Error::Network("freeway does not touch the suburb".into()))?;

        let reach_fwd = reachable(n, hub, |v| out_links[v].iter().map(|&l| links[l].to));
        if let Some(v) = reach_fwd.iter().position(|r| !r) {
            return Err(Error::Network(format!(
                "graph is not strongly connected: node {v} is unreachable from the hub"
            )));
        }
        let reach_bwd = reachable(n, hub, |v| in_links[v].iter().map(|&l| links[l].from));
        if let Some(v) = reach_bwd.iter().position(|r| !r) {
            return Err(Error::Network(format!(
                "hub is unreachable from node {v}"
            )));
        }

        let region = region.unwrap_or_else(|| {
            let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (i, p) in nodes.iter().enumerate() {
                if intersection[i] {
                    r.x_min = r.x_min.min(p.x);
                    r.y_min = r.y_min.min(p.y);
                    r.x_max = r.x_max.max(p.x);
                    r.y_max = r.y_max.max(p.y);
                }
            }
            r
        });

        Ok(Network {
            nodes,
            links,
            out_links,
            in_links,
            hub,
            connection,
            freeway,
            intersection,
            intersection_delay_s,
            region,
            grid,
            lanes_per_direction,
        })
    }

    /// Travel time of a path under this network's link speeds and delay.
    pub fn path_time_h(&self, path: &Path) -> f64 {
        let drive: f64 = path
            .links
            .iter()
            .map(|&l| self.links[l].length_km / self.links[l].speed_kmh)
            .sum();
        drive + path.intersection_count as f64 * self.intersection_delay_s / 3600.0
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, p)| NodeRecord { id, x: p.x, y: p.y })
                .collect(),
            links: self
                .links
                .iter()
                .enumerate()
                .map(|(id, l)| LinkRecord {
                    id,
                    from: l.from,
                    to: l.to,
                    length_km: l.length_km,
                    speed_kmh: l.speed_kmh,
                })
                .collect(),
            hub: Some(self.hub),
            freeway_links: self.freeway.clone(),
            intersection_delay_s: self.intersection_delay_s,
            region: Some(self.region),
            grid_spacing_km: self.grid.map(|g| g.spacing),
            lanes_per_direction: self.lanes_per_direction,
        }
    }

    pub fn write_json(&self, path: &FsPath) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_document())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &FsPath) -> Result<Network> {
        let text = std::fs::read_to_string(path)?;
        let doc: NetworkDocument = serde_json::from_str(&text)?;
        load_network(&doc)
    }
}

fn nearest_index(f: f64, count: usize) -> usize {
    let lo = f.floor().clamp(0.0, (count - 1) as f64);
    let hi = (lo + 1.0).min((count - 1) as f64);
    if (f - lo).abs() <= (hi - f).abs() {
        lo as usize
    } else {
        hi as usize
    }
}

fn reachable<I, F>(n: usize, start: NodeId, next: F) -> Vec<bool>
where
    F: Fn(NodeId) -> I,
    I: Iterator<Item = NodeId>,
{
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for w in next(v) {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Integer count of `spacing` in `len`, or `None` when it does not divide.
fn divide_exact(len: f64, spacing: f64) -> Option<usize> {
    let q = len / spacing;
    let r = q.round();
    if r >= 1.0 && (q - r).abs() < 1e-6 {
        Some(r as usize)
    } else {
        None
    }
}

/// Generates a two-way grid suburb of `width` x `height` km with the freeway
/// attached at `(0, 0)` on the west edge and the hub at `(-freeway_length, 0)`.
pub fn build_grid(
    width: f64,
    height: f64,
    spacing: f64,
    freeway_length: f64,
    street_speed: f64,
    freeway_speed: f64,
    intersection_delay_s: f64,
) -> Result<Network> {
    if !(spacing > 0.0) || !(street_speed > 0.0) || !(freeway_speed > 0.0) {
        return Err(Error::Config(
            "grid spacing and speeds must be positive".into(),
        ));
    }
    if !(freeway_length > 0.0) {
        return Err(Error::Config("freeway length must be positive".into()));
    }
    let (Some(cx), Some(cy)) = (divide_exact(width, spacing), divide_exact(height, spacing))
    else {
        return Err(Error::Config(format!(
            "grid spacing {spacing} km does not divide the {width} x {height} km region"
        )));
    };
    let nx = cx + 1;
    let ny = cy + 1;
    let y0 = -((cy / 2) as f64) * spacing;

    let mut nodes = Vec::with_capacity(nx * ny + 1);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push(Location::new(i as f64 * spacing, y0 + j as f64 * spacing));
        }
    }
    let mut links = Vec::with_capacity(4 * nx * ny + 2);
    let id = |i: usize, j: usize| j * nx + i;
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                for (a, b) in [(id(i, j), id(i + 1, j)), (id(i + 1, j), id(i, j))] {
                    links.push(Link { from: a, to: b, length_km: spacing, speed_kmh: street_speed });
                }
            }
            if j + 1 < ny {
                for (a, b) in [(id(i, j), id(i, j + 1)), (id(i, j + 1), id(i, j))] {
                    links.push(Link { from: a, to: b, length_km: spacing, speed_kmh: street_speed });
                }
            }
        }
    }
    let connection = id(0, cy / 2);
    let hub = nodes.len();
    nodes.push(Location::new(-freeway_length, 0.0));
    let fw_out = links.len();
    links.push(Link { from: connection, to: hub, length_km: freeway_length, speed_kmh: freeway_speed });
    links.push(Link { from: hub, to: connection, length_km: freeway_length, speed_kmh: freeway_speed });

    let region = Rect::new(0.0, y0, cx as f64 * spacing, y0 + cy as f64 * spacing);
    Network::finish(
        nodes,
        links,
        hub,
        vec![fw_out, fw_out + 1],
        intersection_delay_s,
        Some(region),
        Some(GridLayout { spacing, nx, ny, y0 }),
        3,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub id: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub length_km: f64,
    pub speed_kmh: f64,
}

fn default_lanes() -> u32 {
    3
}

/// On-disk network description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub nodes: Vec<NodeRecord>,
    pub links: Vec<LinkRecord>,
    #[serde(default)]
    pub hub: Option<NodeId>,
    pub freeway_links: Vec<usize>,
    #[serde(default)]
    pub intersection_delay_s: f64,
    #[serde(default)]
    pub region: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_spacing_km: Option<f64>,
    #[serde(default = "default_lanes")]
    pub lanes_per_direction: u32,
}

pub fn load_network(doc: &NetworkDocument) -> Result<Network> {
    let hub = doc
        .hub
        .ok_or_else(|| Error::Network("document does not name a hub node".into()))?;
    let n = doc.nodes.len();
    let mut nodes = vec![None; n];
    for rec in &doc.nodes {
        if rec.id >= n || nodes[rec.id].is_some() {
            return Err(Error::Network(format!(
                "node ids must be unique and within 0..{n}, got {}",
                rec.id
            )));
        }
        nodes[rec.id] = Some(Location::new(rec.x, rec.y));
    }
    let nodes: Vec<Location> = nodes.into_iter().map(|p| p.unwrap()).collect();

    let m = doc.links.len();
    let mut links = vec![None; m];
    for rec in &doc.links {
        if rec.id >= m || links[rec.id].is_some() {
            return Err(Error::Network(format!(
                "link ids must be unique and within 0..{m}, got {}",
                rec.id
            )));
        }
        links[rec.id] = Some(Link {
            from: rec.from,
            to: rec.to,
            length_km: rec.length_km,
            speed_kmh: rec.speed_kmh,
        });
    }
    let links: Vec<Link> = links.into_iter().map(|l| l.unwrap()).collect();

    let grid = match (doc.grid_spacing_km, doc.region) {
        (Some(s), Some(r)) => {
            let nx = divide_exact(r.width(), s).map(|c| c + 1);
            let ny = divide_exact(r.height(), s).map(|c| c + 1);
            match (nx, ny) {
                (Some(nx), Some(ny)) if nx * ny <= n => {
                    let layout = GridLayout { spacing: s, nx, ny, y0: r.y_min };
                    // Only use the O(1) snap if node ids follow the generated layout.
                    let matches = (0..nx * ny).all(|k| {
                        let p = nodes[k];
                        (p.x - r.x_min - (k % nx) as f64 * s).abs() < 1e-9
                            && (p.y - r.y_min - (k / nx) as f64 * s).abs() < 1e-9
                    });
                    (matches && r.x_min == 0.0).then_some(layout)
                }
                _ => None,
            }
        }
        _ => None,
    };

    Network::finish(
        nodes,
        links,
        hub,
        doc.freeway_links.clone(),
        doc.intersection_delay_s,
        doc.region,
        grid,
        doc.lanes_per_direction,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<usize>,
    pub total_distance: f64,
    pub intersection_count: usize,
}

impl Path {
    pub fn trivial(node: NodeId) -> Self {
        Self {
            nodes: vec![node],
            links: Vec::new(),
            total_distance: 0.0,
            intersection_count: 0,
        }
    }

    pub fn start(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn end(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }
}

/// `distance / speed + intersections * delay`, in hours.
pub fn travel_time(distance_km: f64, intersection_count: usize, speed_kmh: f64, intersection_delay_s: f64) -> f64 {
    distance_km / speed_kmh + intersection_count as f64 * intersection_delay_s / 3600.0
}

pub const UNREACHABLE: u64 = u64::MAX;

fn link_cost_us(l: &Link) -> u64 {
    (l.length_km / l.speed_kmh * 3.6e9).round() as u64
}

/// Shortest-time routing with a per-target cache of reverse Dijkstra trees.
pub struct Router<'a> {
    net: &'a Network,
    delay_us: u64,
    link_us: Vec<u64>,
    cache: HashMap<NodeId, Arc<Vec<u64>>>,
}

const ROUTER_CACHE_LIMIT: usize = 1024;

impl<'a> Router<'a> {
    pub fn new(net: &'a Network) -> Self {
        Self {
            net,
            delay_us: (net.intersection_delay_s * 1e6).round() as u64,
            link_us: net.links.iter().map(link_cost_us).collect(),
            cache: HashMap::new(),
        }
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    fn entry_cost(&self, node: NodeId, target: NodeId) -> u64 {
        if node != target && self.net.intersection[node] {
            self.delay_us
        } else {
            0
        }
    }

    /// Travel time (µs) from every node to `target`.
    pub fn times_to(&mut self, target: NodeId) -> Arc<Vec<u64>> {
        if let Some(t) = self.cache.get(&target) {
            return Arc::clone(t);
        }
        let n = self.net.nodes.len();
        let mut dist = vec![UNREACHABLE; n];
        let mut heap = BinaryHeap::new();
        dist[target] = 0;
        heap.push(Reverse((0u64, target)));
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            let enter = self.entry_cost(v, target);
            for &l in &self.net.in_links[v] {
                let u = self.net.links[l].from;
                let nd = d + self.link_us[l] + enter;
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(Reverse((nd, u)));
                }
            }
        }
        if self.cache.len() >= ROUTER_CACHE_LIMIT {
            self.cache.clear();
        }
        let dist = Arc::new(dist);
        self.cache.insert(target, Arc::clone(&dist));
        dist
    }

    pub fn time_us(&mut self, from: NodeId, to: NodeId) -> Option<u64> {
        let t = self.times_to(to)[from];
        (t != UNREACHABLE).then_some(t)
    }

    pub fn time_h(&mut self, from: NodeId, to: NodeId) -> Option<f64> {
        self.time_us(from, to).map(|us| us as f64 / 3.6e9)
    }

    /// Minimum-time path; among equal-time paths the lexicographically
    /// smallest node sequence.
    pub fn path(&mut self, from: NodeId, to: NodeId) -> Result<Path> {
        let dist = self.times_to(to);
        if dist[from] == UNREACHABLE {
            return Err(Error::Unreachable { from, to });
        }
        let mut path = Path::trivial(from);
        let mut v = from;
        while v != to {
            let next = self.net.out_links[v].iter().copied().find(|&l| {
                let w = self.net.links[l].to;
                dist[w] != UNREACHABLE
                    && dist[w] + self.link_us[l] + self.entry_cost(w, to) == dist[v]
            });
            let l = next.expect("reverse tree is consistent");
            let w = self.net.links[l].to;
            path.total_distance += self.net.links[l].length_km;
            if w != to && self.net.intersection[w] {
                path.intersection_count += 1;
            }
            path.nodes.push(w);
            path.links.push(l);
            v = w;
        }
        Ok(path)
    }
}

/// Shortest path between two locations, each snapped to its nearest node.
pub fn shortest_path(net: &Network, a: Location, b: Location) -> Result<Path> {
    let from = snap_any(net, a);
    let to = snap_any(net, b);
    Router::new(net).path(from, to)
}

/// Like [`Network::snap`] but also resolves the hub location itself.
fn snap_any(net: &Network, p: Location) -> NodeId {
    if matching_distance(p, net.location(net.hub), Metric::Euclidean) < EPS {
        net.hub
    } else {
        net.snap(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: usize,
    pub rect: Rect,
    pub fleet_share: usize,
}

/// Splits the fleet over zones in proportion to `demand(rect)`, rounding by
/// largest remainder (ties to the lower zone index).
pub fn partition_zones(
    net: &Network,
    rects: &[Rect],
    demand: &dyn Fn(&Rect) -> f64,
    fleet: usize,
) -> Result<Vec<Zone>> {
    if rects.is_empty() {
        return Err(Error::Config("zone list is empty".into()));
    }
    let region = net.region();
    let tol = 1e-6 * region.area().max(1.0);
    for (i, r) in rects.iter().enumerate() {
        if !(r.width() > 0.0 && r.height() > 0.0) {
            return Err(Error::Config(format!("zone {i} is degenerate")));
        }
        if r.x_min < region.x_min - EPS
            || r.y_min < region.y_min - EPS
            || r.x_max > region.x_max + EPS
            || r.y_max > region.y_max + EPS
        {
            return Err(Error::Config(format!("zone {i} extends beyond the suburb")));
        }
        for (j, s) in rects.iter().enumerate().skip(i + 1) {
            if r.overlap_area(s) > tol {
                return Err(Error::Config(format!("zones {i} and {j} overlap")));
            }
        }
    }
    let covered: f64 = rects.iter().map(Rect::area).sum();
    if (covered - region.area()).abs() > tol {
        return Err(Error::Config(format!(
            "zones cover {covered:.4} km² but the suburb is {:.4} km²",
            region.area()
        )));
    }

    let weights: Vec<f64> = rects.iter().map(|r| demand(r).max(0.0)).collect();
    let shares = largest_remainder(&weights, fleet);
    Ok(rects
        .iter()
        .zip(shares)
        .enumerate()
        .map(|(id, (&rect, fleet_share))| Zone { id, rect, fleet_share })
        .collect())
}

fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut shares: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let frac = |i: usize| quotas[i] - shares[i] as f64;
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
}

/// Index of the zone containing `p`; points on a shared edge go to the
/// lower index. Points outside every zone map to the nearest zone centre.
pub fn zone_of(zones: &[Zone], p: Location) -> usize {
    zones
        .iter()
        .position(|z| z.rect.contains(p))
        .unwrap_or_else(|| {
            zones
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = matching_distance(a.1.rect.center(), p, Metric::Euclidean);
                    let db = matching_distance(b.1.rect.center(), p, Metric::Euclidean);
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
}
