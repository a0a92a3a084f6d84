//! Static shortest-path routing to each exit over a visibility graph.
//!
//! Waypoints are placed just off every wall endpoint. For each exit the graph
//! distance from every waypoint is computed once; a coarse grid then caches,
//! per exit, the best visible waypoint and the remaining path length from each
//! cell centre. Door events never change the geometry, so the cache is built
//! once per floorplan and exit choice happens per agent at lookup time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{Rect, Segment, Vec2};
use crate::scenario::Floorplan;

/// Distance of corner waypoints from the wall endpoint they belong to.
const WAYPOINT_OFFSET_M: f64 = 0.6;
/// Minimum distance between a waypoint and any wall.
const WAYPOINT_CLEARANCE_M: f64 = 0.4;
/// Waypoint-to-waypoint edges must keep this far from every wall.
const EDGE_CLEARANCE_M: f64 = 0.25;
const MERGE_RADIUS_M: f64 = 0.4;
const CELL_SIZE_M: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    /// Point the agent should walk towards next.
    pub waypoint: Vec2,
    /// Remaining path length to the exit through `waypoint`.
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct ExitField {
    target: Vec2,
    /// Graph distance from each waypoint to the exit target.
    node_dist: Vec<f64>,
    cells: Vec<Option<Route>>,
}

#[derive(Debug, Clone)]
pub struct Navigator {
    walls: Vec<Segment>,
    nodes: Vec<Vec2>,
    bounds: Rect,
    nx: usize,
    ny: usize,
    exits: Vec<ExitField>,
}

impl Navigator {
    pub fn new(floorplan: &Floorplan) -> Self {
        let walls = floorplan.walls.clone();
        let bounds = floorplan.bounds;
        let nodes = place_waypoints(&walls, bounds);
        let n = nodes.len();

        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if clear_path(&walls, nodes[i], nodes[j], EDGE_CLEARANCE_M) {
                    let d = nodes[i].distance(nodes[j]);
                    adj[i].push((j, d));
                    adj[j].push((i, d));
                }
            }
        }

        let nx = (bounds.width() / CELL_SIZE_M).ceil().max(1.0) as usize;
        let ny = (bounds.height() / CELL_SIZE_M).ceil().max(1.0) as usize;
        let centres: Vec<Vec2> = (0..nx * ny)
            .map(|c| {
                let (ix, iy) = (c % nx, c / nx);
                bounds.min
                    + Vec2::new(
                        (ix as f64 + 0.5) * CELL_SIZE_M,
                        (iy as f64 + 0.5) * CELL_SIZE_M,
                    )
            })
            .collect();
        let cell_visible: Vec<Vec<usize>> = centres
            .iter()
            .map(|&c| (0..n).filter(|&k| visible(&walls, c, nodes[k])).collect())
            .collect();

        let exits = floorplan
            .exits
            .iter()
            .map(|e| {
                let target = e.segment.midpoint();
                let node_dist = dijkstra_to_target(&walls, &nodes, &adj, target);
                let cells = centres
                    .iter()
                    .zip(&cell_visible)
                    .map(|(&c, vis)| best_route(&walls, &nodes, &node_dist, target, c, vis))
                    .collect();
                ExitField {
                    target,
                    node_dist,
                    cells,
                }
            })
            .collect();

        Navigator {
            walls,
            nodes,
            bounds,
            nx,
            ny,
            exits,
        }
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn exit_target(&self, exit: usize) -> Vec2 {
        self.exits[exit].target
    }

    /// Shortest route from `p` to `exit`, or `None` if the exit is unreachable.
    pub fn route(&self, exit: usize, p: Vec2) -> Option<Route> {
        let field = &self.exits[exit];
        let ix = ((p.x - self.bounds.min.x) / CELL_SIZE_M).floor();
        let iy = ((p.y - self.bounds.min.y) / CELL_SIZE_M).floor();
        let ix = (ix.max(0.0) as usize).min(self.nx - 1);
        let iy = (iy.max(0.0) as usize).min(self.ny - 1);
        let cached = field.cells[iy * self.nx + ix];
        match cached {
            Some(r) if visible(&self.walls, p, r.waypoint) => Some(Route {
                waypoint: r.waypoint,
                distance: r.distance - r.waypoint.distance(cell_centre(self, ix, iy))
                    + r.waypoint.distance(p),
            }),
            _ => self.exact_route(exit, p),
        }
    }

    /// Route computed from scratch for the exact position `p`.
    pub fn exact_route(&self, exit: usize, p: Vec2) -> Option<Route> {
        let field = &self.exits[exit];
        let vis: Vec<usize> = (0..self.nodes.len())
            .filter(|&k| visible(&self.walls, p, self.nodes[k]))
            .collect();
        best_route(&self.walls, &self.nodes, &field.node_dist, field.target, p, &vis)
    }
}

fn cell_centre(nav: &Navigator, ix: usize, iy: usize) -> Vec2 {
    nav.bounds.min
        + Vec2::new(
            (ix as f64 + 0.5) * CELL_SIZE_M,
            (iy as f64 + 0.5) * CELL_SIZE_M,
        )
}

fn best_route(
    walls: &[Segment],
    nodes: &[Vec2],
    node_dist: &[f64],
    target: Vec2,
    from: Vec2,
    visible_nodes: &[usize],
) -> Option<Route> {
    let mut best: Option<Route> = None;
    let mut consider = |waypoint: Vec2, distance: f64| {
        if distance.is_finite() && best.map_or(true, |b| distance < b.distance) {
            best = Some(Route { waypoint, distance });
        }
    };
    if visible(walls, from, target) {
        consider(target, from.distance(target));
    }
    for &k in visible_nodes {
        consider(nodes[k], from.distance(nodes[k]) + node_dist[k]);
    }
    best
}

fn visible(walls: &[Segment], a: Vec2, b: Vec2) -> bool {
    let s = Segment::new(a, b);
    !walls.iter().any(|w| w.intersects(&s))
}

fn clear_path(walls: &[Segment], a: Vec2, b: Vec2, clearance: f64) -> bool {
    let s = Segment::new(a, b);
    walls
        .iter()
        .all(|w| !w.intersects(&s) && segment_distance(w, &s) >= clearance)
}

fn segment_distance(p: &Segment, q: &Segment) -> f64 {
    if p.intersects(q) {
        return 0.0;
    }
    p.distance_to(q.a)
        .min(p.distance_to(q.b))
        .min(q.distance_to(p.a))
        .min(q.distance_to(p.b))
}

fn place_waypoints(walls: &[Segment], bounds: Rect) -> Vec<Vec2> {
    let mut nodes: Vec<Vec2> = Vec::new();
    let inner = |p: Vec2| {
        p.x >= bounds.min.x + WAYPOINT_CLEARANCE_M
            && p.x <= bounds.max.x - WAYPOINT_CLEARANCE_M
            && p.y >= bounds.min.y + WAYPOINT_CLEARANCE_M
            && p.y <= bounds.max.y - WAYPOINT_CLEARANCE_M
    };
    for w in walls {
        for end in [w.a, w.b] {
            for k in 0..8 {
                let dir = Vec2::from_angle(k as f64 * std::f64::consts::FRAC_PI_4);
                let q = end + dir * WAYPOINT_OFFSET_M;
                if !inner(q) {
                    continue;
                }
                if walls.iter().any(|o| o.distance_to(q) < WAYPOINT_CLEARANCE_M) {
                    continue;
                }
                if nodes.iter().any(|n| n.distance(q) < MERGE_RADIUS_M) {
                    continue;
                }
                nodes.push(q);
            }
        }
    }
    nodes
}

#[derive(PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra_to_target(
    walls: &[Segment],
    nodes: &[Vec2],
    adj: &[Vec<(usize, f64)>],
    target: Vec2,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; nodes.len()];
    let mut heap = BinaryHeap::new();
    for (k, &n) in nodes.iter().enumerate() {
        if visible(walls, n, target) {
            dist[k] = n.distance(target);
            heap.push(Queued(dist[k], k));
        }
    }
    while let Some(Queued(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        for &(j, w) in &adj[k] {
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Queued(nd, j));
            }
        }
    }
    dist
}
