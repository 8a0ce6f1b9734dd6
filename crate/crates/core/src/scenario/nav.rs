//! Visibility graph over clearance-inflated wall endpoints.
//!
//! Every wall endpoint is surrounded by a regular polygon whose inscribed
//! circle has radius `clearance`; the polygon vertices are the graph nodes.
//! Shortest paths around a convex corner then hug the polygon, which is a
//! tight over-approximation of the true clearance arc.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{bbox, Scenario};
use crate::geometry::{PathPolyline, Point2, Segment, Vec2};

const CORNER_SIDES: usize = 16;
const NODE_OFFSET: f64 = 1e-4;
const EDGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub struct NavGraph {
    clearance: f64,
    nodes: Vec<Point2>,
    adjacency: Vec<Vec<(u32, f64)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Whether the segment `a -> b` keeps at least `required` from every wall.
pub(crate) fn segment_clear(walls: &[Segment], a: Point2, b: Point2, required: f64) -> bool {
    let seg = Segment::new(a, b);
    let (lo, hi) = bbox(&seg);
    let pad = required.max(0.0);
    walls.iter().all(|w| {
        let (wlo, whi) = bbox(w);
        if wlo.x > hi.x + pad || whi.x < lo.x - pad || wlo.y > hi.y + pad || whi.y < lo.y - pad {
            return true;
        }
        if required <= 0.0 {
            !w.intersects(&seg)
        } else {
            w.distance_to_segment(&seg) >= required
        }
    })
}

impl NavGraph {
    pub fn build(scenario: &Scenario, clearance: f64) -> NavGraph {
        let clearance = clearance.max(0.0);
        let mut endpoints: Vec<Point2> = scenario.walls.iter().flat_map(|w| [w.a, w.b]).collect();
        endpoints.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
        endpoints.dedup_by(|p, q| p.distance(*q) < 1e-9);

        let radius = (clearance + NODE_OFFSET) / (std::f64::consts::PI / CORNER_SIDES as f64).cos();
        let mut nodes = Vec::new();
        for &e in &endpoints {
            for k in 0..CORNER_SIDES {
                let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / CORNER_SIDES as f64;
                let p = e + Vec2::from_angle(angle) * radius;
                if scenario.bounds.contains(p) && scenario.wall_clearance(p) >= clearance {
                    nodes.push(p);
                }
            }
        }

        let required = clearance - EDGE_TOLERANCE;
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                if segment_clear(&scenario.walls, nodes[i], nodes[j], required) {
                    let d = nodes[i].distance(nodes[j]);
                    adjacency[i].push((j as u32, d));
                    adjacency[j].push((i as u32, d));
                }
            }
        }
        NavGraph {
            clearance,
            nodes,
            adjacency,
        }
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Dijkstra from `from` over the graph; returns per-node distance and
    /// predecessor (`usize::MAX` marks the virtual start).
    fn search(&self, scenario: &Scenario, from: Point2) -> (Vec<f64>, Vec<usize>) {
        let n = self.nodes.len();
        let start_required = self.clearance.min(scenario.wall_clearance(from)) - EDGE_TOLERANCE;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        for (i, &p) in self.nodes.iter().enumerate() {
            if segment_clear(&scenario.walls, from, p, start_required) {
                dist[i] = from.distance(p);
                heap.push(Item(dist[i], i));
            }
        }
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let v = v as usize;
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(Item(nd, v));
                }
            }
        }
        (dist, prev)
    }

    /// Best way to finish at `goal`: (length, last graph node or None for a
    /// direct segment from the start).
    fn finish(
        &self,
        scenario: &Scenario,
        from: Point2,
        goal: Point2,
        dist: &[f64],
    ) -> Option<(f64, Option<usize>)> {
        if scenario.wall_clearance(goal) < self.clearance - EDGE_TOLERANCE {
            return None;
        }
        let required = self.clearance - EDGE_TOLERANCE;
        let start_required = self.clearance.min(scenario.wall_clearance(from)) - EDGE_TOLERANCE;
        let mut best: Option<(f64, Option<usize>)> = None;
        if segment_clear(&scenario.walls, from, goal, start_required) {
            best = Some((from.distance(goal), None));
        }
        for (i, &p) in self.nodes.iter().enumerate() {
            if !dist[i].is_finite() {
                continue;
            }
            let total = dist[i] + p.distance(goal);
            if best.is_some_and(|(b, _)| b <= total) {
                continue;
            }
            if segment_clear(&scenario.walls, p, goal, required) {
                best = Some((total, Some(i)));
            }
        }
        best
    }

    /// Shortest path to the closest of `goals`; returns the path and the
    /// index of the goal reached.
    pub fn shortest_path(
        &self,
        scenario: &Scenario,
        from: Point2,
        goals: &[Point2],
    ) -> Option<(PathPolyline, usize)> {
        let (dist, prev) = self.search(scenario, from);
        let (goal_idx, (_, last)) = goals
            .iter()
            .enumerate()
            .filter_map(|(gi, &g)| self.finish(scenario, from, g, &dist).map(|r| (gi, r)))
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))?;
        let mut chain = Vec::new();
        let mut cursor = last;
        while let Some(i) = cursor {
            chain.push(self.nodes[i]);
            cursor = (prev[i] != usize::MAX).then_some(prev[i]);
        }
        chain.reverse();
        let points = std::iter::once(from)
            .chain(chain)
            .chain(std::iter::once(goals[goal_idx]));
        Some((PathPolyline::from_points_dedup(points, 1e-12), goal_idx))
    }

    /// Geodesic length to each goal, `None` where unreachable.
    pub fn distances_to(&self, scenario: &Scenario, from: Point2, goals: &[Point2]) -> Vec<Option<f64>> {
        let (dist, _) = self.search(scenario, from);
        goals
            .iter()
            .map(|&g| self.finish(scenario, from, g, &dist).map(|(d, _)| d))
            .collect()
    }
}
