//! Shortest paths on a fine grid, as a reference for the visibility graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use evacsim_core::geometry::{Point2, Segment, Vec2};
use evacsim_core::Scenario;

/// Moves to every cell within Chebyshev distance 3 whose offset is not a
/// multiple of a shorter move.
fn moves() -> Vec<(i64, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut out = Vec::new();
    for dx in -3i64..=3 {
        for dy in -3i64..=3 {
            if (dx, dy) != (0, 0) && gcd(dx.abs(), dy.abs()) == 1 {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn segment_keeps(walls: &[Segment], a: Point2, b: Point2, clearance: f64) -> bool {
    let seg = Segment::new(a, b);
    walls.iter().all(|w| w.distance_to_segment(&seg) >= clearance)
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Length of the shortest grid path from `from` to `to` keeping
/// `clearance` from all walls, or `None` when the grid finds no path.
///
/// Cells are `cell` apart; each move is checked exactly against the walls
/// unless both ends are far enough from every wall to make that
/// unnecessary. The start may sit closer to a wall than `clearance`; its
/// first move only has to keep the start's own clearance.
pub fn grid_distance(scenario: &Scenario, from: Point2, to: Point2, clearance: f64, cell: f64) -> Option<f64> {
    let walls = &scenario.walls;
    let origin = scenario.bounds.min;
    let nx = (scenario.bounds.width() / cell).floor() as usize + 1;
    let ny = (scenario.bounds.height() / cell).floor() as usize + 1;
    let at = |k: usize| origin + Vec2::new((k % nx) as f64 * cell, (k / nx) as f64 * cell);
    let clear: Vec<f64> = (0..nx * ny).map(|k| scenario.wall_clearance(at(k))).collect();
    let free = |k: usize| clear[k] >= clearance;

    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut heap = BinaryHeap::new();
    let link_radius = 3.0 * cell;
    let start_clearance = clearance.min(scenario.wall_clearance(from));
    let near = |p: Point2| {
        let ci = ((p.x - origin.x) / cell).round() as i64;
        let cj = ((p.y - origin.y) / cell).round() as i64;
        let mut out = Vec::new();
        for j in cj - 4..=cj + 4 {
            for i in ci - 4..=ci + 4 {
                if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                    continue;
                }
                let k = j as usize * nx + i as usize;
                if at(k).distance(p) <= link_radius {
                    out.push(k);
                }
            }
        }
        out
    };
    for k in near(from) {
        if free(k) && segment_keeps(walls, from, at(k), start_clearance) {
            dist[k] = from.distance(at(k));
            heap.push(Item(dist[k], k));
        }
    }
    let moves = moves();
    while let Some(Item(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        let (i, j) = ((k % nx) as i64, (k / nx) as i64);
        for &(dx, dy) in &moves {
            let (a, b) = (i + dx, j + dy);
            if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                continue;
            }
            let m = b as usize * nx + a as usize;
            if !free(m) {
                continue;
            }
            let len = cell * ((dx * dx + dy * dy) as f64).sqrt();
            let nd = d + len;
            if nd >= dist[m] {
                continue;
            }
            let cheap = clear[k].min(clear[m]) >= clearance + len / 2.0;
            if cheap || segment_keeps(walls, at(k), at(m), clearance) {
                dist[m] = nd;
                heap.push(Item(nd, m));
            }
        }
    }
    let mut best = if segment_keeps(walls, from, to, start_clearance) && scenario.wall_clearance(to) >= clearance {
        Some(from.distance(to))
    } else {
        None
    };
    for k in near(to) {
        if dist[k].is_finite() && segment_keeps(walls, at(k), to, clearance) {
            let total = dist[k] + at(k).distance(to);
            if best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
    }
    best
}
