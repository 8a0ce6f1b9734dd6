use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Scenario;
use crate::geometry::{Point2, Vec2};

const CELL: f64 = 0.1;
const FREE_CLEARANCE: f64 = 0.2;
const LOOKUP_RADIUS: i64 = 4;

// 16-neighbourhood: the 8 king moves plus the 8 knight moves.
const MOVES: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

/// Approximate geodesic distance to the nearest exit on a 10 cm grid.
///
/// Used for cheap "who is closer to a way out" comparisons during stepping;
/// path lengths that matter for correctness come from the visibility graph.
#[derive(Debug, Clone)]
pub struct DistanceField {
    origin: Point2,
    nx: usize,
    ny: usize,
    free: Vec<bool>,
    dist: Vec<f64>,
}

#[derive(PartialEq)]
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

impl DistanceField {
    pub fn build(scenario: &Scenario) -> DistanceField {
        let origin = scenario.bounds.min;
        let nx = (scenario.bounds.width() / CELL).ceil() as usize + 1;
        let ny = (scenario.bounds.height() / CELL).ceil() as usize + 1;
        let center = |i: usize, j: usize| origin + Vec2::new(i as f64 * CELL, j as f64 * CELL);
        let mut free = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = center(i, j);
                free[j * nx + i] =
                    scenario.bounds.contains(c) && scenario.wall_clearance(c) >= FREE_CLEARANCE;
            }
        }
        let mut dist = vec![f64::INFINITY; nx * ny];
        let mut heap = BinaryHeap::new();
        for exit in &scenario.exits {
            for j in 0..ny {
                for i in 0..nx {
                    let k = j * nx + i;
                    if !free[k] {
                        continue;
                    }
                    let d = exit.portal.distance_to_point(center(i, j));
                    if d <= CELL && d < dist[k] {
                        dist[k] = d;
                        heap.push(Item(d, k));
                    }
                }
            }
        }
        while let Some(Item(d, k)) = heap.pop() {
            if d > dist[k] {
                continue;
            }
            let (i, j) = ((k % nx) as i64, (k / nx) as i64);
            for (di, dj) in MOVES {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                    continue;
                }
                let m = b as usize * nx + a as usize;
                if !free[m] {
                    continue;
                }
                let nd = d + CELL * ((di * di + dj * dj) as f64).sqrt();
                if nd < dist[m] {
                    dist[m] = nd;
                    heap.push(Item(nd, m));
                }
            }
        }
        DistanceField {
            origin,
            nx,
            ny,
            free,
            dist,
        }
    }

    /// Distance to the nearest exit from `p`; infinite where no free cell
    /// with a clear view of `p` lies nearby.
    pub fn distance(&self, scenario: &Scenario, p: Point2) -> f64 {
        let ci = ((p.x - self.origin.x) / CELL).round() as i64;
        let cj = ((p.y - self.origin.y) / CELL).round() as i64;
        let mut best = f64::INFINITY;
        for r in 0..=LOOKUP_RADIUS {
            for j in cj - r..=cj + r {
                for i in ci - r..=ci + r {
                    if (i - ci).abs() != r && (j - cj).abs() != r {
                        continue;
                    }
                    if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                        continue;
                    }
                    let k = j as usize * self.nx + i as usize;
                    if !self.free[k] || !self.dist[k].is_finite() {
                        continue;
                    }
                    let c = self.origin + Vec2::new(i as f64 * CELL, j as f64 * CELL);
                    let d = self.dist[k] + c.distance(p);
                    if d < best && scenario.line_of_sight_unchecked(p, c) {
                        best = d;
                    }
                }
            }
            if best.is_finite() && r >= 1 {
                break;
            }
        }
        best
    }
}
