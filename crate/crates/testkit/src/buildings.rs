//! Random room-and-corridor buildings.

use std::collections::BTreeMap;

use evacsim_core::geometry::{Point2, Rect, Segment, Vec2};
use evacsim_core::{Exit, Scenario};
use rand::Rng;

const EXIT_WIDTH: f64 = 1.2;

/// Wall from `a` to `b` with openings at the given arc-length intervals.
fn wall_with_gaps(a: Point2, b: Point2, gaps: &[(f64, f64)]) -> Vec<Segment> {
    let len = a.distance(b);
    let dir = (b - a) / len;
    let mut gaps = gaps.to_vec();
    gaps.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for (g0, g1) in gaps {
        if g0 > cursor {
            out.push(Segment::new(a + dir * cursor, a + dir * g0));
        }
        cursor = g1;
    }
    if cursor < len {
        out.push(Segment::new(a + dir * cursor, b));
    }
    out
}

/// A rectangular building divided by full-height partitions with doors,
/// plus a few free-standing walls, with one or two exits in the outer
/// wall. Every start position can reach an exit at 0.25 m clearance.
pub fn random_building<R: Rng>(rng: &mut R, id: &str) -> Scenario {
    loop {
        if let Some(s) = try_building(rng, id) {
            return s;
        }
    }
}

fn try_building<R: Rng>(rng: &mut R, id: &str) -> Option<Scenario> {
    let w: f64 = rng.gen_range(10.0..20.0);
    let h: f64 = rng.gen_range(8.0..16.0);
    let corners = [
        Vec2::new(0.0, 0.0),
        Vec2::new(w, 0.0),
        Vec2::new(w, h),
        Vec2::new(0.0, h),
    ];
    let n_exits = rng.gen_range(1..=2);
    let mut side_gaps: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 4];
    let mut exits = Vec::new();
    let mut used_sides = Vec::new();
    for e in 0..n_exits {
        let side = loop {
            let s = rng.gen_range(0..4usize);
            if !used_sides.contains(&s) {
                break s;
            }
        };
        used_sides.push(side);
        let (a, b) = (corners[side], corners[(side + 1) % 4]);
        let len = a.distance(b);
        let g0 = rng.gen_range(1.0..len - 1.0 - EXIT_WIDTH);
        side_gaps[side].push((g0, g0 + EXIT_WIDTH));
        let dir = (b - a) / len;
        exits.push(Exit {
            id: format!("exit{e}"),
            portal: Segment::new(a + dir * g0, a + dir * (g0 + EXIT_WIDTH)),
            label: format!("exit {e}"),
        });
    }
    let mut walls = Vec::new();
    for side in 0..4 {
        walls.extend(wall_with_gaps(corners[side], corners[(side + 1) % 4], &side_gaps[side]));
    }

    // vertical partitions, each with one or two doors
    let partitions = rng.gen_range(1..=3);
    let mut x = 0.0;
    for _ in 0..partitions {
        x += rng.gen_range(3.0..6.0);
        if x > w - 3.0 {
            break;
        }
        let mut gaps = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            let width = rng.gen_range(1.0..1.6);
            let y0 = rng.gen_range(0.5..h - 0.5 - width);
            gaps.push((y0, y0 + width));
        }
        gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
        if gaps.len() == 2 && gaps[1].0 < gaps[0].1 + 0.5 {
            gaps.pop();
        }
        walls.extend(wall_with_gaps(Vec2::new(x, 0.0), Vec2::new(x, h), &gaps));
    }

    // free-standing obstacles
    for _ in 0..rng.gen_range(0..=3) {
        let c = Vec2::new(rng.gen_range(1.5..w - 1.5), rng.gen_range(1.5..h - 1.5));
        let half = rng.gen_range(0.5..1.5);
        let seg = if rng.gen_bool(0.5) {
            Segment::new(c - Vec2::new(half, 0.0), c + Vec2::new(half, 0.0))
        } else {
            Segment::new(c - Vec2::new(0.0, half), c + Vec2::new(0.0, half))
        };
        if walls.iter().all(|wl| wl.distance_to_segment(&seg) > 1.2) {
            walls.push(seg);
        }
    }

    let bounds = Rect::new(Vec2::new(-1.0, -1.0), Vec2::new(w + 1.0, h + 1.0));
    let probe = Scenario::from_parts(
        id.to_string(),
        bounds,
        walls.clone(),
        exits.clone(),
        Vec::new(),
        BTreeMap::new(),
        Vec::new(),
        Vec::new(),
    )
    .ok()?;
    let mut starts = Vec::new();
    for _ in 0..200 {
        if starts.len() == 4 {
            break;
        }
        let p = Vec2::new(rng.gen_range(0.5..w - 0.5), rng.gen_range(0.5..h - 0.5));
        if probe.wall_clearance(p) >= 0.5 && probe.nearest_exit(p).is_ok() {
            starts.push(p);
        }
    }
    if starts.len() < 4 {
        return None;
    }
    Scenario::from_parts(
        id.to_string(),
        bounds,
        walls,
        exits,
        starts,
        BTreeMap::new(),
        Vec::new(),
        Vec::new(),
    )
    .ok()
}
