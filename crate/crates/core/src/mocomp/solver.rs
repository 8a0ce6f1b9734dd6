//! Curvature assignment for compressed paths.
//!
//! A depth-first branch and bound over a curvature grid looks for cheap
//! feasible assignments, trying first the choices after which a full circle
//! at maximum curvature still fits. Coordinate descent then shrinks each
//! curvature toward zero as far as containment allows, from the best grid
//! solutions and a few uniform assignments, and the cheapest result wins.

use std::f64::consts::TAU;

use super::arc::{advance, Arc};
use super::Workspace;
use crate::geometry::Pose;

/// Arcs are kept this far inside the inset workspace.
const SAFETY: f64 = 1e-9;
const SCAN_STEPS: usize = 24;
const BISECTION_STEPS: usize = 40;
const MAX_PASSES: usize = 30;
const UNIFORM_STARTS: usize = 3;
const KEPT_SOLUTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest allowed |curvature|, 1/m.
    pub kappa_max: f64,
    /// Number of curvature values in the search grid over [−κ_max, κ_max].
    pub grid_size: usize,
    /// Search nodes expanded before giving up.
    pub node_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kappa_max: 1.0,
            grid_size: 81,
            node_budget: 50_000,
        }
    }
}

pub(crate) struct Problem<'a> {
    pub lengths: Vec<f64>,
    /// Heading change applied after segment i, for all but the last segment.
    pub turns: Vec<f64>,
    pub start: Pose,
    pub workspace: &'a Workspace,
}

impl Problem<'_> {
    fn next_start(&self, i: usize, end: Pose) -> Pose {
        match self.turns.get(i) {
            Some(t) => Pose::new(end.position, end.heading + t),
            None => end,
        }
    }

    pub fn arcs(&self, kappas: &[f64]) -> Vec<Arc> {
        let mut pose = self.start;
        let mut out = Vec::with_capacity(kappas.len());
        for (i, (&k, &len)) in kappas.iter().zip(&self.lengths).enumerate() {
            let arc = Arc {
                curvature: k,
                length: len,
                start_pose: pose,
            };
            pose = self.next_start(i, arc.end_pose());
            out.push(arc);
        }
        out
    }

    fn arc_fits(&self, pose: Pose, kappa: f64, len: f64) -> bool {
        Arc {
            curvature: kappa,
            length: len,
            start_pose: pose,
        }
        .contained_in(self.workspace, -SAFETY)
    }

    /// Start pose of segment `from`, given the curvatures before it.
    fn pose_before(&self, kappas: &[f64], from: usize) -> Pose {
        let mut pose = self.start;
        for i in 0..from {
            pose = self.next_start(i, advance(pose, kappas[i], self.lengths[i]));
        }
        pose
    }

    /// Feasibility of segments `from..` starting at `pose`.
    fn feasible_from(&self, kappas: &[f64], from: usize, mut pose: Pose) -> bool {
        for i in from..kappas.len() {
            if !self.arc_fits(pose, kappas[i], self.lengths[i]) {
                return false;
            }
            pose = self.next_start(i, advance(pose, kappas[i], self.lengths[i]));
        }
        true
    }

    pub fn feasible(&self, kappas: &[f64]) -> bool {
        self.feasible_from(kappas, 0, self.start)
    }

    /// Whether a full circle at maximum curvature fits from `pose`, on either side.
    fn safe(&self, pose: Pose, kappa_max: f64) -> bool {
        [kappa_max, -kappa_max]
            .into_iter()
            .any(|k| self.arc_fits(pose, k, TAU / kappa_max))
    }
}

pub(crate) fn cost(kappas: &[f64]) -> f64 {
    kappas.iter().map(|k| k * k).sum()
}

/// Minimum-cost curvature assignment found by the solver, or `None` when
/// no feasible assignment was found.
pub(crate) fn solve(problem: &Problem<'_>, options: &SolverOptions) -> Option<Vec<f64>> {
    let n = problem.lengths.len();
    let zero = vec![0.0; n];
    if problem.feasible(&zero) {
        return Some(zero);
    }
    let kmax = options.kappa_max;
    let grid: Vec<f64> = {
        let m = options.grid_size.max(3) | 1;
        let mut g: Vec<f64> = (0..m)
            .map(|j| -kmax + 2.0 * kmax * j as f64 / (m - 1) as f64)
            .collect();
        g.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)));
        g
    };

    let mut search = Search {
        problem,
        grid: &grid,
        kmax,
        budget: options.node_budget,
        current: Vec::with_capacity(n),
        found: Vec::new(),
    };
    search.expand(problem.start, 0.0);
    let mut starts: Vec<Vec<f64>> = search.found.into_iter().rev().take(KEPT_SOLUTIONS).collect();
    starts.extend(
        grid.iter()
            .map(|&c| vec![c; n])
            .filter(|k| problem.feasible(k))
            .take(UNIFORM_STARTS),
    );

    starts
        .into_iter()
        .map(|mut k| {
            descend(problem, &mut k);
            k
        })
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
}

/// Depth-first branch and bound over the curvature grid. Every complete
/// assignment cheaper than the previous best is recorded in `found`.
struct Search<'p, 'w> {
    problem: &'p Problem<'w>,
    grid: &'p [f64],
    kmax: f64,
    budget: usize,
    current: Vec<f64>,
    found: Vec<Vec<f64>>,
}

impl Search<'_, '_> {
    fn bound(&self) -> f64 {
        self.found.last().map_or(f64::INFINITY, |k| cost(k))
    }

    fn expand(&mut self, pose: Pose, cost_so_far: f64) {
        let problem = self.problem;
        let i = self.current.len();
        if i == problem.lengths.len() {
            self.found.push(self.current.clone());
            return;
        }
        if self.budget == 0 {
            return;
        }
        self.budget -= 1;
        let len = problem.lengths[i];
        let last = i + 1 == problem.lengths.len();
        let bound = self.bound();
        let mut candidates: Vec<(bool, f64, Pose)> = self
            .grid
            .iter()
            .filter(|&&k| cost_so_far + k * k < bound && problem.arc_fits(pose, k, len))
            .map(|&k| {
                let next = problem.next_start(i, advance(pose, k, len));
                let risky = !last && !problem.safe(next, self.kmax);
                (risky, k, next)
            })
            .collect();
        // stable: grid order (small |κ| first) within each safety class
        candidates.sort_by_key(|c| c.0);
        for (_, k, next) in candidates {
            if cost_so_far + k * k >= self.bound() {
                continue;
            }
            self.current.push(k);
            self.expand(next, cost_so_far + k * k);
            self.current.pop();
            if self.budget == 0 {
                return;
            }
        }
    }
}

/// Coordinate descent: move each curvature toward zero while the whole
/// path stays feasible, until no curvature shrinks.
fn descend(problem: &Problem<'_>, kappas: &mut [f64]) {
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for i in 0..kappas.len() {
            let current = kappas[i];
            if current == 0.0 {
                continue;
            }
            let pose = problem.pose_before(kappas, i);
            let check = |k: &mut [f64], v: f64| {
                k[i] = v;
                problem.feasible_from(k, i, pose)
            };
            let mut infeasible: Option<f64> = None;
            let mut feasible = current;
            for j in 0..SCAN_STEPS {
                let v = current * j as f64 / SCAN_STEPS as f64;
                if check(kappas, v) {
                    feasible = v;
                    break;
                }
                infeasible = Some(v);
            }
            if let Some(mut bad) = infeasible {
                let mut good = feasible;
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (bad + good);
                    if check(kappas, mid) {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                feasible = good;
            }
            kappas[i] = feasible;
            if feasible.abs() < current.abs() - 1e-12 {
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}
