//! Planar primitives shared by every module: vectors, segments, poses and
//! arc-length parameterized polylines.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Two-dimensional vector or point, in meters unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub type Point2 = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from +x.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn try_normalize(self) -> Option<Vec2> {
        let len = self.length();
        (len > 1e-12).then(|| self / len)
    }

    pub fn normalize_or_zero(self) -> Vec2 {
        self.try_normalize().unwrap_or(Vec2::ZERO)
    }

    /// Rotated by +90 degrees (counter-clockwise).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Vec2 {
        self.a.lerp(self.b, 0.5)
    }

    pub fn direction(&self) -> Vec2 {
        (self.b - self.a).normalize_or_zero()
    }

    /// Closest point on the segment to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let d = self.b - self.a;
        let len2 = d.length_squared();
        if len2 == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(d) / len2).clamp(0.0, 1.0);
        self.a + d * t
    }

    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        self.closest_point(p).distance(p)
    }

    /// Minimum distance between two closed segments.
    pub fn distance_to_segment(&self, other: &Segment) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        self.distance_to_point(other.a)
            .min(self.distance_to_point(other.b))
            .min(other.distance_to_point(self.a))
            .min(other.distance_to_point(self.b))
    }

    /// Closed-segment intersection test (touching counts).
    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = orient(other.a, other.b, self.a);
        let d2 = orient(other.a, other.b, self.b);
        let d3 = orient(self.a, self.b, other.a);
        let d4 = orient(self.a, self.b, other.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(other.a, other.b, self.a))
            || (d2 == 0.0 && on_segment(other.a, other.b, self.b))
            || (d3 == 0.0 && on_segment(self.a, self.b, other.a))
            || (d4 == 0.0 && on_segment(self.a, self.b, other.b))
    }

    /// Parameter `t` along `self` where it crosses `other`, if the two
    /// segments properly intersect or touch.
    pub fn crossing_parameter(&self, other: &Segment) -> Option<f64> {
        let r = self.b - self.a;
        let s = other.b - other.a;
        let denom = r.cross(s);
        if denom.abs() < 1e-15 {
            return self.intersects(other).then_some(0.0);
        }
        let qp = other.a - self.a;
        let t = qp.cross(s) / denom;
        let u = qp.cross(r) / denom;
        ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_with_tolerance(&self, p: Vec2, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Position and heading; heading is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolylineError {
    #[error("polyline needs at least one vertex")]
    Empty,
    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),
    #[error("vertex {0} is not finite")]
    NonFinite(usize),
}

/// Arc-length parameterized sequence of waypoints.
///
/// Consecutive vertices are distinct, so the cumulative arc length is
/// strictly increasing from 0. A single vertex is a valid zero-length path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct PathPolyline {
    vertices: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl TryFrom<Vec<Vec2>> for PathPolyline {
    type Error = PolylineError;
    fn try_from(v: Vec<Vec2>) -> Result<Self, Self::Error> {
        PathPolyline::new(v)
    }
}

impl From<PathPolyline> for Vec<Vec2> {
    fn from(p: PathPolyline) -> Self {
        p.vertices
    }
}

impl PathPolyline {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, PolylineError> {
        if vertices.is_empty() {
            return Err(PolylineError::Empty);
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        for i in 0..vertices.len() {
            if !vertices[i].is_finite() {
                return Err(PolylineError::NonFinite(i));
            }
            if i > 0 {
                let d = vertices[i - 1].distance(vertices[i]);
                if d == 0.0 {
                    return Err(PolylineError::DuplicateVertex(i - 1, i));
                }
                cumulative.push(cumulative[i - 1] + d);
            }
        }
        Ok(Self {
            vertices,
            cumulative,
        })
    }

    /// Builds a polyline dropping consecutive vertices closer than `eps`.
    pub fn from_points_dedup(points: impl IntoIterator<Item = Vec2>, eps: f64) -> Self {
        let mut vertices: Vec<Vec2> = Vec::new();
        for p in points {
            match vertices.last() {
                Some(last) if last.distance(p) <= eps => {}
                _ => vertices.push(p),
            }
        }
        PathPolyline::new(vertices).expect("deduplicated points form a valid polyline")
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn first(&self) -> Vec2 {
        self.vertices[0]
    }

    pub fn last(&self) -> Vec2 {
        *self.vertices.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn segment(&self, i: usize) -> Segment {
        Segment::new(self.vertices[i], self.vertices[i + 1])
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.vertices.windows(2).map(|w| Segment::new(w[0], w[1]))
    }

    /// Index of the segment containing arc length `s` (clamped).
    pub fn segment_at(&self, s: f64) -> usize {
        if self.segment_count() == 0 {
            return 0;
        }
        let idx = self.cumulative.partition_point(|&c| c <= s);
        idx.saturating_sub(1).min(self.segment_count() - 1)
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        if self.segment_count() == 0 {
            return self.vertices[0];
        }
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / seg_len).clamp(0.0, 1.0);
        self.vertices[i].lerp(self.vertices[i + 1], t)
    }

    /// Unit tangent at arc length `s`; at a vertex the outgoing segment wins.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        if self.segment_count() == 0 {
            return Vec2::new(1.0, 0.0);
        }
        self.segment(self.segment_at(s)).direction()
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangent_at(s).angle()
    }

    /// Signed turning angle at each interior vertex.
    pub fn turning_angles(&self) -> Vec<f64> {
        self.vertices
            .windows(3)
            .map(|w| {
                let a = (w[1] - w[0]).angle();
                let b = (w[2] - w[1]).angle();
                wrap_angle(b - a)
            })
            .collect()
    }

    /// Nearest point on the polyline: (arc length, distance).
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        self.project_within(p, 0.0, f64::INFINITY)
    }

    /// Nearest point restricted to arc lengths in `[from, to]`.
    pub fn project_within(&self, p: Vec2, from: f64, to: f64) -> (f64, f64) {
        if self.segment_count() == 0 {
            return (0.0, p.distance(self.vertices[0]));
        }
        let from = from.clamp(0.0, self.length());
        let to = to.clamp(from, self.length());
        let mut best = (from, f64::INFINITY);
        let first = self.segment_at(from);
        let last = self.segment_at(to);
        for i in first..=last {
            let seg = self.segment(i);
            let c0 = self.cumulative[i];
            let seg_len = self.cumulative[i + 1] - c0;
            let d = seg.b - seg.a;
            let t = ((p - seg.a).dot(d) / (seg_len * seg_len)).clamp(0.0, 1.0);
            let s = (c0 + t * seg_len).clamp(from, to);
            let q = self.point_at(s);
            let dist = q.distance(p);
            if dist < best.1 {
                best = (s, dist);
            }
        }
        best
    }

    /// Prefix of the path up to arc length `s`.
    pub fn truncate(&self, s: f64) -> PathPolyline {
        if s >= self.length() {
            return self.clone();
        }
        let s = s.max(0.0);
        let i = self.segment_at(s);
        let mut vertices = self.vertices[..=i].to_vec();
        let end = self.point_at(s);
        if end.distance(*vertices.last().unwrap()) > 1e-12 {
            vertices.push(end);
        }
        PathPolyline::new(vertices).expect("prefix of a valid polyline")
    }

    /// Suffix of the path starting at arc length `s`.
    pub fn suffix(&self, s: f64) -> PathPolyline {
        let s = s.clamp(0.0, self.length());
        let start = self.point_at(s);
        let i = self.segment_at(s);
        let mut vertices = vec![start];
        for &v in &self.vertices[i + 1..] {
            if v.distance(*vertices.last().unwrap()) > 1e-12 {
                vertices.push(v);
            }
        }
        PathPolyline::new(vertices).expect("suffix of a valid polyline")
    }

    /// Points every `spacing` meters along the path, always including both ends.
    pub fn resample(&self, spacing: f64) -> Vec<Vec2> {
        let n = (self.length() / spacing).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| self.point_at(self.length() * k as f64 / n as f64))
            .collect()
    }

    /// Symmetric Hausdorff distance between the vertex-and-edge sets,
    /// evaluated on a resampling at `spacing`.
    pub fn hausdorff(&self, other: &PathPolyline, spacing: f64) -> f64 {
        let directed = |a: &PathPolyline, b: &PathPolyline| {
            a.resample(spacing)
                .into_iter()
                .map(|p| b.project(p).1)
                .fold(0.0, f64::max)
        };
        directed(self, other).max(directed(other, self))
    }
}
