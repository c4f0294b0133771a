use std::f64::consts::TAU;

use super::{cross, Point, Polygon, Vector};
use crate::error::{QceError, Result};

/// A material inclusion: an interval in 1D or a circle represented by a
/// closed polyline through its interface nodes in 2D.
#[derive(Debug, Clone, PartialEq)]
pub enum Inclusion {
    Interval { lo: f64, hi: f64 },
    Circle(CircleInclusion),
}

/// Circular inclusion whose discrete interface is a counter-clockwise
/// polyline, star-shaped about the circle center.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleInclusion {
    center: Point,
    radius: f64,
    polyline: Vec<Point>,
    /// Unwrapped vertex angles, strictly increasing, spanning less than 2π.
    angles: Vec<f64>,
    r_max: f64,
    r_in: f64,
}

impl CircleInclusion {
    pub fn new(center: Point, radius: f64, polyline: Vec<Point>) -> Result<Self> {
        if !(radius > 0.0) || polyline.len() < 3 {
            return Err(QceError::Geometry(format!(
                "circle inclusion needs radius > 0 and >= 3 polyline vertices (r = {radius}, n = {})",
                polyline.len()
            )));
        }
        let mut angles = Vec::with_capacity(polyline.len());
        let a0 = angle_of(&center, &polyline[0]);
        for p in &polyline {
            let mut a = angle_of(&center, p);
            while a < a0 {
                a += TAU;
            }
            while a >= a0 + TAU {
                a -= TAU;
            }
            angles.push(a);
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QceError::Geometry(
                "interface polyline must be counter-clockwise and star-shaped about the center"
                    .into(),
            ));
        }
        let r_max = polyline
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0, f64::max);
        let n = polyline.len();
        let r_in = (0..n)
            .map(|i| point_segment_distance(&center, &polyline[i], &polyline[(i + 1) % n]))
            .fold(f64::MAX, f64::min);
        Ok(CircleInclusion {
            center,
            radius,
            polyline,
            angles,
            r_max,
            r_in,
        })
    }

    /// Regular polyline with `n` vertices on the circle, first vertex at `phase`.
    pub fn regular(center: Point, radius: f64, n: usize, phase: f64) -> Result<Self> {
        let polyline = (0..n)
            .map(|j| {
                let t = phase + TAU * j as f64 / n as f64;
                Point::new(center.x + radius * t.cos(), center.y + radius * t.sin())
            })
            .collect();
        CircleInclusion::new(center, radius, polyline)
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn polyline(&self) -> &[Point] {
        &self.polyline
    }

    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.polyline.clone()).expect("validated polyline")
    }

    pub fn edge(&self, i: usize) -> (Point, Point) {
        let n = self.polyline.len();
        (self.polyline[i % n], self.polyline[(i + 1) % n])
    }

    /// Index of the edge cut by the ray from the center at angle `theta`.
    fn edge_at_angle(&self, theta: f64) -> usize {
        let a0 = self.angles[0];
        let mut t = theta;
        while t < a0 {
            t += TAU;
        }
        while t >= a0 + TAU {
            t -= TAU;
        }
        // last vertex with angle <= t
        match self.angles.partition_point(|&a| a <= t) {
            0 => self.angles.len() - 1,
            k => k - 1,
        }
    }

    /// Signed distance from `p` to the supporting line of the edge crossed by
    /// the ray through `p`; positive inside.
    pub fn inside_depth(&self, p: &Point) -> f64 {
        let d = p - self.center;
        let r = d.norm();
        if r > self.r_max {
            return -(r - self.r_max).max(f64::MIN_POSITIVE);
        }
        if r < self.r_in {
            return self.r_in - r;
        }
        let i = self.edge_at_angle(d.y.atan2(d.x));
        let (a, b) = self.edge(i);
        let e = b - a;
        cross(&e, &(p - a)) / e.norm()
    }

    pub fn contains_strict(&self, p: &Point, tol: f64) -> bool {
        self.inside_depth(p) > tol
    }

    pub fn distance_to_interface(&self, p: &Point) -> f64 {
        let n = self.polyline.len();
        (0..n)
            .map(|i| {
                let (a, b) = self.edge(i);
                point_segment_distance(p, &a, &b)
            })
            .fold(f64::MAX, f64::min)
    }

    /// Candidate edges the segment `p -> q` may touch.
    pub(crate) fn candidate_edges(&self, p: &Point, q: &Point, tol: f64) -> Vec<usize> {
        let n = self.polyline.len();
        let d = q - p;
        let len2 = d.norm_squared();
        let rr = self.r_max + tol;
        let f = p - self.center;
        // |f + s d|^2 = rr^2
        let (s0, s1) = if len2 == 0.0 {
            if f.norm() > rr {
                return Vec::new();
            }
            (0.0, 0.0)
        } else {
            let b = f.dot(&d) / len2;
            let c = (f.norm_squared() - rr * rr) / len2;
            let disc = b * b - c;
            if disc < 0.0 {
                return Vec::new();
            }
            let sq = disc.sqrt();
            let s0 = (-b - sq).max(0.0);
            let s1 = (-b + sq).min(1.0);
            if s0 > s1 {
                return Vec::new();
            }
            (s0, s1)
        };
        let u = f + d * s0;
        let v = f + d * s1;
        let small = 1e-9 * self.r_max;
        let sweep = cross(&u, &v);
        if u.norm() < small || v.norm() < small || sweep.abs() < 1e-12 * self.r_max * self.r_max {
            // degenerate sweep (segment through the center or a point query)
            if (u - v).norm() < small && u.norm() >= small {
                let i = self.edge_at_angle(u.y.atan2(u.x));
                return vec![(i + n - 1) % n, i, (i + 1) % n];
            }
            return (0..n).collect();
        }
        let i0 = self.edge_at_angle(u.y.atan2(u.x));
        let i1 = self.edge_at_angle(v.y.atan2(v.x));
        let step = if sweep > 0.0 { 1 } else { n - 1 };
        let mut out = vec![(i0 + n - step) % n];
        let mut i = i0;
        loop {
            out.push(i);
            if i == i1 || out.len() > n {
                break;
            }
            i = (i + step) % n;
        }
        out.push((i1 + step) % n);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Sorted parameters along `p -> q` where the segment meets the polyline.
    pub(crate) fn crossings(&self, p: &Point, q: &Point, tol: f64) -> Vec<f64> {
        let mut ts = Vec::new();
        for i in self.candidate_edges(p, q, tol) {
            let (a, b) = self.edge(i);
            segment_intersections(p, q, &a, &b, tol, &mut ts);
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts
    }

    /// True when the segment `p -> q` passes through the interior and
    /// neither endpoint lies strictly inside.
    pub fn blocks_outside(&self, p: &Point, q: &Point, tol: f64) -> bool {
        if self.contains_strict(p, tol) || self.contains_strict(q, tol) {
            return false;
        }
        let len = (q - p).norm();
        if len <= tol {
            return false;
        }
        let ts = self.crossings(p, q, tol);
        ts.windows(2).any(|w| {
            (w[1] - w[0]) * len > tol && self.contains_strict(&(p + (q - p) * (0.5 * (w[0] + w[1]))), tol)
        })
    }

    /// True when the segment leaves the inclusion and re-enters it while
    /// neither endpoint lies strictly outside.
    pub fn blocks_inside(&self, p: &Point, q: &Point, tol: f64) -> bool {
        if self.inside_depth(p) < -tol || self.inside_depth(q) < -tol {
            return false;
        }
        let len = (q - p).norm();
        if len <= tol {
            return false;
        }
        let ts = self.crossings(p, q, tol);
        ts.windows(2).any(|w| {
            (w[1] - w[0]) * len > tol
                && self.inside_depth(&(p + (q - p) * (0.5 * (w[0] + w[1])))) < -tol
        })
    }

    /// Whether pieces of the segment `p -> q` lie strictly inside and
    /// strictly outside the polyline, as `(inside, outside)`.
    pub fn segment_sides(&self, p: &Point, q: &Point, tol: f64) -> (bool, bool) {
        let mut ts = vec![0.0];
        ts.extend(self.crossings(p, q, tol));
        ts.push(1.0);
        let len = (q - p).norm();
        let (mut inside, mut outside) = (false, false);
        for w in ts.windows(2) {
            if (w[1] - w[0]) * len <= tol {
                continue;
            }
            let d = self.inside_depth(&(p + (q - p) * (0.5 * (w[0] + w[1]))));
            inside |= d > tol;
            outside |= d < -tol;
        }
        (inside, outside)
    }
}

impl Inclusion {
    pub fn contains_strict(&self, p: &Point, tol: f64) -> bool {
        match self {
            Inclusion::Interval { lo, hi } => p.x > lo + tol && p.x < hi - tol,
            Inclusion::Circle(c) => c.contains_strict(p, tol),
        }
    }

    /// Inside or on the interface (within `tol`).
    pub fn contains_closed(&self, p: &Point, tol: f64) -> bool {
        match self {
            Inclusion::Interval { lo, hi } => p.x >= lo - tol && p.x <= hi + tol,
            Inclusion::Circle(c) => c.inside_depth(p) >= -tol,
        }
    }

    pub fn distance_to_interface(&self, p: &Point) -> f64 {
        match self {
            Inclusion::Interval { lo, hi } => (p.x - lo).abs().min((p.x - hi).abs()),
            Inclusion::Circle(c) => c.distance_to_interface(p),
        }
    }

    /// Ordered interface vertices (two points in 1D).
    pub fn interface_points(&self) -> Vec<Point> {
        match self {
            Inclusion::Interval { lo, hi } => vec![Point::new(*lo, 0.0), Point::new(*hi, 0.0)],
            Inclusion::Circle(c) => c.polyline().to_vec(),
        }
    }

    /// Measure of the discrete inclusion (polyline-consistent area or length).
    pub fn measure(&self) -> f64 {
        match self {
            Inclusion::Interval { lo, hi } => hi - lo,
            Inclusion::Circle(c) => c.polygon().area(),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Inclusion::Interval { .. } => 2.0,
            Inclusion::Circle(c) => c.polygon().perimeter(),
        }
    }

    /// Center and bounding radius.
    pub fn bounding_circle(&self) -> (Point, f64) {
        match self {
            Inclusion::Interval { lo, hi } => (Point::new(0.5 * (lo + hi), 0.0), 0.5 * (hi - lo)),
            Inclusion::Circle(c) => (c.center, c.r_max),
        }
    }

    pub fn blocks_outside(&self, p: &Point, q: &Point, tol: f64) -> bool {
        match self {
            Inclusion::Interval { lo, hi } => {
                if self.contains_strict(p, tol) || self.contains_strict(q, tol) {
                    return false;
                }
                let a = p.x.min(q.x);
                let b = p.x.max(q.x);
                b.min(*hi) - a.max(*lo) > tol
            }
            Inclusion::Circle(c) => c.blocks_outside(p, q, tol),
        }
    }

    pub fn blocks_inside(&self, p: &Point, q: &Point, tol: f64) -> bool {
        match self {
            Inclusion::Interval { .. } => false,
            Inclusion::Circle(c) => c.blocks_inside(p, q, tol),
        }
    }
}

fn angle_of(center: &Point, p: &Point) -> f64 {
    let d = p - center;
    d.y.atan2(d.x)
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let e = b - a;
    let l2 = e.norm_squared();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&e) / l2).clamp(0.0, 1.0);
    (p - (a + e * t)).norm()
}

/// Appends the parameters `t` along `p -> q` at which it meets segment `a-b`
/// (two values for a collinear overlap).
fn segment_intersections(p: &Point, q: &Point, a: &Point, b: &Point, tol: f64, out: &mut Vec<f64>) {
    let d: Vector = q - p;
    let e: Vector = b - a;
    let len = d.norm();
    let el = e.norm();
    if len == 0.0 || el == 0.0 {
        return;
    }
    let den = cross(&d, &e);
    let w = a - p;
    if den.abs() > 1e-12 * len * el {
        let t = cross(&w, &e) / den;
        let u = cross(&w, &d) / den;
        let et = tol / len;
        let eu = tol / el;
        if t >= -et && t <= 1.0 + et && u >= -eu && u <= 1.0 + eu {
            out.push(t.clamp(0.0, 1.0));
        }
    } else if cross(&w, &d).abs() / len <= tol {
        let ta = w.dot(&d) / (len * len);
        let tb = (b - p).dot(&d) / (len * len);
        let lo = ta.min(tb).max(0.0);
        let hi = ta.max(tb).min(1.0);
        if lo <= hi {
            out.push(lo);
            out.push(hi);
        }
    }
}
