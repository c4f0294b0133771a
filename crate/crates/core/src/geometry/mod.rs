//! Domains, inclusions, polygonal cells and line-of-sight visibility.
//!
//! 1D problems reuse the 2D types with `y = 0` everywhere.

mod inclusion;
mod polygon;

pub use inclusion::{point_segment_distance, CircleInclusion, Inclusion};
pub use polygon::{interval_properties, Polygon, PolygonProps};

use crate::error::{QceError, Result};

pub type Point = nalgebra::Point2<f64>;
pub type Vector = nalgebra::Vector2<f64>;

/// z-component of the 2D cross product.
#[inline]
pub fn cross(a: &Vector, b: &Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn n(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }
}

/// Material subdomain an approximation lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    Matrix,
    Inclusion(usize),
}

impl std::fmt::Display for Subdomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subdomain::Matrix => write!(f, "matrix"),
            Subdomain::Inclusion(k) => write!(f, "inclusion {k}"),
        }
    }
}

/// Result of point classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Matrix,
    Inclusion(usize),
    Interface(usize),
}

/// Axis-aligned rectangle; in 1D `lo.y == hi.y == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub lo: Point,
    pub hi: Point,
}

impl Rect {
    pub fn new(lo: Point, hi: Point) -> Self {
        Rect { lo, hi }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Rect {
            lo: Point::new(lo, 0.0),
            hi: Point::new(hi, 0.0),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi.x - self.lo.x
    }

    pub fn height(&self) -> f64 {
        self.hi.y - self.lo.y
    }
}

/// Which side of the outer boundary a segment lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OuterSide {
    Left,
    Right,
    Bottom,
    Top,
}

impl OuterSide {
    pub const ALL: [OuterSide; 4] = [
        OuterSide::Left,
        OuterSide::Right,
        OuterSide::Bottom,
        OuterSide::Top,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OuterSide::Left => "left",
            OuterSide::Right => "right",
            OuterSide::Bottom => "bottom",
            OuterSide::Top => "top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentTag {
    /// Interface of inclusion `k`; the normal is n⁺ (inclusion to matrix).
    Interface(usize),
    Outer(OuterSide),
}

/// Straight boundary piece with a unit outward normal.
/// In 1D a segment degenerates to a point (`a == b`) of unit weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySegment {
    pub a: Point,
    pub b: Point,
    pub normal: Vector,
    pub tag: SegmentTag,
}

impl BoundarySegment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn is_point(&self) -> bool {
        self.a == self.b
    }

    /// Quadrature points and weights (2-point Gauss on a straight edge).
    pub fn quadrature(&self) -> Vec<(Point, f64)> {
        if self.is_point() {
            return vec![(self.a, 1.0)];
        }
        edge_gauss2(&self.a, &self.b).to_vec()
    }
}

/// Two-point Gauss rule on the straight edge `a -> b`.
pub fn edge_gauss2(a: &Point, b: &Point) -> [(Point, f64); 2] {
    let g = 0.5 / 3f64.sqrt();
    let half = 0.5 * (b - a).norm();
    let m = a + (b - a) * 0.5;
    let d = b - a;
    [(m - d * g, half), (m + d * g, half)]
}

/// Outward unit normal of the edge `a -> b` of a counter-clockwise loop.
pub fn edge_normal(a: &Point, b: &Point) -> Vector {
    let e = b - a;
    Vector::new(e.y, -e.x) / e.norm()
}

/// Integration cell geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    Interval { lo: f64, hi: f64 },
    Polygon(Polygon),
}

impl CellShape {
    pub fn measure(&self) -> f64 {
        match self {
            CellShape::Interval { lo, hi } => hi - lo,
            CellShape::Polygon(p) => p.area(),
        }
    }

    pub fn centroid(&self) -> Point {
        match self {
            CellShape::Interval { lo, hi } => Point::new(0.5 * (lo + hi), 0.0),
            CellShape::Polygon(p) => p.centroid(),
        }
    }

    /// Boundary quadrature: `(point, outward normal, weight)`.
    pub fn boundary_quadrature(&self) -> Vec<(Point, Vector, f64)> {
        match self {
            CellShape::Interval { lo, hi } => vec![
                (Point::new(*lo, 0.0), Vector::new(-1.0, 0.0), 1.0),
                (Point::new(*hi, 0.0), Vector::new(1.0, 0.0), 1.0),
            ],
            CellShape::Polygon(p) => {
                let mut out = Vec::with_capacity(2 * p.len());
                for (a, b) in p.edges() {
                    let n = edge_normal(&a, &b);
                    for (x, w) in edge_gauss2(&a, &b) {
                        out.push((x, n, w));
                    }
                }
                out
            }
        }
    }

    /// Boundary measure (perimeter, or the two endpoint weights in 1D).
    pub fn perimeter(&self) -> f64 {
        match self {
            CellShape::Interval { .. } => 2.0,
            CellShape::Polygon(p) => p.perimeter(),
        }
    }

    /// Vertices (interval endpoints in 1D).
    pub fn vertices(&self) -> Vec<Point> {
        match self {
            CellShape::Interval { lo, hi } => vec![Point::new(*lo, 0.0), Point::new(*hi, 0.0)],
            CellShape::Polygon(p) => p.vertices().to_vec(),
        }
    }

    /// Measure and second moments about `reference`.
    pub fn moments(&self, reference: &Point) -> (f64, f64, f64) {
        match self {
            CellShape::Interval { lo, hi } => {
                let (len, m) = interval_properties(*lo, *hi, reference.x);
                (len, m, 0.0)
            }
            CellShape::Polygon(p) => {
                let pr = p.properties(reference);
                (pr.area, pr.mxx, pr.myy)
            }
        }
    }
}

/// Relation of a cell to the inclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    FullyMatrix,
    FullyInclusion(usize),
    Straddles(usize),
}

/// Matrix region with embedded inclusions.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    dim: Dim,
    rect: Rect,
    inclusions: Vec<Inclusion>,
    tol: f64,
}

impl DomainSpec {
    /// 1D bar `[lo, hi]` with interval inclusions.
    pub fn new_1d(lo: f64, hi: f64, inclusions: Vec<(f64, f64)>) -> Result<Self> {
        let incs = inclusions
            .into_iter()
            .map(|(a, b)| Inclusion::Interval { lo: a, hi: b })
            .collect();
        DomainSpec::new(Dim::One, Rect::interval(lo, hi), incs)
    }

    pub fn new_2d(rect: Rect, inclusions: Vec<CircleInclusion>) -> Result<Self> {
        DomainSpec::new(
            Dim::Two,
            rect,
            inclusions.into_iter().map(Inclusion::Circle).collect(),
        )
    }

    pub fn new(dim: Dim, rect: Rect, inclusions: Vec<Inclusion>) -> Result<Self> {
        let finite = rect.lo.iter().chain(rect.hi.iter()).all(|v| v.is_finite());
        let ok = match dim {
            Dim::One => rect.width() > 0.0,
            Dim::Two => rect.width() > 0.0 && rect.height() > 0.0,
        };
        if !finite || !ok {
            return Err(QceError::InvalidArgument(format!(
                "matrix region must have positive extent, got {rect:?}"
            )));
        }
        let diam = (rect.hi - rect.lo).norm();
        let tol = 1e-9 * diam;
        let d = DomainSpec {
            dim,
            rect,
            inclusions,
            tol,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        for (k, inc) in self.inclusions.iter().enumerate() {
            match (self.dim, inc) {
                (Dim::One, Inclusion::Interval { lo, hi }) => {
                    if !(lo < hi) {
                        return Err(QceError::InvalidLayout(format!(
                            "inclusion {k} is an empty interval [{lo}, {hi}]"
                        )));
                    }
                }
                (Dim::Two, Inclusion::Circle(_)) => {}
                _ => {
                    return Err(QceError::InvalidLayout(format!(
                        "inclusion {k} does not match the problem dimension"
                    )))
                }
            }
            for p in inc.interface_points() {
                if !self.strictly_inside_rect(&p) {
                    return Err(QceError::InvalidLayout(format!(
                        "inclusion {k} is not strictly inside the matrix region"
                    )));
                }
            }
        }
        for i in 0..self.inclusions.len() {
            for j in i + 1..self.inclusions.len() {
                if self.overlap(i, j) {
                    return Err(QceError::InvalidLayout(format!(
                        "inclusions {i} and {j} overlap or touch"
                    )));
                }
            }
        }
        Ok(())
    }

    fn overlap(&self, i: usize, j: usize) -> bool {
        match (&self.inclusions[i], &self.inclusions[j]) {
            (Inclusion::Interval { lo: a0, hi: a1 }, Inclusion::Interval { lo: b0, hi: b1 }) => {
                a0.max(*b0) <= a1.min(*b1) + self.tol
            }
            (Inclusion::Circle(a), Inclusion::Circle(b)) => {
                (a.center() - b.center()).norm() <= a.radius() + b.radius() + self.tol
            }
            _ => true,
        }
    }

    fn strictly_inside_rect(&self, p: &Point) -> bool {
        let t = self.tol;
        match self.dim {
            Dim::One => p.x > self.rect.lo.x + t && p.x < self.rect.hi.x - t,
            Dim::Two => {
                p.x > self.rect.lo.x + t
                    && p.x < self.rect.hi.x - t
                    && p.y > self.rect.lo.y + t
                    && p.y < self.rect.hi.y - t
            }
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    pub fn inclusions(&self) -> &[Inclusion] {
        &self.inclusions
    }

    /// Default geometric tolerance, 1e-9 times the domain diameter.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn diameter(&self) -> f64 {
        (self.rect.hi - self.rect.lo).norm()
    }

    /// Measure of the whole rectangle (or bar length).
    pub fn total_measure(&self) -> f64 {
        match self.dim {
            Dim::One => self.rect.width(),
            Dim::Two => self.rect.width() * self.rect.height(),
        }
    }

    /// Matrix measure consistent with the polyline interfaces.
    pub fn matrix_measure(&self) -> f64 {
        self.total_measure() - self.inclusions.iter().map(|i| i.measure()).sum::<f64>()
    }

    pub fn subdomain_measure(&self, s: Subdomain) -> f64 {
        match s {
            Subdomain::Matrix => self.matrix_measure(),
            Subdomain::Inclusion(k) => self.inclusions[k].measure(),
        }
    }

    pub fn subdomains(&self) -> Vec<Subdomain> {
        std::iter::once(Subdomain::Matrix)
            .chain((0..self.inclusions.len()).map(Subdomain::Inclusion))
            .collect()
    }

    pub fn contains_closed_rect(&self, p: &Point, tol: f64) -> bool {
        match self.dim {
            Dim::One => p.x >= self.rect.lo.x - tol && p.x <= self.rect.hi.x + tol,
            Dim::Two => {
                p.x >= self.rect.lo.x - tol
                    && p.x <= self.rect.hi.x + tol
                    && p.y >= self.rect.lo.y - tol
                    && p.y <= self.rect.hi.y + tol
            }
        }
    }

    pub fn classify_point(&self, p: &Point, tol: f64) -> Result<Region> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(QceError::InvalidArgument(format!("non-finite point {p:?}")));
        }
        if !self.contains_closed_rect(p, tol) {
            return Err(QceError::OutsideDomain(*p));
        }
        for (k, inc) in self.inclusions.iter().enumerate() {
            let (c, r) = inc.bounding_circle();
            if (p - c).norm() > r + tol + self.tol {
                continue;
            }
            if inc.distance_to_interface(p) <= tol {
                return Ok(Region::Interface(k));
            }
            if inc.contains_strict(p, 0.0) {
                return Ok(Region::Inclusion(k));
            }
        }
        Ok(Region::Matrix)
    }

    /// Index of the inclusion strictly containing `p`, if any.
    pub fn inclusion_containing(&self, p: &Point, tol: f64) -> Option<usize> {
        self.inclusions.iter().position(|inc| {
            let (c, r) = inc.bounding_circle();
            (p - c).norm() < r + tol && inc.contains_strict(p, tol)
        })
    }

    /// Subdomain that owns `p` for field evaluation; interface points go to
    /// the inclusion.
    pub fn subdomain_of(&self, p: &Point) -> Result<Subdomain> {
        Ok(match self.classify_point(p, self.tol)? {
            Region::Matrix => Subdomain::Matrix,
            Region::Inclusion(k) | Region::Interface(k) => Subdomain::Inclusion(k),
        })
    }

    pub fn distance_to_interface(&self, p: &Point) -> f64 {
        self.inclusions
            .iter()
            .map(|i| i.distance_to_interface(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Line-of-sight between `p` and `q` inside subdomain `s`.
    ///
    /// For the matrix a segment is blocked when it passes through the
    /// interior of an inclusion while neither endpoint lies strictly inside
    /// that inclusion; segments running along the interface or the outer
    /// boundary stay visible. The rule for an inclusion is the mirror image.
    pub fn line_of_sight(&self, p: &Point, q: &Point, s: Subdomain) -> bool {
        self.line_of_sight_tol(p, q, s, self.tol)
    }

    pub fn line_of_sight_tol(&self, p: &Point, q: &Point, s: Subdomain, tol: f64) -> bool {
        match s {
            Subdomain::Matrix => !self.inclusions.iter().any(|inc| {
                let (c, r) = inc.bounding_circle();
                point_segment_distance(&c, p, q) < r + tol && inc.blocks_outside(p, q, tol)
            }),
            Subdomain::Inclusion(k) => match self.inclusions.get(k) {
                Some(inc) => !inc.blocks_inside(p, q, tol),
                None => false,
            },
        }
    }

    pub fn clip_cell_against_interface(&self, cell: &CellShape) -> CellClass {
        self.clip_cell_tol(cell, self.tol)
    }

    pub fn clip_cell_tol(&self, cell: &CellShape, tol: f64) -> CellClass {
        let verts = cell.vertices();
        let (c0, rc) = cell_bounding_circle(&verts);
        for (k, inc) in self.inclusions.iter().enumerate() {
            let (ci, ri) = inc.bounding_circle();
            if (c0 - ci).norm() > rc + ri + tol {
                continue;
            }
            match (inc, cell) {
                (Inclusion::Interval { lo, hi }, CellShape::Interval { lo: a, hi: b }) => {
                    let cuts = |x: f64| x > a + tol && x < b - tol;
                    if cuts(*lo) || cuts(*hi) {
                        return CellClass::Straddles(k);
                    }
                    if *a >= lo - tol && *b <= hi + tol {
                        return CellClass::FullyInclusion(k);
                    }
                }
                (Inclusion::Circle(circ), CellShape::Polygon(poly)) => {
                    let mut any_in = false;
                    let mut any_out = false;
                    for (a, b) in poly.edges() {
                        let (i, o) = circ.segment_sides(&a, &b, tol);
                        any_in |= i;
                        any_out |= o;
                    }
                    if any_in && any_out {
                        return CellClass::Straddles(k);
                    }
                    if !any_out {
                        return CellClass::FullyInclusion(k);
                    }
                    if circ
                        .polyline()
                        .iter()
                        .any(|v| (v - c0).norm() < rc && poly.contains_convex(v, tol))
                    {
                        return CellClass::Straddles(k);
                    }
                }
                _ => {}
            }
        }
        CellClass::FullyMatrix
    }

    /// Outer boundary segments of the rectangle, split at the given
    /// coordinates so that each piece matches one background cell edge.
    pub fn outer_segments(&self, xs: &[f64], ys: &[f64]) -> Vec<BoundarySegment> {
        let r = &self.rect;
        match self.dim {
            Dim::One => vec![
                BoundarySegment {
                    a: r.lo,
                    b: r.lo,
                    normal: Vector::new(-1.0, 0.0),
                    tag: SegmentTag::Outer(OuterSide::Left),
                },
                BoundarySegment {
                    a: r.hi,
                    b: r.hi,
                    normal: Vector::new(1.0, 0.0),
                    tag: SegmentTag::Outer(OuterSide::Right),
                },
            ],
            Dim::Two => {
                let mut out = Vec::new();
                for w in xs.windows(2) {
                    out.push(BoundarySegment {
                        a: Point::new(w[0], r.lo.y),
                        b: Point::new(w[1], r.lo.y),
                        normal: Vector::new(0.0, -1.0),
                        tag: SegmentTag::Outer(OuterSide::Bottom),
                    });
                }
                for w in ys.windows(2) {
                    out.push(BoundarySegment {
                        a: Point::new(r.hi.x, w[0]),
                        b: Point::new(r.hi.x, w[1]),
                        normal: Vector::new(1.0, 0.0),
                        tag: SegmentTag::Outer(OuterSide::Right),
                    });
                }
                for w in xs.windows(2).rev() {
                    out.push(BoundarySegment {
                        a: Point::new(w[1], r.hi.y),
                        b: Point::new(w[0], r.hi.y),
                        normal: Vector::new(0.0, 1.0),
                        tag: SegmentTag::Outer(OuterSide::Top),
                    });
                }
                for w in ys.windows(2).rev() {
                    out.push(BoundarySegment {
                        a: Point::new(r.lo.x, w[1]),
                        b: Point::new(r.lo.x, w[0]),
                        normal: Vector::new(-1.0, 0.0),
                        tag: SegmentTag::Outer(OuterSide::Left),
                    });
                }
                out
            }
        }
    }

    /// Interface pieces of inclusion `k` with normal n⁺ (inclusion to matrix),
    /// one per polyline edge.
    pub fn interface_segments(&self, k: usize) -> Vec<BoundarySegment> {
        match &self.inclusions[k] {
            Inclusion::Interval { lo, hi } => vec![
                BoundarySegment {
                    a: Point::new(*lo, 0.0),
                    b: Point::new(*lo, 0.0),
                    normal: Vector::new(-1.0, 0.0),
                    tag: SegmentTag::Interface(k),
                },
                BoundarySegment {
                    a: Point::new(*hi, 0.0),
                    b: Point::new(*hi, 0.0),
                    normal: Vector::new(1.0, 0.0),
                    tag: SegmentTag::Interface(k),
                },
            ],
            Inclusion::Circle(c) => (0..c.polyline().len())
                .map(|i| {
                    let (a, b) = c.edge(i);
                    BoundarySegment {
                        a,
                        b,
                        normal: edge_normal(&a, &b),
                        tag: SegmentTag::Interface(k),
                    }
                })
                .collect(),
        }
    }
}

fn cell_bounding_circle(verts: &[Point]) -> (Point, f64) {
    let n = verts.len() as f64;
    let c = Point::from(verts.iter().fold(Vector::zeros(), |s, v| s + v.coords) / n);
    let r = verts.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
    (c, r)
}
