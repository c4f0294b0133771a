use super::{cross, Point, Vector};
use crate::error::{QceError, Result};

/// Simple polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

/// Area, centroid and second moments of a polygon about a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonProps {
    pub area: f64,
    pub centroid: Point,
    /// ∫ (x - x_ref)² dΩ
    pub mxx: f64,
    /// ∫ (y - y_ref)² dΩ
    pub myy: f64,
}

impl Polygon {
    /// Builds a polygon, reorienting clockwise input to counter-clockwise.
    /// Repeated vertices (including a closing copy of the first) are dropped.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        let merge = 1e-12 * bbox_diag(&vertices);
        vertices.dedup_by(|b, a| (*b - *a).norm() <= merge);
        while vertices.len() > 1 && (vertices[vertices.len() - 1] - vertices[0]).norm() <= merge {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(QceError::DegenerateCell(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let a = signed_area(&vertices);
        let scale = bbox_diag(&vertices);
        if !a.is_finite() || a.abs() <= 1e-14 * scale * scale {
            return Err(QceError::DegenerateCell(format!("polygon area {a:e}")));
        }
        if a < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon { vertices })
    }

    /// Axis-aligned square given its center and side length.
    pub fn square(center: Point, side: f64) -> Result<Self> {
        let h = 0.5 * side;
        Polygon::new(vec![
            Point::new(center.x - h, center.y - h),
            Point::new(center.x + h, center.y - h),
            Point::new(center.x + h, center.y + h),
            Point::new(center.x - h, center.y + h),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as (start, end) pairs in counter-clockwise order.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn centroid(&self) -> Point {
        self.properties(&self.vertices[0]).centroid
    }

    /// Exact area, centroid and second moments about `reference`.
    ///
    /// Vertices are shifted to the reference before applying the
    /// Green's-theorem formulas, which keeps the moments accurate for
    /// small cells far from the origin.
    pub fn properties(&self, reference: &Point) -> PolygonProps {
        let n = self.vertices.len();
        let mut a2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut ixx = 0.0;
        let mut iyy = 0.0;
        for i in 0..n {
            let p = self.vertices[i] - reference;
            let q = self.vertices[(i + 1) % n] - reference;
            let c = p.x * q.y - q.x * p.y;
            a2 += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
            ixx += (p.x * p.x + p.x * q.x + q.x * q.x) * c;
            iyy += (p.y * p.y + p.y * q.y + q.y * q.y) * c;
        }
        let area = 0.5 * a2;
        PolygonProps {
            area,
            centroid: Point::new(reference.x + cx / (3.0 * a2), reference.y + cy / (3.0 * a2)),
            mxx: ixx / 12.0,
            myy: iyy / 12.0,
        }
    }

    /// Signed distance-like test: positive when `p` is strictly left of every edge.
    pub fn contains_convex(&self, p: &Point, tol: f64) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            cross(&e, &(p - a)) / e.norm() > tol
        })
    }

    /// Clips this (convex) polygon by the half-plane `{x : n·(x - o) <= 0}`.
    /// Returns `None` when nothing of positive area remains.
    pub fn clip_half_plane(&self, origin: &Point, normal: &Vector) -> Option<Polygon> {
        let pts = clip_vertices(&self.vertices, origin, normal);
        if pts.len() < 3 {
            return None;
        }
        let scale = bbox_diag(&pts);
        let a = signed_area(&pts);
        if a <= 1e-14 * scale * scale {
            return None;
        }
        Polygon::new(pts).ok()
    }

    /// Fan triangulation; valid for convex polygons.
    pub fn fan(&self) -> Vec<[Point; 3]> {
        (1..self.vertices.len() - 1)
            .map(|i| [self.vertices[0], self.vertices[i], self.vertices[i + 1]])
            .collect()
    }
}

/// Sutherland-Hodgman step against one half-plane `n·(x - o) <= 0`.
pub(crate) fn clip_vertices(vertices: &[Point], origin: &Point, normal: &Vector) -> Vec<Point> {
    let n = vertices.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let da = normal.dot(&(a - origin));
        let db = normal.dot(&(b - origin));
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
    out
}

pub(crate) fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    let o = v[0];
    let mut s = 0.0;
    for i in 1..n.saturating_sub(1) {
        let p = v[i] - o;
        let q = v[i + 1] - o;
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

fn bbox_diag(v: &[Point]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in v {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

/// Length and second moment of an interval about `reference`.
pub fn interval_properties(lo: f64, hi: f64, reference: f64) -> (f64, f64) {
    let a = lo - reference;
    let b = hi - reference;
    (hi - lo, (b * b * b - a * a * a) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn repeated_vertices_are_dropped() {
        let v = |x: f64, y: f64| Point::new(x, y);
        let p = Polygon::new(vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0), v(0.0, 0.0)]).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.edges().all(|(a, b)| (b - a).norm() > 0.5));
    }

    #[test]
    fn square_moments_about_center() {
        let h = 0.3;
        let sq = Polygon::square(Point::new(1.0, -2.0), h).unwrap();
        let p = sq.properties(&Point::new(1.0, -2.0));
        assert_relative_eq!(p.area, h * h, max_relative = 1e-14);
        assert_relative_eq!(p.mxx, h.powi(4) / 12.0, max_relative = 1e-13);
        assert_relative_eq!(p.myy, h.powi(4) / 12.0, max_relative = 1e-13);
        assert_relative_eq!(p.centroid.x, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn parallel_axis_shift() {
        let h = 0.5;
        let sq = Polygon::square(Point::new(0.0, 0.0), h).unwrap();
        let p = sq.properties(&Point::new(h, 0.0));
        assert_relative_eq!(p.mxx, 13.0 * h.powi(4) / 12.0, max_relative = 1e-13);
        assert_relative_eq!(p.myy, h.powi(4) / 12.0, max_relative = 1e-13);
    }

    #[test]
    fn right_triangle_against_sampling() {
        let t = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let p = t.properties(&Point::origin());
        // midpoint-rule oracle on a 1000x1000 grid clipped to the triangle
        let n = 1000;
        let h = 1.0 / n as f64;
        let mut area = 0.0;
        let mut mxx = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) * h;
                let y = (j as f64 + 0.5) * h;
                if x + y < 1.0 {
                    area += h * h;
                    mxx += x * x * h * h;
                }
            }
        }
        assert_relative_eq!(p.area, 0.5, max_relative = 1e-14);
        assert_relative_eq!(p.mxx, 1.0 / 12.0, max_relative = 1e-13);
        assert_relative_eq!(p.area, area, max_relative = 2e-3);
        assert_relative_eq!(p.mxx, mxx, max_relative = 5e-3);
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let r = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
        ]);
        assert!(matches!(r, Err(QceError::DegenerateCell(_))));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let p = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(p.area() > 0.0);
    }

    #[test]
    fn half_plane_clip_keeps_left_half() {
        let sq = Polygon::square(Point::origin(), 2.0).unwrap();
        let half = sq
            .clip_half_plane(&Point::origin(), &Vector::new(1.0, 0.0))
            .unwrap();
        assert_relative_eq!(half.area(), 2.0, max_relative = 1e-14);
        assert!(sq
            .clip_half_plane(&Point::new(-5.0, 0.0), &Vector::new(1.0, 0.0))
            .is_none());
    }

    #[test]
    fn interval_second_moment() {
        let (len, m) = interval_properties(-0.5, 0.5, 0.0);
        assert_relative_eq!(len, 1.0);
        assert_relative_eq!(m, 1.0 / 12.0, max_relative = 1e-14);
    }
}
