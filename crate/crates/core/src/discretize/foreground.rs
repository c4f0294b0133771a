use std::f64::consts::TAU;

use crate::error::{QceError, Result};
use crate::geometry::{edge_normal, CellShape, CircleInclusion, Inclusion, Point, Polygon, Vector};
use crate::rk::{KernelSpec, Node, NodeOrigin};

/// Conforming discretization of one inclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Foreground {
    pub inclusion: Inclusion,
    pub nodes: Vec<Node>,
    /// `cells[i]` is owned by `nodes[i]`.
    pub cells: Vec<CellShape>,
    /// Local indices of the interface nodes, in polyline order.
    pub interface_nodes: Vec<usize>,
    /// Cell edges lying on the interface, oriented counter-clockwise.
    pub interface_pieces: Vec<(Point, Point)>,
    pub spacing: f64,
    /// Mean distance between consecutive interface nodes.
    pub interface_spacing: f64,
}

fn node(pos: Point, h: f64, kernel: &KernelSpec, interface: bool) -> Node {
    Node {
        pos,
        spacing: h,
        support: kernel.c * h,
        matrix: false,
        inclusion: None,
        interface,
        origin: NodeOrigin::Foreground,
        has_cell: true,
    }
}

/// Uniform nodes on `[lo, hi]` (both ends are interface nodes) with
/// Voronoi intervals as cells.
pub fn generate_foreground_1d(lo: f64, hi: f64, n_nodes: usize, kernel: &KernelSpec) -> Result<Foreground> {
    if n_nodes < 3 || !(hi > lo) {
        return Err(QceError::UnderResolvedInclusion(format!(
            "interval [{lo}, {hi}] needs at least 3 nodes, got {n_nodes}"
        )));
    }
    let h = (hi - lo) / (n_nodes - 1) as f64;
    let xs: Vec<f64> = (0..n_nodes)
        .map(|i| if i + 1 == n_nodes { hi } else { lo + i as f64 * h })
        .collect();
    let nodes = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| node(Point::new(x, 0.0), h, kernel, i == 0 || i + 1 == n_nodes))
        .collect();
    let cells = (0..n_nodes)
        .map(|i| CellShape::Interval {
            lo: if i == 0 { lo } else { 0.5 * (xs[i - 1] + xs[i]) },
            hi: if i + 1 == n_nodes { hi } else { 0.5 * (xs[i] + xs[i + 1]) },
        })
        .collect();
    Ok(Foreground {
        inclusion: Inclusion::Interval { lo, hi },
        nodes,
        cells,
        interface_nodes: vec![0, n_nodes - 1],
        interface_pieces: Vec::new(),
        spacing: h,
        interface_spacing: h,
    })
}

/// Concentric rings plus a center node; the outer ring lies on the circle and
/// defines the interface polyline. Cells are Voronoi cells clipped to it.
pub fn generate_foreground(center: Point, radius: f64, h: f64, kernel: &KernelSpec) -> Result<Foreground> {
    if !(h > 0.0) || !(h < radius) {
        return Err(QceError::UnderResolvedInclusion(format!(
            "spacing {h} must be positive and below the radius {radius}"
        )));
    }
    let m = ((radius / h).round() as usize).max(1);
    let mut pos = vec![center];
    let mut interface_nodes = Vec::new();
    for i in 1..=m {
        let r = radius * i as f64 / m as f64;
        let n = ((TAU * r / h).round() as usize).max(3);
        let phase = if (m - i) % 2 == 1 { 0.5 * TAU / n as f64 } else { 0.0 };
        for j in 0..n {
            let t = phase + TAU * j as f64 / n as f64;
            if i == m {
                interface_nodes.push(pos.len());
            }
            pos.push(Point::new(center.x + r * t.cos(), center.y + r * t.sin()));
        }
    }
    if pos.len() < 4 {
        return Err(QceError::UnderResolvedInclusion(format!(
            "only {} foreground nodes for radius {radius} and spacing {h}",
            pos.len()
        )));
    }
    let polyline: Vec<Point> = interface_nodes.iter().map(|&i| pos[i]).collect();
    let circle = CircleInclusion::new(center, radius, polyline.clone())?;
    let n_int = polyline.len();
    let interface_spacing = (0..n_int)
        .map(|j| (polyline[(j + 1) % n_int] - polyline[j]).norm())
        .sum::<f64>()
        / n_int as f64;

    let bins = PointBins::new(&pos, h);
    let edge_normals: Vec<(Point, Vector)> = (0..n_int)
        .map(|j| {
            let a = polyline[j];
            let b = polyline[(j + 1) % n_int];
            (a, edge_normal(&a, &b))
        })
        .collect();
    let mut cells = Vec::with_capacity(pos.len());
    let mut pieces = Vec::new();
    let half = 3.0 * h;
    for (i, p) in pos.iter().enumerate() {
        let mut poly = Polygon::square(*p, 2.0 * half)?;
        for q in bins.within(p, 2.0 * half) {
            if q == i {
                continue;
            }
            let o = Point::from((p.coords + pos[q].coords) * 0.5);
            let n = pos[q] - p;
            poly = poly.clip_half_plane(&o, &n).ok_or_else(|| {
                QceError::DegenerateCell(format!("empty Voronoi cell for foreground node {i}"))
            })?;
        }
        if (p - center).norm() + 2.0 * half * std::f64::consts::SQRT_2 >= circle_inner(&circle) {
            for (a, n) in &edge_normals {
                poly = poly.clip_half_plane(a, n).ok_or_else(|| {
                    QceError::DegenerateCell(format!("foreground cell {i} clipped away"))
                })?;
            }
        }
        let r_cell = poly.vertices().iter().map(|v| (v - p).norm()).fold(0.0, f64::max);
        if r_cell >= half {
            return Err(QceError::DegenerateCell(format!(
                "Voronoi cell of foreground node {i} reaches its search window"
            )));
        }
        if interface_nodes.binary_search(&i).is_ok() {
            for (a, b) in poly.edges() {
                if on_polyline(&circle, &a, &b, 1e-9 * radius) {
                    pieces.push((a, b));
                }
            }
        }
        cells.push(CellShape::Polygon(poly));
    }
    let nodes = pos
        .iter()
        .enumerate()
        .map(|(i, p)| node(*p, h, kernel, interface_nodes.binary_search(&i).is_ok()))
        .collect();
    Ok(Foreground {
        inclusion: Inclusion::Circle(circle),
        nodes,
        cells,
        interface_nodes,
        interface_pieces: pieces,
        spacing: h,
        interface_spacing,
    })
}

fn circle_inner(c: &CircleInclusion) -> f64 {
    let n = c.polyline().len() as f64;
    c.radius() * (std::f64::consts::PI / n).cos()
}

/// True when both endpoints lie on the same polyline edge.
fn on_polyline(c: &CircleInclusion, a: &Point, b: &Point, tol: f64) -> bool {
    let n = c.polyline().len();
    (0..n).any(|i| {
        let (p, q) = c.edge(i);
        crate::geometry::point_segment_distance(a, &p, &q) <= tol
            && crate::geometry::point_segment_distance(b, &p, &q) <= tol
    })
}

/// Fixed-size bins for neighbor queries among a point set.
pub(crate) struct PointBins {
    origin: Point,
    size: f64,
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    items: Vec<usize>,
    pts: Vec<Point>,
}

impl PointBins {
    pub(crate) fn new(pts: &[Point], size: f64) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        if pts.is_empty() {
            x0 = 0.0;
            y0 = 0.0;
            x1 = 0.0;
            y1 = 0.0;
        }
        let nx = ((x1 - x0) / size).floor() as usize + 1;
        let ny = ((y1 - y0) / size).floor() as usize + 1;
        let key = |p: &Point| {
            let i = (((p.x - x0) / size).floor() as usize).min(nx - 1);
            let j = (((p.y - y0) / size).floor() as usize).min(ny - 1);
            j * nx + i
        };
        let mut starts = vec![0usize; nx * ny + 1];
        for p in pts {
            starts[key(p) + 1] += 1;
        }
        for k in 1..starts.len() {
            starts[k] += starts[k - 1];
        }
        let mut fill = starts.clone();
        let mut items = vec![0; pts.len()];
        for (i, p) in pts.iter().enumerate() {
            let k = key(p);
            items[fill[k]] = i;
            fill[k] += 1;
        }
        PointBins {
            origin: Point::new(x0, y0),
            size,
            nx,
            ny,
            starts,
            items,
            pts: pts.to_vec(),
        }
    }

    /// Indices of points within distance `r` of `p`, ascending.
    pub(crate) fn within(&self, p: &Point, r: f64) -> Vec<usize> {
        let rng = |v: f64, o: f64, n: usize| {
            let a = ((v - r - o) / self.size).floor().max(0.0) as usize;
            let b = ((v + r - o) / self.size).floor();
            if b < 0.0 {
                return None;
            }
            let b = (b as usize).min(n - 1);
            (a <= b).then_some((a, b))
        };
        let mut out = Vec::new();
        let (Some((i0, i1)), Some((j0, j1))) = (
            rng(p.x, self.origin.x, self.nx),
            rng(p.y, self.origin.y, self.ny),
        ) else {
            return out;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let k = j * self.nx + i;
                for &m in &self.items[self.starts[k]..self.starts[k + 1]] {
                    if (self.pts[m] - p).norm() <= r {
                        out.push(m);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}
