//! Reproducing kernel shape functions with a linear basis, direct gradients
//! and implicit gradients, filtered by line-of-sight visibility.

use nalgebra::{Matrix3, Vector3};

use crate::error::{QceError, Result};
use crate::geometry::{Dim, DomainSpec, Point, Subdomain};

/// Condition-number estimate above which a moment matrix is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Cubic B-spline value and derivative with respect to `z`.
pub fn kernel_eval(z: f64) -> Result<(f64, f64)> {
    if !(z >= 0.0) {
        return Err(QceError::InvalidArgument(format!(
            "kernel argument must be non-negative, got {z}"
        )));
    }
    Ok(kernel(z))
}

/// Points within this relative distance of a support edge count as outside.
/// The kernel is below 1e-27 there, and without the margin round-off decides
/// whether grid nodes exactly one support radius apart see each other, which
/// flips the VC activation indicator between mirror-image nodes.
pub const SUPPORT_MARGIN: f64 = 1e-9;

#[inline]
fn kernel(z: f64) -> (f64, f64) {
    if z <= 0.5 {
        (2.0 / 3.0 - 4.0 * z * z + 4.0 * z * z * z, -8.0 * z + 12.0 * z * z)
    } else if z <= 1.0 {
        let t = 1.0 - z;
        (4.0 / 3.0 * t * t * t, -4.0 * t * t)
    } else {
        (0.0, 0.0)
    }
}

/// Normalized support size and kernel family (cubic B-spline only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub c: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { c: 2.0 }
    }
}

impl KernelSpec {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 1.0) {
            return Err(QceError::InvalidArgument(format!(
                "normalized support must exceed 1, got {c}"
            )));
        }
        Ok(KernelSpec { c })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOrigin {
    Foreground,
    Background,
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub pos: Point,
    /// Local nodal spacing h_I.
    pub spacing: f64,
    /// Support radius a_I = c h_I.
    pub support: f64,
    pub matrix: bool,
    pub inclusion: Option<usize>,
    /// Lies on an interface polyline.
    pub interface: bool,
    pub origin: NodeOrigin,
    pub has_cell: bool,
}

impl Node {
    pub fn belongs(&self, s: Subdomain) -> bool {
        match s {
            Subdomain::Matrix => self.matrix,
            Subdomain::Inclusion(k) => self.inclusion == Some(k),
        }
    }

    pub fn is_shared(&self) -> bool {
        self.matrix && self.inclusion.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCloud {
    pub dim: Dim,
    pub nodes: Vec<Node>,
}

impl NodeCloud {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.nodes.iter().map(|n| n.pos)
    }
}

/// Shape functions at one point. Gradients are `[d/dx, d/dy]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapeEval {
    pub point: Point,
    pub ids: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub implicit: Vec<[f64; 2]>,
}

impl ShapeEval {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn clear(&mut self) {
        self.ids.clear();
        self.values.clear();
        self.grads.clear();
        self.implicit.clear();
    }

    /// Value of the local coefficient field `d` (indexed by node id).
    pub fn interpolate(&self, d: impl Fn(usize) -> f64) -> f64 {
        self.ids.iter().zip(&self.values).map(|(&i, v)| v * d(i)).sum()
    }
}

/// Uniform bin index over the nodes of one subdomain.
#[derive(Debug, Clone)]
struct GridIndex {
    origin: Point,
    bin: f64,
    nx: usize,
    ny: usize,
    max_support: f64,
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl GridIndex {
    fn new(cloud: &NodeCloud, members: &[usize]) -> Self {
        let max_support = members
            .iter()
            .map(|&i| cloud.nodes[i].support)
            .fold(0.0, f64::max);
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &i in members {
            let p = cloud.nodes[i].pos;
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        if members.is_empty() {
            return GridIndex {
                origin: Point::origin(),
                bin: 1.0,
                nx: 1,
                ny: 1,
                max_support: 0.0,
                starts: vec![0, 0],
                items: Vec::new(),
            };
        }
        let bin = max_support.max(1e-300);
        let nx = (((x1 - x0) / bin).floor() as usize) + 1;
        let ny = (((y1 - y0) / bin).floor() as usize) + 1;
        let origin = Point::new(x0, y0);
        let key = |p: &Point| {
            let i = (((p.x - x0) / bin).floor() as usize).min(nx - 1);
            let j = (((p.y - y0) / bin).floor() as usize).min(ny - 1);
            j * nx + i
        };
        let mut counts = vec![0usize; nx * ny + 1];
        for &m in members {
            counts[key(&cloud.nodes[m].pos) + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; members.len()];
        for &m in members {
            let k = key(&cloud.nodes[m].pos);
            items[fill[k]] = m;
            fill[k] += 1;
        }
        GridIndex {
            origin,
            bin,
            nx,
            ny,
            max_support,
            starts: counts,
            items,
        }
    }

    fn for_each_candidate(&self, x: &Point, mut f: impl FnMut(usize)) {
        if self.items.is_empty() {
            return;
        }
        let r = self.max_support;
        let lo = |v: f64, o: f64, n: usize| -> Option<usize> {
            let t = ((v - r - o) / self.bin).floor();
            if t >= n as f64 {
                None
            } else {
                Some(t.max(0.0) as usize)
            }
        };
        let hi = |v: f64, o: f64, n: usize| -> Option<usize> {
            let t = ((v + r - o) / self.bin).floor();
            if t < 0.0 {
                None
            } else {
                Some((t as usize).min(n - 1))
            }
        };
        let (Some(i0), Some(i1), Some(j0), Some(j1)) = (
            lo(x.x, self.origin.x, self.nx),
            hi(x.x, self.origin.x, self.nx),
            lo(x.y, self.origin.y, self.ny),
            hi(x.y, self.origin.y, self.ny),
        ) else {
            return;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let k = j * self.nx + i;
                for &m in &self.items[self.starts[k]..self.starts[k + 1]] {
                    f(m);
                }
            }
        }
    }
}

/// Evaluates shape functions of a fixed node cloud on a fixed domain.
#[derive(Debug, Clone)]
pub struct RkEvaluator<'a> {
    cloud: &'a NodeCloud,
    domain: &'a DomainSpec,
    indices: Vec<(Subdomain, GridIndex)>,
    visibility: bool,
}

impl<'a> RkEvaluator<'a> {
    pub fn new(cloud: &'a NodeCloud, domain: &'a DomainSpec) -> Self {
        let indices = domain
            .subdomains()
            .into_iter()
            .map(|s| {
                let members: Vec<usize> = (0..cloud.nodes.len())
                    .filter(|&i| cloud.nodes[i].belongs(s))
                    .collect();
                (s, GridIndex::new(cloud, &members))
            })
            .collect();
        RkEvaluator {
            cloud,
            domain,
            indices,
            visibility: true,
        }
    }

    /// Disables line-of-sight filtering (support overlap only).
    pub fn without_visibility(mut self) -> Self {
        self.visibility = false;
        self
    }

    pub fn cloud(&self) -> &NodeCloud {
        self.cloud
    }

    pub fn domain(&self) -> &DomainSpec {
        self.domain
    }

    fn index(&self, s: Subdomain) -> Option<&GridIndex> {
        self.indices.iter().find(|(t, _)| *t == s).map(|(_, g)| g)
    }

    /// Visible covering nodes of subdomain `s` at `x`, in ascending id order.
    pub fn neighbors(&self, x: &Point, s: Subdomain, out: &mut Vec<usize>) {
        out.clear();
        let Some(g) = self.index(s) else { return };
        g.for_each_candidate(x, |m| {
            let n = &self.cloud.nodes[m];
            if (x - n.pos).norm() < n.support * (1.0 - SUPPORT_MARGIN)
                && (!self.visibility || self.domain.line_of_sight(&n.pos, x, s))
            {
                out.push(m);
            }
        });
        out.sort_unstable();
    }

    pub fn shape(&self, x: &Point, s: Subdomain) -> Result<ShapeEval> {
        let mut e = ShapeEval::default();
        self.shape_into(x, s, &mut e)?;
        Ok(e)
    }

    /// Values, direct gradients and implicit gradients at `x`.
    pub fn shape_into(&self, x: &Point, s: Subdomain, e: &mut ShapeEval) -> Result<()> {
        e.clear();
        e.point = *x;
        let mut ids = std::mem::take(&mut e.ids);
        self.neighbors(x, s, &mut ids);
        e.ids = ids;
        let two_d = self.cloud.dim == Dim::Two;
        let scale = e
            .ids
            .iter()
            .map(|&i| self.cloud.nodes[i].support)
            .fold(0.0, f64::max);
        let coverage = |condition: f64, n: usize| QceError::Coverage {
            point: *x,
            subdomain: s.to_string(),
            condition,
            neighbors: n,
            context: String::new(),
        };
        if e.ids.is_empty() {
            return Err(coverage(f64::INFINITY, 0));
        }
        let inv_s = 1.0 / scale;
        // per-node basis, kernel value and kernel gradient
        let mut m = Matrix3::zeros();
        let mut mx = Matrix3::zeros();
        let mut my = Matrix3::zeros();
        let hx = Vector3::new(0.0, inv_s, 0.0);
        let hy = Vector3::new(0.0, 0.0, if two_d { inv_s } else { 0.0 });
        let mut cache: Vec<(Vector3<f64>, f64, f64, f64)> = Vec::with_capacity(e.ids.len());
        for &i in &e.ids {
            let n = &self.cloud.nodes[i];
            let d = x - n.pos;
            let r = d.norm();
            let (phi, dphi) = kernel(r / n.support);
            let (px, py) = if r > 0.0 {
                (dphi * d.x / (r * n.support), dphi * d.y / (r * n.support))
            } else {
                (0.0, 0.0)
            };
            let h = Vector3::new(1.0, d.x * inv_s, if two_d { d.y * inv_s } else { 0.0 });
            let hh = h * h.transpose();
            m += hh * phi;
            mx += (hx * h.transpose() + h * hx.transpose()) * phi + hh * px;
            if two_d {
                my += (hy * h.transpose() + h * hy.transpose()) * phi + hh * py;
            }
            cache.push((h, phi, px, py));
        }
        if !two_d {
            m[(2, 2)] = 1.0;
        }
        let minv = match m.try_inverse() {
            Some(v) => v,
            None => return Err(coverage(f64::INFINITY, e.ids.len())),
        };
        let cond = norm1(&m) * norm1(&minv);
        if !cond.is_finite() || cond > MAX_CONDITION {
            return Err(coverage(cond, e.ids.len()));
        }
        let b = minv.column(0).into_owned();
        let bx = -(minv * (mx * b));
        let by = -(minv * (my * b));
        let gx = minv * Vector3::new(0.0, -inv_s, 0.0);
        let gy = minv * Vector3::new(0.0, 0.0, if two_d { -inv_s } else { 0.0 });
        for (h, phi, px, py) in cache {
            let bh = b.dot(&h);
            e.values.push(bh * phi);
            let dx = bx.dot(&h) * phi + b.dot(&hx) * phi + bh * px;
            let dy = if two_d {
                by.dot(&h) * phi + b.dot(&hy) * phi + bh * py
            } else {
                0.0
            };
            e.grads.push([dx, dy]);
            e.implicit.push([gx.dot(&h) * phi, gy.dot(&h) * phi]);
        }
        Ok(())
    }

    /// Implicit gradients only, in direction `j` (0 = x, 1 = y).
    pub fn implicit_gradient(&self, x: &Point, s: Subdomain, j: usize) -> Result<Vec<(usize, f64)>> {
        let e = self.shape(x, s)?;
        Ok(e.ids.iter().zip(&e.implicit).map(|(&i, g)| (i, g[j])).collect())
    }
}

fn norm1(m: &Matrix3<f64>) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
