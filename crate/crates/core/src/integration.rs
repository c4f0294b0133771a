//! Smoothed gradients over cells, linear VC correction of the test-function
//! gradients, and NSNI implicit-gradient tables.

use crate::discretize::{EmbeddedDiscretization, SmoothingCell};
use crate::error::{QceError, Result};
use crate::geometry::{Dim, Subdomain};
use crate::rk::{RkEvaluator, ShapeEval};

/// Per-cell integration data. All per-node arrays are indexed alike with `ids`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellTable {
    pub cell: usize,
    pub ids: Vec<usize>,
    /// Smoothed gradients Ψ̃_{I,i}.
    pub grad: Vec<[f64; 2]>,
    /// `nsni[k][i][j]`: smoothed i-derivative of the j-direction implicit gradient.
    pub nsni: Vec<[[f64; 2]; 2]>,
    /// Nodes visible at the owner position with their shape values there
    /// (direct nodal integration and the VC activation indicator).
    pub owner_ids: Vec<usize>,
    pub owner_values: Vec<f64>,
    /// VC-corrected test gradients; `corrected_ids` extends `ids` with
    /// nodes that are active at the owner but vanish on the cell boundary.
    pub corrected_ids: Vec<usize>,
    pub corrected: Vec<[f64; 2]>,
}

impl CellTable {
    pub fn grad_of(&self, node: usize) -> Option<[f64; 2]> {
        self.ids.binary_search(&node).ok().map(|k| self.grad[k])
    }
}

/// Smoothed gradients and NSNI tables of one cell.
pub fn smooth_cell(cell_id: usize, cell: &SmoothingCell, ev: &RkEvaluator) -> Result<CellTable> {
    let s = cell.subdomain;
    let inv_v = 1.0 / cell.volume;
    let mut acc: Vec<(usize, [f64; 2], [[f64; 2]; 2])> = Vec::new();
    let mut e = ShapeEval::default();
    for (p, n, w) in &cell.boundary {
        ev.shape_into(p, s, &mut e).map_err(|err| err.in_cell(cell_id))?;
        let nw = [n.x * w * inv_v, n.y * w * inv_v];
        for k in 0..e.ids.len() {
            let id = e.ids[k];
            let slot = match acc.iter().position(|a| a.0 == id) {
                Some(q) => q,
                None => {
                    acc.push((id, [0.0; 2], [[0.0; 2]; 2]));
                    acc.len() - 1
                }
            };
            let v = e.values[k];
            let g = e.implicit[k];
            let a = &mut acc[slot];
            for i in 0..2 {
                a.1[i] += v * nw[i];
                for j in 0..2 {
                    a.2[i][j] += g[j] * nw[i];
                }
            }
        }
    }
    acc.sort_by_key(|a| a.0);
    let owner_pos = ev.cloud().nodes[cell.owner].pos;
    ev.shape_into(&owner_pos, s, &mut e).map_err(|err| err.in_cell(cell_id))?;
    let mut t = CellTable {
        cell: cell_id,
        ids: acc.iter().map(|a| a.0).collect(),
        grad: acc.iter().map(|a| a.1).collect(),
        nsni: acc.iter().map(|a| a.2).collect(),
        owner_ids: e.ids.clone(),
        owner_values: e.values.clone(),
        corrected_ids: Vec::new(),
        corrected: Vec::new(),
    };
    t.corrected_ids = t.ids.clone();
    t.corrected = t.grad.clone();
    Ok(t)
}

/// Smoothed gradients Ψ̃_{I,i} of one cell as `(node, [x, y])` pairs.
pub fn smooth_gradients(cell_id: usize, cell: &SmoothingCell, ev: &RkEvaluator) -> Result<Vec<(usize, [f64; 2])>> {
    let t = smooth_cell(cell_id, cell, ev)?;
    Ok(t.ids.into_iter().zip(t.grad).collect())
}

/// NSNI data of one cell: per-node Ψ̃^∇_{I,ij} and the cell second moments.
pub fn nsni_tables(
    cell_id: usize,
    cell: &SmoothingCell,
    ev: &RkEvaluator,
) -> Result<(Vec<(usize, [[f64; 2]; 2])>, f64, f64)> {
    let t = smooth_cell(cell_id, cell, ev)?;
    Ok((t.ids.into_iter().zip(t.nsni).collect(), cell.mx, cell.my))
}

/// Per-node VC data of one subdomain, indexed by global node id.
#[derive(Debug, Clone, PartialEq)]
pub struct VcCorrection {
    pub subdomain: Subdomain,
    /// M_I = Σ_L Θ_I(x_L) V_L
    pub m: Vec<f64>,
    /// r_I^j
    pub r: Vec<[f64; 2]>,
    /// ζ_{Ij}
    pub zeta: Vec<[f64; 2]>,
    /// Contour part ∮ Ψ_I n_j of the residual.
    pub contour: Vec<[f64; 2]>,
    pub perimeter: f64,
}

impl VcCorrection {
    /// max |ζ| h over the subdomain nodes.
    pub fn max_zeta_h(&self, ev: &RkEvaluator) -> f64 {
        self.zeta
            .iter()
            .enumerate()
            .map(|(i, z)| z[0].abs().max(z[1].abs()) * ev.cloud().nodes[i].spacing)
            .fold(0.0, f64::max)
    }
}

/// ∮ Ψ_I n_j over the boundary of subdomain `s` (outer boundary and
/// interface for the matrix, interface for an inclusion).
pub fn boundary_contour(d: &EmbeddedDiscretization, ev: &RkEvaluator, s: Subdomain) -> Result<Vec<[f64; 2]>> {
    let mut out = vec![[0.0; 2]; d.cloud.len()];
    let mut e = ShapeEval::default();
    for seg in d.subdomain_boundary(s) {
        for (p, w) in seg.quadrature() {
            ev.shape_into(&p, s, &mut e)?;
            for (k, &id) in e.ids.iter().enumerate() {
                out[id][0] += e.values[k] * seg.normal.x * w;
                out[id][1] += e.values[k] * seg.normal.y * w;
            }
        }
    }
    Ok(out)
}

/// Residual r_I^j and M_I of the linear integration constraint.
pub fn vc_assemble_residual(
    d: &EmbeddedDiscretization,
    tables: &[CellTable],
    ev: &RkEvaluator,
    s: Subdomain,
) -> Result<VcCorrection> {
    let n = d.cloud.len();
    let contour = boundary_contour(d, ev, s)?;
    let mut r = contour.clone();
    let mut m = vec![0.0; n];
    for (ci, cell) in d.cells_of(s) {
        let t = &tables[ci];
        for (k, &id) in t.ids.iter().enumerate() {
            r[id][0] -= t.grad[k][0] * cell.volume;
            r[id][1] -= t.grad[k][1] * cell.volume;
        }
        for &id in &t.owner_ids {
            m[id] += cell.volume;
        }
    }
    let perimeter = d.subdomain_perimeter(s);
    let tol = 1e-12 * perimeter.max(1.0);
    for i in 0..n {
        if m[i] == 0.0 && (r[i][0].abs() > tol || r[i][1].abs() > tol) {
            return Err(QceError::IsolatedNode {
                node: i,
                residual: r[i][0].abs().max(r[i][1].abs()),
            });
        }
    }
    Ok(VcCorrection {
        subdomain: s,
        m,
        r,
        zeta: vec![[0.0; 2]; n],
        contour,
        perimeter,
    })
}

/// ζ = r / M and the corrected gradients Ψ̄ = Ψ̃ + Θ ζ of every cell of the subdomain.
pub fn vc_correct(
    d: &EmbeddedDiscretization,
    tables: &mut [CellTable],
    vc: &mut VcCorrection,
) -> Result<()> {
    for i in 0..vc.m.len() {
        if vc.m[i] > 0.0 {
            vc.zeta[i] = [vc.r[i][0] / vc.m[i], vc.r[i][1] / vc.m[i]];
        } else if vc.r[i] != [0.0, 0.0] {
            return Err(QceError::IsolatedNode {
                node: i,
                residual: vc.r[i][0].abs().max(vc.r[i][1].abs()),
            });
        }
    }
    for (ci, _) in d.cells_of(vc.subdomain) {
        let t = &mut tables[ci];
        let mut ids = t.ids.clone();
        let mut vals = t.grad.clone();
        for &id in &t.owner_ids {
            let z = vc.zeta[id];
            match ids.binary_search(&id) {
                Ok(k) => {
                    vals[k][0] += z[0];
                    vals[k][1] += z[1];
                }
                Err(k) => {
                    ids.insert(k, id);
                    vals.insert(k, z);
                }
            }
        }
        t.corrected_ids = ids;
        t.corrected = vals;
    }
    Ok(())
}

/// Post-correction residual |∮ Ψ_I n_j − Σ_L Ψ̄_{I,j} V_L| per node.
pub fn constraint_residual(d: &EmbeddedDiscretization, tables: &[CellTable], vc: &VcCorrection) -> Vec<[f64; 2]> {
    let mut r = vc.contour.clone();
    for (ci, cell) in d.cells_of(vc.subdomain) {
        let t = &tables[ci];
        for (k, &id) in t.corrected_ids.iter().enumerate() {
            r[id][0] -= t.corrected[k][0] * cell.volume;
            r[id][1] -= t.corrected[k][1] * cell.volume;
        }
    }
    r
}

/// Integration data for every cell and VC data for every subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationTables {
    pub cells: Vec<CellTable>,
    pub vc: Vec<VcCorrection>,
}

impl IntegrationTables {
    pub fn vc_of(&self, s: Subdomain) -> Option<&VcCorrection> {
        self.vc.iter().find(|v| v.subdomain == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// Apply the VC correction to the conforming inclusion cells as well.
    pub correct_inclusions: bool,
    /// Apply the VC correction at all.
    pub vc: bool,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            correct_inclusions: true,
            vc: true,
        }
    }
}

pub fn build_tables(d: &EmbeddedDiscretization, ev: &RkEvaluator, opts: &IntegrationOptions) -> Result<IntegrationTables> {
    let mut cells = Vec::with_capacity(d.cells.len());
    for (i, c) in d.cells.iter().enumerate() {
        cells.push(smooth_cell(i, c, ev)?);
    }
    let mut vcs = Vec::new();
    for s in d.domain.subdomains() {
        let mut vc = vc_assemble_residual(d, &cells, ev, s)?;
        let apply = opts.vc && (s == Subdomain::Matrix || opts.correct_inclusions);
        if apply {
            vc_correct(d, &mut cells, &mut vc)?;
        }
        vcs.push(vc);
    }
    Ok(IntegrationTables { cells, vc: vcs })
}

/// Linear-probe version of the constraint: Ψ = x + y (x in 1D) over the
/// whole subdomain. Returns `(r^j, V̂, ζ_j, Ψ̄_{,j})` per direction.
pub fn linear_probe_residual(d: &EmbeddedDiscretization, s: Subdomain) -> ProbeResult {
    let probe = |p: &crate::geometry::Point| match d.dim() {
        Dim::One => p.x,
        Dim::Two => p.x + p.y,
    };
    let mut contour = [0.0; 2];
    for seg in d.subdomain_boundary(s) {
        for (p, w) in seg.quadrature() {
            contour[0] += probe(&p) * seg.normal.x * w;
            contour[1] += probe(&p) * seg.normal.y * w;
        }
    }
    let mut domain_term = [0.0; 2];
    let mut v_hat = 0.0;
    for (_, cell) in d.cells_of(s) {
        let mut g = [0.0; 2];
        for (p, n, w) in &cell.boundary {
            g[0] += probe(p) * n.x * w / cell.volume;
            g[1] += probe(p) * n.y * w / cell.volume;
        }
        domain_term[0] += g[0] * cell.volume;
        domain_term[1] += g[1] * cell.volume;
        v_hat += cell.volume;
    }
    let r = [contour[0] - domain_term[0], contour[1] - domain_term[1]];
    let zeta = [r[0] / v_hat, r[1] / v_hat];
    ProbeResult {
        r,
        v_hat,
        zeta,
        corrected: [1.0 + zeta[0], 1.0 + zeta[1]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub r: [f64; 2],
    pub v_hat: f64,
    pub zeta: [f64; 2],
    pub corrected: [f64; 2],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::*;
    use crate::geometry::{CellShape, Point, Polygon, Rect};
    use crate::rk::{KernelSpec, Node, NodeCloud, NodeOrigin};
    use approx::assert_relative_eq;

    fn plate(h: f64, recovery: bool) -> EmbeddedDiscretization {
        let kernel = KernelSpec::default();
        let r = Rect::new(Point::new(-2.0, -2.0), Point::new(2.0, 2.0));
        let bg = generate_background(Dim::Two, r, h).unwrap();
        let fg = generate_foreground(Point::origin(), 1.0, h / 2.0, &kernel).unwrap();
        let d = share_interface_nodes(embed(&bg, &[fg], &SubdivisionParams::default(), &kernel).unwrap());
        if recovery {
            add_volume_recovery_cells(d).unwrap()
        } else {
            d
        }
    }

    #[test]
    fn closed_contour_sums_vanish() {
        let d = plate(0.4, true);
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        for c in &t.cells {
            let sx: f64 = c.grad.iter().map(|g| g[0]).sum();
            let sy: f64 = c.grad.iter().map(|g| g[1]).sum();
            let scale = c.grad.iter().map(|g| g[0].abs() + g[1].abs()).fold(0.0, f64::max);
            assert!(sx.abs() <= 1e-10 * scale && sy.abs() <= 1e-10 * scale);
            for i in 0..2 {
                let s: f64 = c.nsni.iter().map(|g| g[i][0]).sum();
                let m = c.nsni.iter().map(|g| g[i][0].abs()).fold(0.0, f64::max);
                assert!(s.abs() <= 1e-9 * m.max(1.0));
            }
        }
    }

    #[test]
    fn interior_grid_cells_have_zero_first_moments() {
        let d = plate(0.4, true);
        let mut checked = 0;
        for c in d.cells.iter().filter(|c| c.origin == CellOrigin::Background) {
            let owner = d.cloud.nodes[c.owner].pos;
            let first = (c.shape.centroid() - owner) * c.volume;
            assert!(first.norm() <= 1e-14 * c.volume.sqrt() * c.volume, "{first:?}");
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn nsni_tables_annihilate_affine_fields_and_are_finite() {
        let d = plate(0.4, true);
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        let u = |p: &crate::geometry::Point| 0.3 - 1.7 * p.x + 2.2 * p.y;
        let mut recovery = 0;
        for (c, cell) in t.cells.iter().zip(&d.cells) {
            assert!(c.nsni.iter().flatten().flatten().all(|v| v.is_finite()));
            if cell.origin == CellOrigin::Recovery {
                recovery += 1;
                assert!(!c.nsni.is_empty());
            }
            let scale = c.nsni.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..2 {
                for j in 0..2 {
                    let s: f64 = c.ids.iter().zip(&c.nsni).map(|(&n, g)| g[i][j] * u(&d.cloud.nodes[n].pos)).sum();
                    assert!(s.abs() <= 1e-9 * scale.max(1.0), "cell {} ({i},{j}): {s}", c.cell);
                }
            }
        }
        assert!(recovery > 0);
    }

    #[test]
    fn conforming_foreground_needs_no_correction() {
        let d = plate(0.4, true);
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        let vc = t.vc_of(Subdomain::Inclusion(0)).unwrap();
        let rmax = vc.r.iter().map(|r| r[0].abs().max(r[1].abs())).fold(0.0, f64::max);
        assert!(rmax <= 1e-10 * vc.perimeter, "{rmax}");
        // and the linear field is reproduced per foreground cell
        for (ci, _) in d.cells_of(Subdomain::Inclusion(0)) {
            let c = &t.cells[ci];
            let gx: f64 = c.ids.iter().zip(&c.grad).map(|(&i, g)| g[0] * d.cloud.nodes[i].pos.x).sum();
            assert!((gx - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn corrected_constraint_holds() {
        for recovery in [false, true] {
            let d = plate(0.4, recovery);
            let ev = RkEvaluator::new(&d.cloud, &d.domain);
            let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
            for vc in &t.vc {
                let res = constraint_residual(&d, &t.cells, vc);
                let worst = res.iter().map(|r| r[0].abs().max(r[1].abs())).fold(0.0, f64::max);
                assert!(worst <= 1e-12 * vc.perimeter, "{worst} vs {}", vc.perimeter);
            }
        }
    }

    #[test]
    fn square_cell_matches_analytic_gradient_and_second_derivative() {
        // a single cell inside a regular grid; the smoothed gradient is the
        // cell average of the analytic gradient, computed here with a dense
        // 64-point-per-edge boundary rule
        let h = 0.1;
        let mut nodes = Vec::new();
        for j in 0..12 {
            for i in 0..12 {
                nodes.push(Node {
                    pos: Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h),
                    spacing: h,
                    support: 2.0 * h,
                    matrix: true,
                    inclusion: None,
                    interface: false,
                    origin: NodeOrigin::Background,
                    has_cell: true,
                });
            }
        }
        let cloud = NodeCloud { dim: Dim::Two, nodes };
        let domain = crate::geometry::DomainSpec::new_2d(
            Rect::new(Point::new(0.0, 0.0), Point::new(1.2, 1.2)),
            vec![],
        )
        .unwrap();
        let ev = RkEvaluator::new(&cloud, &domain);
        let owner = 5 * 12 + 6;
        let c0 = cloud.nodes[owner].pos;
        let shape = CellShape::Polygon(Polygon::square(c0, h).unwrap());
        let cell = SmoothingCell::new(owner, &c0, Subdomain::Matrix, shape.clone(), true, CellOrigin::Background, 0);
        let t = smooth_cell(0, &cell, &ev).unwrap();
        let gl = crate::quadrature::gauss_legendre(64);
        let CellShape::Polygon(poly) = &shape else { unreachable!() };
        let mut dense: std::collections::BTreeMap<usize, ([f64; 2], [[f64; 2]; 2])> = Default::default();
        for (a, b) in poly.edges() {
            let n = crate::geometry::edge_normal(&a, &b);
            let len = (b - a).norm();
            for &(x, w) in &gl {
                let p = a + (b - a) * (0.5 * (x + 1.0));
                let e = ev.shape(&p, Subdomain::Matrix).unwrap();
                for (k, &id) in e.ids.iter().enumerate() {
                    let ent = dense.entry(id).or_default();
                    let ww = 0.5 * w * len / cell.volume;
                    ent.0[0] += e.values[k] * n.x * ww;
                    ent.0[1] += e.values[k] * n.y * ww;
                    for i in 0..2 {
                        for j in 0..2 {
                            ent.1[i][j] += e.implicit[k][j] * [n.x, n.y][i] * ww;
                        }
                    }
                }
            }
        }
        // the two-point rule is exact only for low-order traces; RK shape
        // functions are piecewise rational, so agreement is to quadrature accuracy
        let gscale = t.grad.iter().map(|g| g[0].abs().max(g[1].abs())).fold(0.0, f64::max);
        for (k, &id) in t.ids.iter().enumerate() {
            let (g, _) = dense[&id];
            assert!((g[0] - t.grad[k][0]).abs() < 0.05 * gscale);
            assert!((g[1] - t.grad[k][1]).abs() < 0.05 * gscale);
        }
        // a locally linear field: smoothed gradient equals the analytic gradient
        let sx: f64 = t.ids.iter().zip(&t.grad).map(|(&i, g)| g[0] * (2.0 * cloud.nodes[i].pos.x - cloud.nodes[i].pos.y)).sum();
        let sy: f64 = t.ids.iter().zip(&t.grad).map(|(&i, g)| g[1] * (2.0 * cloud.nodes[i].pos.x - cloud.nodes[i].pos.y)).sum();
        assert_relative_eq!(sx, 2.0, epsilon = 1e-10);
        assert_relative_eq!(sy, -1.0, epsilon = 1e-10);
        // a quadratic field x²: smoothed implicit-gradient derivative equals 2
        let qxx: f64 = t.ids.iter().zip(&t.nsni).map(|(&i, g)| g[0][0] * cloud.nodes[i].pos.x.powi(2)).sum();
        let dense_qxx: f64 = dense.iter().map(|(&i, v)| v.1[0][0] * cloud.nodes[i].pos.x.powi(2)).sum();
        assert!((dense_qxx - 2.0).abs() < 1e-8, "{dense_qxx}");
        assert!((qxx - 2.0).abs() < 1e-8, "{qxx}");
    }

    #[test]
    fn probe_identity_with_missing_area() {
        let d = plate(0.2, false);
        assert!(d.missing_area > 0.0);
        let p = linear_probe_residual(&d, Subdomain::Matrix);
        let v = d.domain.matrix_measure();
        for j in 0..2 {
            assert_relative_eq!(p.r[j], v - p.v_hat, epsilon = 1e-10);
            assert_relative_eq!(p.corrected[j], v / p.v_hat, epsilon = 1e-10);
        }
        let d = add_volume_recovery_cells(d).unwrap();
        let p = linear_probe_residual(&d, Subdomain::Matrix);
        assert!(p.r[0].abs() < 1e-10 && p.r[1].abs() < 1e-10);
    }

    #[test]
    fn recovery_does_not_increase_zeta() {
        let d0 = plate(0.2, false);
        let d1 = plate(0.2, true);
        let z = |d: &EmbeddedDiscretization| {
            let ev = RkEvaluator::new(&d.cloud, &d.domain);
            let t = build_tables(d, &ev, &IntegrationOptions::default()).unwrap();
            t.vc_of(Subdomain::Matrix).unwrap().max_zeta_h(&ev)
        };
        let (a, b) = (z(&d0), z(&d1));
        assert!(b <= a * (1.0 + 1e-12), "{b} > {a}");
    }
}
