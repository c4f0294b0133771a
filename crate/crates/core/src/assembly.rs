//! Non-symmetric Petrov–Galerkin system assembly, sparse LU solve and
//! post-processing of nodal strains and stresses.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::discretize::EmbeddedDiscretization;
use crate::error::{QceError, Result};
use crate::geometry::{BoundarySegment, Dim, OuterSide, Point, SegmentTag, Subdomain, Vector};
use crate::integration::IntegrationTables;
use crate::krylov::{gmres, Ilu0};
use crate::rk::{RkEvaluator, ShapeEval};

pub type Block = [[f64; 2]; 2];
/// Strain-displacement matrix of one node: rows xx, yy, xy (engineering shear).
type BMat = [[f64; 2]; 3];
type CMat = [[f64; 3]; 3];

/// Isotropic linear elastic material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
}

impl Material {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0) || !(nu > -1.0 && nu < 0.5) {
            return Err(QceError::InvalidArgument(format!(
                "material needs E > 0 and -1 < nu < 0.5, got E={e}, nu={nu}"
            )));
        }
        Ok(Material { e, nu })
    }

    /// Plane-stress constitutive matrix in 2D; `diag(E, 0, 0)` in 1D.
    pub fn c(&self, dim: Dim) -> CMat {
        match dim {
            Dim::One => [[self.e, 0.0, 0.0], [0.0; 3], [0.0; 3]],
            Dim::Two => {
                let f = self.e / (1.0 - self.nu * self.nu);
                [
                    [f, f * self.nu, 0.0],
                    [f * self.nu, f, 0.0],
                    [0.0, 0.0, f * 0.5 * (1.0 - self.nu)],
                ]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialPair {
    pub matrix: Material,
    pub inclusion: Material,
}

impl MaterialPair {
    pub fn of(&self, s: Subdomain) -> Material {
        match s {
            Subdomain::Matrix => self.matrix,
            Subdomain::Inclusion(_) => self.inclusion,
        }
    }
}

pub type VectorField = Arc<dyn Fn(&Point) -> [f64; 2] + Send + Sync>;

pub fn zero_field() -> VectorField {
    Arc::new(|_| [0.0, 0.0])
}

/// Boundary-value problem data on an embedded discretization.
#[derive(Clone)]
pub struct HeterogeneousProblem {
    pub materials: MaterialPair,
    /// Outer sides carrying Dirichlet data; all others are Neumann.
    pub dirichlet: Vec<OuterSide>,
    pub g: VectorField,
    pub t: VectorField,
    pub body_matrix: VectorField,
    pub body_inclusion: VectorField,
    /// Interface stress blend: 1 uses the inclusion stress only.
    pub alpha: f64,
    /// Nitsche penalty; `None` means 100 E⁻ / h⁻.
    pub beta: Option<f64>,
}

impl std::fmt::Debug for HeterogeneousProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeterogeneousProblem")
            .field("materials", &self.materials)
            .field("dirichlet", &self.dirichlet)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl HeterogeneousProblem {
    pub fn new(materials: MaterialPair) -> Self {
        HeterogeneousProblem {
            materials,
            dirichlet: OuterSide::ALL.to_vec(),
            g: zero_field(),
            t: zero_field(),
            body_matrix: zero_field(),
            body_inclusion: zero_field(),
            alpha: 1.0,
            beta: None,
        }
    }

    pub fn body(&self, s: Subdomain) -> &VectorField {
        match s {
            Subdomain::Matrix => &self.body_matrix,
            Subdomain::Inclusion(_) => &self.body_inclusion,
        }
    }

    pub fn beta_for(&self, h_background: f64) -> f64 {
        self.beta.unwrap_or(100.0 * self.materials.matrix.e / h_background)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(QceError::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return Err(QceError::InvalidArgument(format!("beta must be positive, got {b}")));
            }
        }
        Ok(())
    }

    fn is_dirichlet(&self, seg: &BoundarySegment) -> bool {
        matches!(seg.tag, SegmentTag::Outer(side) if self.dirichlet.contains(&side))
    }
}

fn b_of(g: [f64; 2]) -> BMat {
    [[g[0], 0.0], [0.0, g[1]], [g[1], g[0]]]
}

/// η: maps a stress vector (xx, yy, xy) to the traction σ·n.
fn eta_of(n: &Vector) -> BMat {
    b_of([n.x, n.y])
}

fn cb(c: &CMat, b: &BMat) -> BMat {
    let mut out = [[0.0; 2]; 3];
    for r in 0..3 {
        for k in 0..2 {
            out[r][k] = (0..3).map(|m| c[r][m] * b[m][k]).sum();
        }
    }
    out
}

/// aᵀ b for two 3×2 matrices.
fn atb(a: &BMat, b: &BMat) -> Block {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (0..3).map(|r| a[r][i] * b[r][j]).sum();
        }
    }
    out
}

fn scale(b: Block, s: f64) -> Block {
    [[b[0][0] * s, b[0][1] * s], [b[1][0] * s, b[1][1] * s]]
}

fn transpose(b: Block) -> Block {
    [[b[0][0], b[1][0]], [b[0][1], b[1][1]]]
}

/// Row-wise accumulator of node-pair blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockRows {
    pub rows: Vec<Vec<(usize, Block)>>,
}

impl BlockRows {
    pub fn new(n: usize) -> Self {
        BlockRows { rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, i: usize, j: usize, b: Block) {
        let row = &mut self.rows[i];
        match row.iter_mut().find(|e| e.0 == j) {
            Some(e) => {
                for a in 0..2 {
                    for c in 0..2 {
                        e.1[a][c] += b[a][c];
                    }
                }
            }
            None => row.push((j, b)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Block {
        self.rows[i].iter().find(|e| e.0 == j).map(|e| e.1).unwrap_or([[0.0; 2]; 2])
    }

    pub fn merge(&mut self, other: &BlockRows, s: f64) {
        for (i, row) in other.rows.iter().enumerate() {
            for (j, b) in row {
                self.add(i, *j, scale(*b, s));
            }
        }
    }

    /// Sum over rows of each column block.
    pub fn column_sums(&self) -> Vec<Block> {
        let mut out = vec![[[0.0; 2]; 2]; self.rows.len()];
        for row in &self.rows {
            for (j, b) in row {
                for a in 0..2 {
                    for c in 0..2 {
                        out[*j][a][c] += b[a][c];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .flat_map(|(_, b)| b.iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Each matrix and load contribution kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyTerms {
    pub dim: Dim,
    /// Domain stiffness of the matrix cells (VC test gradients, NSNI).
    pub k_matrix: BlockRows,
    /// Domain stiffness of the inclusion cells.
    pub k_inclusion: BlockRows,
    /// Nitsche consistency and adjoint terms, already with their minus signs.
    pub k_nitsche: BlockRows,
    pub k_penalty: BlockRows,
    /// Matrix test functions against inclusion-side interface traction (weighted by α).
    pub k_gamma_mp: BlockRows,
    /// Matrix test functions against matrix-side interface traction (weighted by 1 − α).
    pub k_gamma_mm: BlockRows,
    /// Inclusion test functions against inclusion-side traction, with minus sign (α).
    pub k_gamma_pp: BlockRows,
    /// Inclusion test functions against matrix-side traction, with minus sign (1 − α).
    pub k_gamma_pm: BlockRows,
    pub f_body: Vec<[f64; 2]>,
    pub f_traction: Vec<[f64; 2]>,
    /// −∫ B̃ᵀ C η g
    pub f_nitsche: Vec<[f64; 2]>,
    pub f_penalty: Vec<[f64; 2]>,
    pub beta: f64,
}

impl AssemblyTerms {
    fn new(dim: Dim, n: usize, beta: f64) -> Self {
        AssemblyTerms {
            dim,
            k_matrix: BlockRows::new(n),
            k_inclusion: BlockRows::new(n),
            k_nitsche: BlockRows::new(n),
            k_penalty: BlockRows::new(n),
            k_gamma_mp: BlockRows::new(n),
            k_gamma_mm: BlockRows::new(n),
            k_gamma_pp: BlockRows::new(n),
            k_gamma_pm: BlockRows::new(n),
            f_body: vec![[0.0; 2]; n],
            f_traction: vec![[0.0; 2]; n],
            f_nitsche: vec![[0.0; 2]; n],
            f_penalty: vec![[0.0; 2]; n],
            beta,
        }
    }

    pub fn stiffness_terms(&self) -> [&BlockRows; 8] {
        [
            &self.k_matrix,
            &self.k_inclusion,
            &self.k_nitsche,
            &self.k_penalty,
            &self.k_gamma_mp,
            &self.k_gamma_mm,
            &self.k_gamma_pp,
            &self.k_gamma_pm,
        ]
    }

    pub fn total(&self) -> AssembledSystem {
        let n = self.f_body.len();
        let mut k = BlockRows::new(n);
        for t in self.stiffness_terms() {
            k.merge(t, 1.0);
        }
        let nd = self.dim.n();
        let mut f = vec![0.0; n * nd];
        for i in 0..n {
            for a in 0..nd {
                f[i * nd + a] = self.f_body[i][a] + self.f_traction[i][a] + self.f_nitsche[i][a] + self.f_penalty[i][a];
            }
        }
        AssembledSystem {
            dim: self.dim,
            k: SparseMatrix::from_blocks(&k, nd),
            f,
        }
    }
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_blocks(k: &BlockRows, nd: usize) -> Self {
        let n = k.rows.len() * nd;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in &k.rows {
            let mut sorted = row.clone();
            sorted.sort_by_key(|e| e.0);
            for a in 0..nd {
                for (j, b) in &sorted {
                    for c in 0..nd {
                        cols.push(j * nd + c);
                        vals.push(b[a][c]);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .filter(|&k| self.cols[k] == j)
            .map(|k| self.vals[k])
            .sum()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut c = vec![0.0; self.n];
        for (k, &j) in self.cols.iter().enumerate() {
            c[j] += self.vals[k].abs();
        }
        c.into_iter().fold(0.0, f64::max)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                trips.push(Triplet::new(i, self.cols[k], self.vals[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| QceError::SingularSystem(format!("matrix construction failed: {e:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub dim: Dim,
    pub k: SparseMatrix,
    pub f: Vec<f64>,
}

impl AssembledSystem {
    pub fn ndof(&self) -> usize {
        self.f.len()
    }

    /// Global index of component `a` of node `i`.
    pub fn dof(&self, i: usize, a: usize) -> usize {
        i * self.dim.n() + a
    }
}

/// Node → cell map of one subdomain.
fn cell_owners(d: &EmbeddedDiscretization, s: Subdomain) -> Vec<Option<usize>> {
    let mut out = vec![None; d.cloud.len()];
    for (ci, c) in d.cells_of(s) {
        out[c.owner].get_or_insert(ci);
    }
    out
}

/// Cell whose smoothed B is used at a contour point: the nearest visible
/// cell-owning node of the subdomain.
fn contour_cell(d: &EmbeddedDiscretization, owners: &[Option<usize>], e: &ShapeEval, x: &Point, s: Subdomain) -> Result<usize> {
    let near = |ids: &mut dyn Iterator<Item = usize>| {
        ids.filter_map(|i| owners[i].map(|c| ((d.cloud.nodes[i].pos - x).norm(), i, c)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|t| t.2)
    };
    near(&mut e.ids.iter().copied())
        .or_else(|| near(&mut (0..d.cloud.len()).filter(|&i| d.cloud.nodes[i].belongs(s))))
        .ok_or_else(|| QceError::Geometry(format!("no cell-owning node of {s} near contour point {x}")))
}

/// Trial B̃ C-premultiplied for every node of a cell: (id, C B̃_J).
fn cell_stress_b(tables: &IntegrationTables, cell: usize, c: &CMat) -> Vec<(usize, BMat)> {
    let t = &tables.cells[cell];
    t.ids.iter().zip(&t.grad).map(|(&j, g)| (j, cb(c, &b_of(*g)))).collect()
}

fn add_vec(f: &mut [[f64; 2]], i: usize, v: [f64; 2], s: f64) {
    f[i][0] += v[0] * s;
    f[i][1] += v[1] * s;
}

fn domain_terms(d: &EmbeddedDiscretization, tables: &IntegrationTables, p: &HeterogeneousProblem, terms: &mut AssemblyTerms) {
    let dim = d.dim();
    for (ci, cell) in d.cells.iter().enumerate() {
        let c = p.materials.of(cell.subdomain).c(dim);
        let t = &tables.cells[ci];
        let target = match cell.subdomain {
            Subdomain::Matrix => &mut terms.k_matrix,
            Subdomain::Inclusion(_) => &mut terms.k_inclusion,
        };
        let trial: Vec<BMat> = t.grad.iter().map(|g| cb(&c, &b_of(*g))).collect();
        for (&i, gi) in t.corrected_ids.iter().zip(&t.corrected) {
            let bi = b_of(*gi);
            for (&j, cbj) in t.ids.iter().zip(&trial) {
                target.add(i, j, scale(atb(&bi, cbj), cell.volume));
            }
        }
        // NSNI: second-moment terms with the smoothed implicit-gradient derivatives
        let moments = [cell.mx, cell.my];
        for (dir, &m) in moments.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let bn: Vec<BMat> = t.nsni.iter().map(|n| b_of([n[dir][0], n[dir][1]])).collect();
            let cbn: Vec<BMat> = bn.iter().map(|b| cb(&c, b)).collect();
            for (&i, bi) in t.ids.iter().zip(&bn) {
                for (&j, cbj) in t.ids.iter().zip(&cbn) {
                    target.add(i, j, scale(atb(bi, cbj), m));
                }
            }
        }
        let b = p.body(cell.subdomain);
        let x = d.cloud.nodes[cell.owner].pos;
        let bx = b(&x);
        for (&i, &v) in t.owner_ids.iter().zip(&t.owner_values) {
            add_vec(&mut terms.f_body, i, bx, v * cell.volume);
        }
    }
}

fn outer_terms(
    d: &EmbeddedDiscretization,
    tables: &IntegrationTables,
    ev: &RkEvaluator,
    p: &HeterogeneousProblem,
    owners: &[Option<usize>],
    terms: &mut AssemblyTerms,
) -> Result<()> {
    let dim = d.dim();
    let c = p.materials.matrix.c(dim);
    let beta = terms.beta;
    let mut e = ShapeEval::default();
    for seg in &d.outer_segments {
        let dirichlet = p.is_dirichlet(seg);
        for (x, w) in seg.quadrature() {
            ev.shape_into(&x, Subdomain::Matrix, &mut e)?;
            if !dirichlet {
                let tv = (p.t)(&x);
                for (&i, &v) in e.ids.iter().zip(&e.values) {
                    add_vec(&mut terms.f_traction, i, tv, v * w);
                }
                continue;
            }
            let cell = contour_cell(d, owners, &e, &x, Subdomain::Matrix)?;
            let trial = cell_stress_b(tables, cell, &c);
            let eta = eta_of(&seg.normal);
            let g = (p.g)(&x);
            for (&i, &vi) in e.ids.iter().zip(&e.values) {
                for (j, cbj) in &trial {
                    // Ǩ_IJ = Ψ_I ηᵀ C B̃_J ; enters as −Ǩ − Ǩᵀ
                    let kc = scale(atb(&eta, cbj), vi * w);
                    terms.k_nitsche.add(i, *j, scale(kc, -1.0));
                    terms.k_nitsche.add(*j, i, scale(transpose(kc), -1.0));
                }
                for (&j, &vj) in e.ids.iter().zip(&e.values) {
                    let s = beta * vi * vj * w;
                    terms.k_penalty.add(i, j, [[s, 0.0], [0.0, s]]);
                }
                add_vec(&mut terms.f_penalty, i, g, beta * vi * w);
            }
            // −∫ B̃_Iᵀ C η g
            for (j, cbj) in &trial {
                let tr = [
                    (0..3).map(|r| cbj[r][0] * (eta[r][0] * g[0] + eta[r][1] * g[1])).sum::<f64>(),
                    (0..3).map(|r| cbj[r][1] * (eta[r][0] * g[0] + eta[r][1] * g[1])).sum::<f64>(),
                ];
                add_vec(&mut terms.f_nitsche, *j, tr, -w);
            }
        }
    }
    Ok(())
}

/// Penalty-free interface coupling; the blend α is its only parameter.
fn interface_terms(
    d: &EmbeddedDiscretization,
    tables: &IntegrationTables,
    ev: &RkEvaluator,
    materials: &MaterialPair,
    alpha: f64,
    owners_m: &[Option<usize>],
    owners_p: &[Vec<Option<usize>>],
    terms: &mut AssemblyTerms,
) -> Result<()> {
    let dim = d.dim();
    let cp = materials.inclusion.c(dim);
    let cm = materials.matrix.c(dim);
    let mut em = ShapeEval::default();
    let mut ep = ShapeEval::default();
    for seg in &d.interface_segments {
        let SegmentTag::Interface(k) = seg.tag else { continue };
        let sp = Subdomain::Inclusion(k);
        let eta = eta_of(&seg.normal);
        for (x, w) in seg.quadrature() {
            ev.shape_into(&x, Subdomain::Matrix, &mut em)?;
            ev.shape_into(&x, sp, &mut ep)?;
            let mut sides: Vec<(f64, Vec<(usize, BMat)>, bool)> = Vec::new();
            if alpha > 0.0 {
                let cell = contour_cell(d, &owners_p[k], &ep, &x, sp)?;
                sides.push((alpha, cell_stress_b(tables, cell, &cp), true));
            }
            if alpha < 1.0 {
                let cell = contour_cell(d, owners_m, &em, &x, Subdomain::Matrix)?;
                sides.push((1.0 - alpha, cell_stress_b(tables, cell, &cm), false));
            }
            for (wt, trial, plus) in &sides {
                let (km, kp) = if *plus {
                    (&mut terms.k_gamma_mp, &mut terms.k_gamma_pp)
                } else {
                    (&mut terms.k_gamma_mm, &mut terms.k_gamma_pm)
                };
                for (j, cbj) in trial {
                    let tj = atb(&eta, cbj);
                    for (&i, &v) in em.ids.iter().zip(&em.values) {
                        km.add(i, *j, scale(tj, wt * v * w));
                    }
                    for (&i, &v) in ep.ids.iter().zip(&ep.values) {
                        kp.add(i, *j, scale(tj, -wt * v * w));
                    }
                }
            }
        }
    }
    Ok(())
}

/// All terms of the discrete system, kept separate.
pub fn assemble_terms(
    p: &HeterogeneousProblem,
    d: &EmbeddedDiscretization,
    tables: &IntegrationTables,
) -> Result<AssemblyTerms> {
    p.validate()?;
    if tables.cells.len() != d.cells.len() {
        return Err(QceError::InvalidArgument("integration tables do not match the discretization".into()));
    }
    if !d.outer_segments.iter().any(|s| p.is_dirichlet(s)) {
        log::warn!("{}", QceError::SingularSystem("no Dirichlet boundary; the system is singular".into()));
    }
    let ev = RkEvaluator::new(&d.cloud, &d.domain);
    let n = d.cloud.len();
    let mut terms = AssemblyTerms::new(d.dim(), n, p.beta_for(d.h_background));
    domain_terms(d, tables, p, &mut terms);
    let owners_m = cell_owners(d, Subdomain::Matrix);
    let owners_p: Vec<_> = (0..d.domain.inclusions().len())
        .map(|k| cell_owners(d, Subdomain::Inclusion(k)))
        .collect();
    outer_terms(d, tables, &ev, p, &owners_m, &mut terms)?;
    interface_terms(d, tables, &ev, &p.materials, p.alpha, &owners_m, &owners_p, &mut terms)?;
    Ok(terms)
}

pub fn assemble(p: &HeterogeneousProblem, d: &EmbeddedDiscretization, tables: &IntegrationTables) -> Result<AssembledSystem> {
    Ok(assemble_terms(p, d, tables)?.total())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub dim: Dim,
    /// Generalized coefficients, node-major.
    pub d: Vec<f64>,
    /// ‖K d − f‖₂ / ‖f‖₂ (absolute when f = 0).
    pub residual: f64,
    /// ‖K d − f‖∞ / (‖K‖∞ ‖d‖∞ + ‖f‖∞)
    pub backward_error: f64,
    /// 1-norm condition estimate; only available from the direct solver.
    pub condition: Option<f64>,
}

impl Solution {
    pub fn coeff(&self, node: usize) -> [f64; 2] {
        match self.dim {
            Dim::One => [self.d[node], 0.0],
            Dim::Two => [self.d[2 * node], self.d[2 * node + 1]],
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Above this many unknowns the fill of the direct factorization outgrows
/// memory and ILU(0)-preconditioned GMRES is used instead.
pub const DIRECT_LIMIT: usize = 16_000;

/// Solves K d = f: sparse LU with iterative refinement for moderate sizes,
/// preconditioned GMRES above [`DIRECT_LIMIT`]. Either way the result must
/// pass the backward error gate of 1e-10.
pub fn solve(sys: &AssembledSystem) -> Result<Solution> {
    let n = sys.ndof();
    let empty: Vec<usize> = (0..n)
        .filter(|&i| sys.k.vals[sys.k.row_ptr[i]..sys.k.row_ptr[i + 1]].iter().all(|v| *v == 0.0))
        .collect();
    if !empty.is_empty() {
        return Err(QceError::SingularSystem(format!(
            "{} empty rows, first dofs {:?}",
            empty.len(),
            &empty[..empty.len().min(8)]
        )));
    }
    if sys.k.vals.iter().chain(&sys.f).any(|v| !v.is_finite()) {
        return Err(QceError::SingularSystem("non-finite entries in the system".into()));
    }
    let (x, condition) = if n <= DIRECT_LIMIT {
        let (x, c) = solve_direct(sys)?;
        (x, Some(c))
    } else {
        (solve_iterative(sys)?, None)
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QceError::SingularSystem("non-finite solution".into()));
    }
    let kx = sys.k.matvec(&x);
    let r: Vec<f64> = (0..n).map(|i| sys.f[i] - kx[i]).collect();
    let fnorm = norm2(&sys.f);
    let rel = if fnorm > 0.0 { norm2(&r) / fnorm } else { norm2(&r) };
    let rinf = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let xinf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let finf = sys.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = sys.k.norm_inf() * xinf + finf;
    let backward = if denom > 0.0 { rinf / denom } else { 0.0 };
    if rel > 1e-10 {
        log::debug!("relative residual {rel:e} above 1e-10 with backward error {backward:e}");
    }
    if backward > 1e-10 {
        return Err(QceError::SingularSystem(format!(
            "backward error {backward:e} exceeds 1e-10 (relative residual {rel:e})"
        )));
    }
    Ok(Solution {
        dim: sys.dim,
        d: x,
        residual: rel,
        backward_error: backward,
        condition,
    })
}

fn solve_direct(sys: &AssembledSystem) -> Result<(Vec<f64>, f64)> {
    let n = sys.ndof();
    let a = sys.k.to_faer()?;
    let lu = a
        .sp_lu()
        .map_err(|e| QceError::SingularSystem(format!("LU factorization failed: {e:?}")))?;
    let fnorm = norm2(&sys.f);
    let mut x = vec![0.0; n];
    let mut r = sys.f.clone();
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        let mut rhs = Mat::from_fn(n, 1, |i, _| r[i]);
        lu.solve_in_place(&mut rhs);
        for i in 0..n {
            x[i] += rhs[(i, 0)];
        }
        let kx = sys.k.matvec(&x);
        r = (0..n).map(|i| sys.f[i] - kx[i]).collect();
        let new = if fnorm > 0.0 { norm2(&r) / fnorm } else { norm2(&r) };
        if !new.is_finite() {
            return Err(QceError::SingularSystem("non-finite solution".into()));
        }
        let stalled = new >= 0.5 * rel;
        rel = rel.min(new);
        if rel <= 1e-15 || stalled {
            break;
        }
    }
    Ok((x, sys.k.norm1() * inverse_norm1_estimate(&lu, n)))
}

fn solve_iterative(sys: &AssembledSystem) -> Result<Vec<f64>> {
    let ilu = Ilu0::new(&sys.k)?;
    let out = gmres(&sys.k, &sys.f, &ilu, 1e-14, 200, 5000);
    log::debug!("GMRES: {} iterations, relative residual {:e}", out.iterations, out.residual);
    Ok(out.x)
}

/// Hager's estimate of ‖K⁻¹‖₁.
fn inverse_norm1_estimate(lu: &impl Solve<f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = Mat::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let mut y = x.clone();
        lu.solve_in_place(&mut y);
        est = (0..n).map(|i| y[(i, 0)].abs()).sum();
        let mut z = Mat::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        lu.solve_transpose_in_place(&mut z);
        let (jmax, zmax) = (0..n)
            .map(|i| (i, z[(i, 0)].abs()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::from_fn(n, 1, |i, _| if i == jmax { 1.0 } else { 0.0 });
    }
    est
}

fn subdomain_slot(s: Subdomain) -> usize {
    match s {
        Subdomain::Matrix => 0,
        Subdomain::Inclusion(k) => k + 1,
    }
}

/// Nodal strains (xx, yy, engineering xy) and stresses per subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredFields {
    pub dim: Dim,
    /// `strain[slot][node]` with slot 0 the matrix and k + 1 inclusion k.
    pub strain: Vec<Vec<[f64; 3]>>,
    pub stress: Vec<Vec<[f64; 3]>>,
    pub materials: MaterialPair,
}

impl RecoveredFields {
    pub fn nodal_strain(&self, s: Subdomain, node: usize) -> [f64; 3] {
        self.strain[subdomain_slot(s)][node]
    }

    pub fn nodal_stress(&self, s: Subdomain, node: usize) -> [f64; 3] {
        self.stress[subdomain_slot(s)][node]
    }
}

fn stress_of(c: &CMat, e: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| (0..3).map(|k| c[r][k] * e[k]).sum())
}

fn strain_from(ids: &[usize], grads: &[[f64; 2]], sol: &Solution) -> [f64; 3] {
    let mut e = [0.0; 3];
    for (&i, g) in ids.iter().zip(grads) {
        let u = sol.coeff(i);
        e[0] += g[0] * u[0];
        e[1] += g[1] * u[1];
        e[2] += g[1] * u[0] + g[0] * u[1];
    }
    e
}

/// Nodal smoothed strains where a node owns a cell, direct gradients elsewhere.
pub fn recover_fields(
    sol: &Solution,
    d: &EmbeddedDiscretization,
    tables: &IntegrationTables,
    materials: &MaterialPair,
) -> Result<RecoveredFields> {
    let ev = RkEvaluator::new(&d.cloud, &d.domain);
    let subs = d.domain.subdomains();
    let n = d.cloud.len();
    let mut strain = vec![vec![[0.0; 3]; n]; subs.len()];
    let mut stress = vec![vec![[0.0; 3]; n]; subs.len()];
    let mut e = ShapeEval::default();
    for &s in &subs {
        let slot = subdomain_slot(s);
        let owners = cell_owners(d, s);
        let c = materials.of(s).c(d.dim());
        for i in 0..n {
            let node = &d.cloud.nodes[i];
            if !node.belongs(s) {
                continue;
            }
            let eps = match owners[i] {
                Some(ci) => strain_from(&tables.cells[ci].ids, &tables.cells[ci].grad, sol),
                None => {
                    ev.shape_into(&node.pos, s, &mut e)?;
                    strain_from(&e.ids, &e.grads, sol)
                }
            };
            let eps = match d.dim() {
                Dim::One => [eps[0], 0.0, 0.0],
                Dim::Two => eps,
            };
            strain[slot][i] = eps;
            stress[slot][i] = stress_of(&c, &eps);
        }
    }
    Ok(RecoveredFields {
        dim: d.dim(),
        strain,
        stress,
        materials: *materials,
    })
}

/// Values of the discrete solution at arbitrary points.
pub struct FieldEvaluator<'a> {
    d: &'a EmbeddedDiscretization,
    ev: RkEvaluator<'a>,
    sol: &'a Solution,
    fields: &'a RecoveredFields,
}

/// Displacement, re-interpolated strain and stress at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub u: [f64; 2],
    pub strain: [f64; 3],
    pub stress: [f64; 3],
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(d: &'a EmbeddedDiscretization, sol: &'a Solution, fields: &'a RecoveredFields) -> Self {
        FieldEvaluator {
            d,
            ev: RkEvaluator::new(&d.cloud, &d.domain),
            sol,
            fields,
        }
    }

    /// Evaluates with the shape functions of subdomain `s`.
    pub fn eval_in(&self, x: &Point, s: Subdomain, scratch: &mut ShapeEval) -> Result<PointValues> {
        if !self.d.domain.contains_closed_rect(x, self.d.domain.tol()) {
            return Err(QceError::OutsideDomain(*x));
        }
        self.ev.shape_into(x, s, scratch)?;
        let slot = subdomain_slot(s);
        let mut u = [0.0; 2];
        let mut eps = [0.0; 3];
        for (&i, &v) in scratch.ids.iter().zip(&scratch.values) {
            let c = self.sol.coeff(i);
            u[0] += v * c[0];
            u[1] += v * c[1];
            let ne = self.fields.strain[slot][i];
            for k in 0..3 {
                eps[k] += v * ne[k];
            }
        }
        let c = self.fields.materials.of(s).c(self.d.dim());
        Ok(PointValues {
            u,
            strain: eps,
            stress: stress_of(&c, &eps),
        })
    }

    /// Evaluates in the subdomain containing `x`.
    pub fn eval(&self, x: &Point) -> Result<PointValues> {
        let s = self.d.domain.subdomain_of(x)?;
        self.eval_in(x, s, &mut ShapeEval::default())
    }

    /// Direct displacement gradient strain (not re-interpolated).
    pub fn direct_strain(&self, x: &Point, s: Subdomain) -> Result<[f64; 3]> {
        let e = self.ev.shape(x, s)?;
        Ok(strain_from(&e.ids, &e.grads, self.sol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::bar::{build_bar_1d, Bar1DSpec};
    use crate::bench::plate::build_plate;
    use crate::bench::{run_pipeline, DiscretizationOptions, RunResult};
    use crate::integration::{build_tables, IntegrationOptions};

    fn bar(recovery: bool) -> (Bar1DSpec, HeterogeneousProblem, EmbeddedDiscretization) {
        let spec = Bar1DSpec::nonconforming();
        let (p, d) = build_bar_1d(&spec, 0.1, 0.05, &DiscretizationOptions { recovery, ..Default::default() }).unwrap();
        (spec, p, d)
    }

    fn nodal_error(spec: &Bar1DSpec, d: &EmbeddedDiscretization, r: &RunResult) -> f64 {
        let ev = r.evaluator(d);
        d.cloud
            .nodes
            .iter()
            .map(|n| {
                let s = if n.matrix { Subdomain::Matrix } else { Subdomain::Inclusion(0) };
                let v = ev.eval_in(&n.pos, s, &mut ShapeEval::default()).unwrap();
                (v.u[0] - spec.exact(n.pos.x, None).u[0]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn bar_patch_test_is_exact() {
        for recovery in [true, false] {
            let (spec, p, d) = bar(recovery);
            let r = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
            assert!(r.solution.residual <= 1e-10);
            let err = nodal_error(&spec, &d, &r);
            assert!(err < 1e-12, "recovery={recovery}: {err:e}");
        }
    }

    fn affine(x: &Point) -> [f64; 2] {
        [0.01 + 0.002 * x.x - 0.003 * x.y, -0.02 + 0.001 * x.x + 0.004 * x.y]
    }

    fn equal_plate(h: f64, recovery: bool) -> (HeterogeneousProblem, EmbeddedDiscretization) {
        let spec = crate::bench::plate::PlateInclusionSpec {
            materials: MaterialPair {
                matrix: Material { e: 1e3, nu: 0.3 },
                inclusion: Material { e: 1e3, nu: 0.3 },
            },
            ..Default::default()
        };
        let (mut p, d) = build_plate(&spec, h, h / 2.0, &DiscretizationOptions { recovery, ..Default::default() }).unwrap();
        p.g = Arc::new(affine);
        (p, d)
    }

    #[test]
    fn affine_field_reproduced_in_2d() {
        for recovery in [true, false] {
            let (p, d) = equal_plate(0.4, recovery);
            let r = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
            let ev = r.evaluator(&d);
            let mut sc = ShapeEval::default();
            let n = crate::bench::norms::error_norms(
                &d.domain,
                0.4,
                &Default::default(),
                |x, s| ev.eval_in(x, s, &mut sc),
                |x, _| PointValues {
                    u: affine(x),
                    strain: [0.002, 0.004, -0.002],
                    stress: [0.0; 3],
                },
            )
            .unwrap();
            assert!(n.l2 <= 1e-9 * n.u_norm, "recovery={recovery}: {:e}", n.l2_rel());
        }
    }

    #[test]
    fn rigid_translation_has_no_stress() {
        let (mut p, d) = equal_plate(0.4, true);
        p.materials.inclusion = Material { e: 1e5, nu: 0.3 };
        p.g = Arc::new(|_| [0.3, -0.2]);
        let r = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
        for slot in &r.fields.stress {
            for s in slot {
                assert!(s.iter().all(|v| v.abs() <= 1e-8 * 1e3), "{s:?}");
            }
        }
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let (mut p, d) = equal_plate(0.4, true);
        p.g = zero_field();
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        let sys = assemble(&p, &d, &t).unwrap();
        assert!(sys.f.iter().all(|v| *v == 0.0));
        let sol = solve(&sys).unwrap();
        assert!(sol.d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn block_pattern_with_unit_alpha() {
        let (_, p, d) = bar(true);
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        let terms = assemble_terms(&p, &d, &t).unwrap();
        assert_eq!(terms.k_gamma_mm.max_abs(), 0.0);
        assert_eq!(terms.k_gamma_pm.max_abs(), 0.0);
        let sys = terms.total();
        let only_matrix = |i: usize| d.cloud.nodes[i].matrix && d.cloud.nodes[i].inclusion.is_none();
        let only_incl = |i: usize| !d.cloud.nodes[i].matrix && d.cloud.nodes[i].inclusion.is_some();
        for i in (0..d.cloud.len()).filter(|&i| only_incl(i)) {
            for j in (0..d.cloud.len()).filter(|&j| only_matrix(j)) {
                assert_eq!(sys.k.get(i, j), 0.0, "K[{i},{j}]");
            }
        }
        // the coupling block is populated
        assert!(terms.k_gamma_mp.max_abs() > 0.0);
    }

    #[test]
    fn doubling_beta_keeps_patch_solution() {
        let (_, mut p, d) = bar(true);
        let a = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
        p.beta = Some(2.0 * p.beta_for(d.h_background));
        let b = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
        for (x, y) in a.solution.d.iter().zip(&b.solution.d) {
            assert!((x - y).abs() <= 1e-10, "{x} {y}");
        }
    }

    #[test]
    fn alpha_does_not_change_patch_solution() {
        let (_, mut p, d) = bar(true);
        let mut sols = Vec::new();
        for alpha in [0.0, 0.5, 1.0] {
            p.alpha = alpha;
            sols.push(run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap().solution.d);
        }
        for a in &sols {
            for b in &sols {
                let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff <= 1e-9, "{diff:e}");
            }
        }
    }

    #[test]
    fn interface_flux_balances() {
        let (p, d) = equal_plate(0.4, true);
        let mut p = p;
        p.materials.inclusion = Material { e: 1e5, nu: 0.3 };
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let t = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        let terms = assemble_terms(&p, &d, &t).unwrap();
        let m = terms.k_gamma_mp.column_sums();
        let q = terms.k_gamma_pp.column_sums();
        let scale = terms.k_gamma_mp.max_abs();
        for j in 0..m.len() {
            for a in 0..2 {
                for b in 0..2 {
                    assert!((m[j][a][b] + q[j][a][b]).abs() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn interface_coupling_has_no_penalty() {
        let src = include_str!("assembly.rs");
        let start = src.find("fn interface_terms(").unwrap();
        let end = start + src[start..].find("\n}\n").unwrap();
        assert!(!src[start..end].contains("beta"));
    }

    #[test]
    fn recovered_patch_fields() {
        let (spec, p, d) = bar(true);
        let r = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
        let sigma = spec.exact(0.0, None).stress[0];
        let ev = r.evaluator(&d);
        for i in 0..50 {
            let x = Point::new(0.013 + 2.97 * i as f64 / 49.0, 0.0);
            let v = ev.eval(&x).unwrap();
            assert!((v.stress[0] - sigma).abs() <= 1e-10 * sigma, "{x}: {} vs {sigma}", v.stress[0]);
        }
        // strain jump across the left interface
        let em = ev.eval_in(&Point::new(0.77, 0.0), Subdomain::Matrix, &mut ShapeEval::default()).unwrap();
        let ep = ev.eval_in(&Point::new(0.77, 0.0), Subdomain::Inclusion(0), &mut ShapeEval::default()).unwrap();
        assert!((em.strain[0] / ep.strain[0] - 100.0).abs() < 1e-8);
        assert!((em.stress[0] - ep.stress[0]).abs() < 1e-10 * sigma);
        assert!((em.u[0] - ep.u[0]).abs() < 1e-14);
    }
}

