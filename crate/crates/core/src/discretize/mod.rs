//! Quasi-conforming embedded discretization: conforming foreground cells,
//! quadtree-corrected background cells, volume-recovery cells and shared
//! interface nodes.

mod background;
mod foreground;
mod io;

use std::collections::{BTreeSet, HashSet};

pub use background::{generate_background, Background, QuadCell};
pub use foreground::{generate_foreground, generate_foreground_1d, Foreground};
pub use io::{read_discretization, write_discretization, FORMAT_HEADER};

use crate::error::{QceError, Result};
use crate::geometry::{
    BoundarySegment, CellClass, CellShape, Dim, DomainSpec, Inclusion, Point, Polygon, Rect,
    SegmentTag, Subdomain,
};
use crate::rk::{KernelSpec, Node, NodeCloud, NodeOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellOrigin {
    Foreground,
    Background,
    Refined,
    Recovery,
}

impl CellOrigin {
    pub fn name(self) -> &'static str {
        match self {
            CellOrigin::Foreground => "foreground",
            CellOrigin::Background => "background",
            CellOrigin::Refined => "refined",
            CellOrigin::Recovery => "recovery",
        }
    }
}

/// Nodal integration cell with its boundary quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingCell {
    pub owner: usize,
    pub subdomain: Subdomain,
    pub shape: CellShape,
    /// `(point, outward normal, weight)`
    pub boundary: Vec<(Point, crate::geometry::Vector, f64)>,
    pub volume: f64,
    /// Second moments about the owner node.
    pub mx: f64,
    pub my: f64,
    pub conforming: bool,
    pub origin: CellOrigin,
    pub level: u32,
}

impl SmoothingCell {
    pub fn new(
        owner: usize,
        owner_pos: &Point,
        subdomain: Subdomain,
        shape: CellShape,
        conforming: bool,
        origin: CellOrigin,
        level: u32,
    ) -> Self {
        let (volume, mx, my) = shape.moments(owner_pos);
        SmoothingCell {
            owner,
            subdomain,
            boundary: shape.boundary_quadrature(),
            shape,
            volume,
            mx,
            my,
            conforming,
            origin,
            level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdivisionParams {
    /// Rounding threshold for the spacing ratio.
    pub k: f64,
    /// Refinement band width as a multiple of the interface spacing.
    pub band: f64,
}

impl Default for SubdivisionParams {
    fn default() -> Self {
        SubdivisionParams { k: 0.5, band: 1.5 }
    }
}

impl SubdivisionParams {
    pub fn new(k: f64, band: f64) -> Result<Self> {
        if !(k > 0.0 && k < 1.0) || !(band >= 1.0) {
            return Err(QceError::InvalidArgument(format!(
                "need 0 < k < 1 and band >= 1, got k = {k}, band = {band}"
            )));
        }
        Ok(SubdivisionParams { k, band })
    }
}

/// Number of quadtree levels from the background and interface spacings.
pub fn subdivision_level(h_background: f64, h_interface: f64, k: f64) -> u32 {
    let r = h_background / h_interface;
    if !(r > 1.0) {
        return 0;
    }
    // ratios like 0.35 / 0.1 land just below the exact decimal value
    let eps = 1e-9 * r;
    let mut fl = r.floor();
    if r - fl > 1.0 - eps {
        fl += 1.0;
    }
    let frac = (r - fl).max(0.0);
    let rp = if frac >= k - eps { fl + 1.0 } else { fl };
    let nlog = rp.log2().floor();
    if nlog <= 0.0 {
        0
    } else {
        nlog as u32
    }
}

/// The merged discretization consumed by integration and assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDiscretization {
    pub domain: DomainSpec,
    pub cloud: NodeCloud,
    pub cells: Vec<SmoothingCell>,
    pub interface_segments: Vec<BoundarySegment>,
    pub outer_segments: Vec<BoundarySegment>,
    /// Background spacing before subdivision.
    pub h_background: f64,
    /// Interface node spacing per inclusion.
    pub h_interface: Vec<f64>,
    pub n_r: u32,
    pub removed_nodes: usize,
    pub removed_cells: usize,
    /// |Ω⁻| minus the surviving background cell measure.
    pub missing_area: f64,
    pub shared: bool,
    pub recovery: bool,
}

impl EmbeddedDiscretization {
    pub fn dim(&self) -> Dim {
        self.domain.dim()
    }

    pub fn cells_of(&self, s: Subdomain) -> impl Iterator<Item = (usize, &SmoothingCell)> + '_ {
        self.cells.iter().enumerate().filter(move |(_, c)| c.subdomain == s)
    }

    pub fn subdomain_volume(&self, s: Subdomain) -> f64 {
        self.cells_of(s).map(|(_, c)| c.volume).sum()
    }

    /// Boundary of the integration region of `s`: outer boundary and all
    /// interfaces for the matrix (normals flipped to n⁻), the own interface
    /// for an inclusion.
    pub fn subdomain_boundary(&self, s: Subdomain) -> Vec<BoundarySegment> {
        match s {
            Subdomain::Matrix => {
                let mut out = self.outer_segments.clone();
                out.extend(self.interface_segments.iter().map(|g| BoundarySegment {
                    normal: -g.normal,
                    ..*g
                }));
                out
            }
            Subdomain::Inclusion(k) => self
                .interface_segments
                .iter()
                .filter(|g| g.tag == SegmentTag::Interface(k))
                .copied()
                .collect(),
        }
    }

    pub fn subdomain_perimeter(&self, s: Subdomain) -> f64 {
        let segs = self.subdomain_boundary(s);
        if self.dim() == Dim::One {
            segs.len() as f64
        } else {
            segs.iter().map(|g| g.length()).sum()
        }
    }

    pub fn interface_node_ids(&self) -> Vec<usize> {
        (0..self.cloud.len()).filter(|&i| self.cloud.nodes[i].interface).collect()
    }

    pub fn recovery_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.origin == CellOrigin::Recovery).count()
    }
}

/// Background cell bookkeeping during embedding.
struct Leaf {
    cell: QuadCell,
    alive: bool,
}

/// Embeds the foregrounds into the background grid.
pub fn embed(
    background: &Background,
    foregrounds: &[Foreground],
    params: &SubdivisionParams,
    kernel: &KernelSpec,
) -> Result<EmbeddedDiscretization> {
    let inclusions: Vec<Inclusion> = foregrounds.iter().map(|f| f.inclusion.clone()).collect();
    let domain = DomainSpec::new(background.dim, background.rect, inclusions)?;
    let tol = domain.tol();
    let h = background.h;
    let h_interface: Vec<f64> = foregrounds.iter().map(|f| f.interface_spacing).collect();
    let h_int_min = h_interface.iter().copied().fold(f64::INFINITY, f64::min);
    let n_r = if foregrounds.is_empty() {
        0
    } else {
        subdivision_level(h, h_int_min, params.k)
    };
    let band = params.band * h_int_min;

    let mut removed_cells = 0usize;
    let mut removed_nodes = 0usize;
    let classify = |c: &QuadCell| domain.clip_cell_against_interface(&background.shape(c));

    // step 1: drop cells wholly inside an inclusion
    let mut leaves: Vec<Leaf> = Vec::new();
    for c in background.root_cells() {
        if matches!(classify(&c), CellClass::FullyInclusion(_)) {
            removed_cells += 1;
            removed_nodes += 1;
        } else {
            leaves.push(Leaf { cell: c, alive: true });
        }
    }

    // steps 2 and 3: split band/straddling cells, then straddling cells again
    for pass in 0..n_r {
        let mut next = Vec::with_capacity(leaves.len());
        for leaf in leaves {
            let class = classify(&leaf.cell);
            let split = match class {
                CellClass::Straddles(_) => true,
                _ => {
                    pass == 0
                        && domain.distance_to_interface(&background.center(&leaf.cell)) <= band
                }
            };
            if split {
                for child in background.children(&leaf.cell) {
                    if matches!(classify(&child), CellClass::FullyInclusion(_)) {
                        removed_cells += 1;
                    } else {
                        next.push(Leaf { cell: child, alive: true });
                    }
                }
            } else {
                next.push(leaf);
            }
        }
        leaves = next;
    }
    if n_r >= 2 {
        leaves = balance(background, leaves, &domain, &mut removed_cells);
    }

    // step 4: drop cells with a boundary evaluation point in an inclusion,
    // together with their nodes, which would otherwise carry no volume
    for leaf in &mut leaves {
        let shape = background.shape(&leaf.cell);
        let hit = shape
            .boundary_quadrature()
            .iter()
            .any(|(p, _, _)| domain.inclusion_containing(p, tol).is_some());
        if hit {
            leaf.alive = false;
            removed_cells += 1;
            removed_nodes += 1;
        }
    }

    // assemble the node cloud: surviving background nodes, then foregrounds
    let mut nodes: Vec<Node> = Vec::new();
    let mut cells: Vec<SmoothingCell> = Vec::new();
    for leaf in &leaves {
        let pos = background.center(&leaf.cell);
        if !leaf.alive {
            continue;
        }
        let spacing = background.cell_size(leaf.cell.level);
        let id = nodes.len();
        nodes.push(Node {
            pos,
            spacing,
            support: kernel.c * spacing,
            matrix: true,
            inclusion: None,
            interface: false,
            origin: if leaf.cell.level == 0 {
                NodeOrigin::Background
            } else {
                NodeOrigin::Refined
            },
            has_cell: true,
        });
        if leaf.alive {
            let origin = if leaf.cell.level == 0 {
                CellOrigin::Background
            } else {
                CellOrigin::Refined
            };
            cells.push(SmoothingCell::new(
                id,
                &pos,
                Subdomain::Matrix,
                background.shape(&leaf.cell),
                true,
                origin,
                leaf.cell.level,
            ));
        }
    }
    let n_background = nodes.len();
    let merge_tol = 1e-8 * h;
    let mut interface_segments = Vec::new();
    for (k, fg) in foregrounds.iter().enumerate() {
        let offset = nodes.len();
        for (local, n) in fg.nodes.iter().enumerate() {
            let mut n = n.clone();
            n.inclusion = Some(k);
            // a background node on top of a foreground node is merged into it
            if let Some(dup) = (0..n_background).find(|&b| (nodes[b].pos - n.pos).norm() <= merge_tol) {
                log::warn!(
                    "{}; merging background node {dup} into foreground node {}",
                    QceError::DuplicateNode(n.pos),
                    offset + local
                );
                n.matrix = true;
                for c in cells.iter_mut().filter(|c| c.owner == dup) {
                    c.owner = offset + local;
                }
                nodes[dup].matrix = false;
                nodes[dup].has_cell = false;
            }
            nodes.push(n);
        }
        for (local, shape) in fg.cells.iter().enumerate() {
            let id = offset + local;
            cells.push(SmoothingCell::new(
                id,
                &nodes[id].pos.clone(),
                Subdomain::Inclusion(k),
                shape.clone(),
                true,
                CellOrigin::Foreground,
                0,
            ));
        }
        match &fg.inclusion {
            Inclusion::Interval { .. } => interface_segments.extend(domain.interface_segments(k)),
            Inclusion::Circle(_) => {
                for (a, b) in &fg.interface_pieces {
                    interface_segments.push(BoundarySegment {
                        a: *a,
                        b: *b,
                        normal: crate::geometry::edge_normal(a, b),
                        tag: SegmentTag::Interface(k),
                    });
                }
            }
        }
    }
    // drop background nodes emptied by merging
    let keep: Vec<bool> = nodes.iter().map(|n| n.matrix || n.inclusion.is_some()).collect();
    if keep.iter().any(|k| !k) {
        let mut remap = vec![usize::MAX; nodes.len()];
        let mut kept = Vec::new();
        for (i, n) in nodes.into_iter().enumerate() {
            if keep[i] {
                remap[i] = kept.len();
                kept.push(n);
            }
        }
        nodes = kept;
        for c in &mut cells {
            c.owner = remap[c.owner];
        }
    }
    let (xs, ys) = background.grid_lines();
    let outer_segments = domain.outer_segments(&xs, &ys);
    let matrix_volume: f64 = cells
        .iter()
        .filter(|c| c.subdomain == Subdomain::Matrix)
        .map(|c| c.volume)
        .sum();
    let missing_area = domain.matrix_measure() - matrix_volume;
    log::debug!(
        "embedded: {} nodes, {} cells, n_R = {n_r}, missing area {missing_area:e}",
        nodes.len(),
        cells.len()
    );
    Ok(EmbeddedDiscretization {
        cloud: NodeCloud {
            dim: background.dim,
            nodes,
        },
        domain,
        cells,
        interface_segments,
        outer_segments,
        h_background: h,
        h_interface,
        n_r,
        removed_nodes,
        removed_cells,
        missing_area,
        shared: false,
        recovery: false,
    })
}

/// Splits leaves until face-adjacent leaves differ by at most one level.
fn balance(
    bg: &Background,
    mut leaves: Vec<Leaf>,
    domain: &DomainSpec,
    removed: &mut usize,
) -> Vec<Leaf> {
    loop {
        let present: HashSet<QuadCell> = leaves.iter().map(|l| l.cell).collect();
        let covering = |level: u32, i: i64, j: i64| -> Option<QuadCell> {
            (0..=level).rev().find_map(|l| {
                let s = level - l;
                let c = QuadCell { level: l, i: i >> s, j: j >> s };
                present.contains(&c).then_some(c)
            })
        };
        let mut to_split: BTreeSet<QuadCell> = BTreeSet::new();
        for leaf in &leaves {
            let c = leaf.cell;
            if c.level < 2 {
                continue;
            }
            let dirs: &[(i64, i64)] = match bg.dim {
                Dim::One => &[(-1, 0), (1, 0)],
                Dim::Two => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            };
            for (di, dj) in dirs {
                let (ni, nj) = (c.i + di, c.j + dj);
                if ni < 0 || nj < 0 {
                    continue;
                }
                if let Some(nb) = covering(c.level, ni, nj) {
                    if nb.level + 1 < c.level {
                        to_split.insert(nb);
                    }
                }
            }
        }
        if to_split.is_empty() {
            return leaves;
        }
        let mut next = Vec::with_capacity(leaves.len() + 3 * to_split.len());
        for leaf in leaves {
            if to_split.contains(&leaf.cell) {
                for child in bg.children(&leaf.cell) {
                    if matches!(
                        domain.clip_cell_against_interface(&bg.shape(&child)),
                        CellClass::FullyInclusion(_)
                    ) {
                        *removed += 1;
                    } else {
                        next.push(Leaf { cell: child, alive: true });
                    }
                }
            } else {
                next.push(leaf);
            }
        }
        leaves = next;
    }
}

/// Gives every interface node matrix membership so both subdomain
/// approximations use a single set of interface degrees of freedom.
pub fn share_interface_nodes(mut d: EmbeddedDiscretization) -> EmbeddedDiscretization {
    for n in &mut d.cloud.nodes {
        if n.interface {
            n.matrix = true;
        }
    }
    d.shared = true;
    d
}

/// Adds one equal-measure square (interval in 1D) matrix cell centered on
/// each interface node so that the matrix cell volume equals |Ω⁻|.
pub fn add_volume_recovery_cells(mut d: EmbeddedDiscretization) -> Result<EmbeddedDiscretization> {
    let ids = d.interface_node_ids();
    if ids.is_empty() {
        return Ok(d);
    }
    if !(d.missing_area > 0.0) {
        log::warn!("missing matrix area {:e} is not positive; no recovery cells added", d.missing_area);
        return Ok(d);
    }
    let each = d.missing_area / ids.len() as f64;
    for &i in &ids {
        let p = d.cloud.nodes[i].pos;
        let shape = match d.dim() {
            Dim::One => CellShape::Interval {
                lo: p.x - 0.5 * each,
                hi: p.x + 0.5 * each,
            },
            Dim::Two => CellShape::Polygon(Polygon::square(p, each.sqrt())?),
        };
        d.cells.push(SmoothingCell::new(
            i,
            &p,
            Subdomain::Matrix,
            shape,
            false,
            CellOrigin::Recovery,
            0,
        ));
    }
    d.recovery = true;
    Ok(d)
}

/// Axis-aligned domain rectangle helper for 1D bars.
pub fn bar_rect(length: f64) -> Rect {
    Rect::interval(0.0, length)
}
