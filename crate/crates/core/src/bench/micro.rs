//! Multi-inclusion microstructure: bottom edge fixed, top edge displaced by
//! a combined tension/shear vector, sides traction free.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{FieldEvaluator, HeterogeneousProblem, Material, MaterialPair};
use crate::discretize::{generate_background, generate_foreground, EmbeddedDiscretization};
use crate::error::{QceError, Result};
use crate::geometry::{Dim, DomainSpec, OuterSide, Point, Rect};
use crate::rk::ShapeEval;

use super::norms::{for_each_quadrature_point, NormOptions};
use super::{build_embedded, DiscretizationOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct MicrostructureSpec {
    pub rect: Rect,
    /// Explicit inclusions `(center, radius)`; sampled when empty.
    pub inclusions: Vec<(Point, f64)>,
    pub count: usize,
    pub radius_range: (f64, f64),
    /// Minimum clearance between inclusions and to the outer boundary. The
    /// default of 0.45 leaves at least one unrefined background column
    /// between a refinement band and the outer edge at h⁻ = 0.175; with less,
    /// the small supports of refined nodes leave edge points seeing a single
    /// collinear column of coarse nodes.
    pub gap: f64,
    pub seed: u64,
    /// Displacement of the top edge.
    pub g: [f64; 2],
    pub materials: MaterialPair,
}

impl Default for MicrostructureSpec {
    fn default() -> Self {
        MicrostructureSpec {
            rect: Rect::new(Point::new(0.0, 0.0), Point::new(3.5, 3.5)),
            inclusions: Vec::new(),
            count: 5,
            radius_range: (0.3, 0.5),
            gap: 0.45,
            seed: 2024,
            g: [0.02, 0.02],
            materials: MaterialPair {
                matrix: Material { e: 1e3, nu: 0.3 },
                inclusion: Material { e: 1e5, nu: 0.3 },
            },
        }
    }
}

const MAX_ATTEMPTS: usize = 100_000;
/// Consecutive rejections after which a partial layout is discarded.
const STALL: usize = 2_000;

/// Seeded rejection sampler of disjoint circles with clearance `gap`.
/// A partial layout that stalls is restarted from scratch, since an early
/// placement can leave no room for the rest.
pub fn sample_layout(spec: &MicrostructureSpec) -> Result<Vec<(Point, f64)>> {
    let (rmin, rmax) = spec.radius_range;
    if !(rmin > 0.0 && rmax >= rmin) {
        return Err(QceError::InvalidArgument(format!("bad radius range {:?}", spec.radius_range)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out: Vec<(Point, f64)> = Vec::new();
    let r = &spec.rect;
    let mut rejected = 0;
    for _ in 0..MAX_ATTEMPTS {
        if out.len() == spec.count {
            return Ok(out);
        }
        if rejected == STALL {
            out.clear();
            rejected = 0;
        }
        let rad = if rmax > rmin { rng.random_range(rmin..rmax) } else { rmin };
        let m = rad + spec.gap;
        if r.width() <= 2.0 * m || r.height() <= 2.0 * m {
            continue;
        }
        let c = Point::new(
            rng.random_range(r.lo.x + m..r.hi.x - m),
            rng.random_range(r.lo.y + m..r.hi.y - m),
        );
        if out.iter().all(|(q, rq)| (c - q).norm() >= rad + rq + spec.gap) {
            out.push((c, rad));
            rejected = 0;
        } else {
            rejected += 1;
        }
    }
    Err(QceError::InvalidLayout(format!(
        "could not place {} disjoint inclusions after {MAX_ATTEMPTS} attempts",
        spec.count
    )))
}

/// Checks pairwise clearance and containment of an explicit layout.
pub fn check_layout(rect: &Rect, layout: &[(Point, f64)], gap: f64) -> Result<()> {
    for (i, (c, r)) in layout.iter().enumerate() {
        if c.x - r < rect.lo.x + gap || c.x + r > rect.hi.x - gap || c.y - r < rect.lo.y + gap || c.y + r > rect.hi.y - gap {
            return Err(QceError::InvalidLayout(format!("inclusion {i} is not inside the domain")));
        }
        for (j, (q, rq)) in layout.iter().enumerate().skip(i + 1) {
            if (c - q).norm() < r + rq + gap {
                return Err(QceError::InvalidLayout(format!("inclusions {i} and {j} overlap")));
            }
        }
    }
    Ok(())
}

pub fn layout(spec: &MicrostructureSpec) -> Result<Vec<(Point, f64)>> {
    if spec.inclusions.is_empty() {
        sample_layout(spec)
    } else {
        check_layout(&spec.rect, &spec.inclusions, 0.0)?;
        Ok(spec.inclusions.clone())
    }
}

pub fn build_microstructure(
    spec: &MicrostructureSpec,
    h_minus: f64,
    h_plus: f64,
    opts: &DiscretizationOptions,
) -> Result<(HeterogeneousProblem, EmbeddedDiscretization)> {
    let circles = layout(spec)?;
    let bg = generate_background(Dim::Two, spec.rect, h_minus)?;
    let fgs = circles
        .iter()
        .map(|(c, r)| generate_foreground(*c, *r, h_plus, &opts.kernel))
        .collect::<Result<Vec<_>>>()?;
    // fail early with a layout error rather than deep inside embedding
    DomainSpec::new(Dim::Two, spec.rect, fgs.iter().map(|f| f.inclusion.clone()).collect())?;
    let d = build_embedded(&bg, &fgs, opts)?;
    let mut p = HeterogeneousProblem::new(spec.materials);
    p.dirichlet = vec![OuterSide::Bottom, OuterSide::Top];
    let (ytop, g) = (spec.rect.hi.y, spec.g);
    let mid = 0.5 * (spec.rect.lo.y + ytop);
    p.g = Arc::new(move |x: &Point| if x.y > mid { g } else { [0.0, 0.0] });
    Ok((p, d))
}

/// L₂ norm of u_a − u_b over the quadrature tiling of `a`, the coarser of
/// the two in a self-convergence study, so `a` is only evaluated where its
/// own error norms would be. `b` classifies points by its own interface
/// polygons, which differ from `a`'s near the interfaces.
pub fn displacement_difference(
    a: &FieldEvaluator,
    a_domain: &DomainSpec,
    b: &FieldEvaluator,
    h: f64,
    opts: &NormOptions,
) -> Result<f64> {
    let mut scratch = ShapeEval::default();
    let mut sum = 0.0;
    for_each_quadrature_point(a_domain, h, opts, |x, w, s| {
        let ua = a.eval_in(x, s, &mut scratch)?.u;
        let ub = b.eval(x)?.u;
        sum += w * ((ua[0] - ub[0]).powi(2) + (ua[1] - ub[1]).powi(2));
        Ok(())
    })?;
    Ok(sum.sqrt())
}
