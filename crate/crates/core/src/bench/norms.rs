//! L₂ and H₁-semi error norms by subdomain-wise triangle quadrature.
//!
//! The domain is tiled by squares of side h/`divisions`; squares cut by an
//! interface polygon are split into the convex pieces inside and outside it,
//! each fanned into triangles with a collapsed-coordinate Gauss rule.

use crate::assembly::PointValues;
use crate::error::{QceError, Result};
use crate::geometry::{edge_normal, Dim, DomainSpec, Inclusion, Point, Polygon, Subdomain};
use crate::quadrature::{gauss_interval, gauss_legendre, triangle_rule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Points per direction of the Gauss rules (10 in 1D gives degree 19;
    /// 6 per direction in the triangle rule gives degree 10).
    pub gauss_1d: usize,
    pub triangle_points: usize,
    /// Integration squares per background spacing.
    pub divisions: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            gauss_1d: 10,
            triangle_points: 6,
            divisions: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    /// Norms of the reference field, for relative errors.
    pub u_norm: f64,
    pub strain_norm: f64,
}

impl ErrorNorms {
    pub fn l2_rel(&self) -> f64 {
        self.l2 / self.u_norm
    }

    pub fn h1_rel(&self) -> f64 {
        self.h1 / self.strain_norm
    }
}

/// Split a convex piece by a convex CCW polygon into (inside, outside pieces).
fn split_convex(piece: &Polygon, poly: &[Point]) -> (Option<Polygon>, Vec<Polygon>) {
    let mut inside = Some(piece.clone());
    let mut outside = Vec::new();
    for k in 0..poly.len() {
        let Some(cur) = inside.take() else { break };
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let n = edge_normal(&a, &b);
        if let Some(out) = cur.clip_half_plane(&a, &(-n)) {
            outside.push(out);
        }
        inside = cur.clip_half_plane(&a, &n);
    }
    (inside, outside)
}

/// Calls `f(point, weight, subdomain)` for every quadrature point.
pub fn for_each_quadrature_point(
    domain: &DomainSpec,
    h: f64,
    opts: &NormOptions,
    mut f: impl FnMut(&Point, f64, Subdomain) -> Result<()>,
) -> Result<()> {
    let divisions = opts.divisions.max(1) as f64;
    let hq = h / divisions;
    let r = domain.rect();
    match domain.dim() {
        Dim::One => {
            let rule = gauss_legendre(opts.gauss_1d);
            let mut cuts = vec![(r.lo.x, Subdomain::Matrix)];
            let mut ivs: Vec<(f64, f64, usize)> = domain
                .inclusions()
                .iter()
                .enumerate()
                .filter_map(|(k, inc)| match inc {
                    Inclusion::Interval { lo, hi } => Some((*lo, *hi, k)),
                    _ => None,
                })
                .collect();
            ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (lo, hi, k) in ivs {
                cuts.push((lo, Subdomain::Inclusion(k)));
                cuts.push((hi, Subdomain::Matrix));
            }
            for (i, &(a, s)) in cuts.iter().enumerate() {
                let b = cuts.get(i + 1).map_or(r.hi.x, |c| c.0);
                let n = ((b - a) / hq).ceil().max(1.0) as usize;
                for j in 0..n {
                    let lo = a + (b - a) * j as f64 / n as f64;
                    let hi = a + (b - a) * (j + 1) as f64 / n as f64;
                    for (x, w) in gauss_interval(lo, hi, &rule) {
                        f(&Point::new(x, 0.0), w, s)?;
                    }
                }
            }
        }
        Dim::Two => {
            let rule = gauss_legendre(opts.triangle_points);
            let polys: Vec<(Vec<Point>, Point, f64)> = domain
                .inclusions()
                .iter()
                .map(|inc| match inc {
                    Inclusion::Circle(c) => {
                        let (center, rad) = inc.bounding_circle();
                        Ok((c.polyline().to_vec(), center, rad))
                    }
                    Inclusion::Interval { .. } => Err(QceError::Geometry("interval inclusion in 2D".into())),
                })
                .collect::<Result<_>>()?;
            let nx = (r.width() / hq).round().max(1.0) as usize;
            let ny = (r.height() / hq).round().max(1.0) as usize;
            let (dx, dy) = (r.width() / nx as f64, r.height() / ny as f64);
            let tol = domain.tol();
            let emit = |pieces: &[Polygon], s: Subdomain, f: &mut dyn FnMut(&Point, f64, Subdomain) -> Result<()>| {
                for p in pieces {
                    for tri in p.fan() {
                        for (x, w) in triangle_rule(&tri, &rule) {
                            f(&x, w, s)?;
                        }
                    }
                }
                Ok::<(), QceError>(())
            };
            for j in 0..ny {
                for i in 0..nx {
                    let x0 = r.lo.x + i as f64 * dx;
                    let y0 = r.lo.y + j as f64 * dy;
                    let x1 = if i + 1 == nx { r.hi.x } else { x0 + dx };
                    let y1 = if j + 1 == ny { r.hi.y } else { y0 + dy };
                    let sq = Polygon::new(vec![
                        Point::new(x0, y0),
                        Point::new(x1, y0),
                        Point::new(x1, y1),
                        Point::new(x0, y1),
                    ])?;
                    let center = Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1));
                    let half_diag = 0.5 * (x1 - x0).hypot(y1 - y0);
                    let mut matrix = vec![sq];
                    for (k, (poly, c, rad)) in polys.iter().enumerate() {
                        if (center - c).norm() > rad + half_diag + tol {
                            continue;
                        }
                        let mut rest = Vec::new();
                        let mut inside = Vec::new();
                        for piece in &matrix {
                            let (a, b) = split_convex(piece, poly);
                            inside.extend(a);
                            rest.extend(b);
                        }
                        emit(&inside, Subdomain::Inclusion(k), &mut f)?;
                        matrix = rest;
                    }
                    emit(&matrix, Subdomain::Matrix, &mut f)?;
                }
            }
        }
    }
    Ok(())
}

fn strain_sq(e: &[f64; 3]) -> f64 {
    e[0] * e[0] + e[1] * e[1] + 0.5 * e[2] * e[2]
}

/// L₂ displacement error and H₁-semi (strain) error of `approx` against `exact`.
pub fn error_norms(
    domain: &DomainSpec,
    h: f64,
    opts: &NormOptions,
    mut approx: impl FnMut(&Point, Subdomain) -> Result<PointValues>,
    exact: impl Fn(&Point, Subdomain) -> PointValues,
) -> Result<ErrorNorms> {
    let (mut l2, mut h1, mut un, mut en) = (0.0, 0.0, 0.0, 0.0);
    for_each_quadrature_point(domain, h, opts, |x, w, s| {
        let a = approx(x, s)?;
        let e = exact(x, s);
        let du = [a.u[0] - e.u[0], a.u[1] - e.u[1]];
        let de = [a.strain[0] - e.strain[0], a.strain[1] - e.strain[1], a.strain[2] - e.strain[2]];
        l2 += w * (du[0] * du[0] + du[1] * du[1]);
        h1 += w * strain_sq(&de);
        un += w * (e.u[0] * e.u[0] + e.u[1] * e.u[1]);
        en += w * strain_sq(&e.strain);
        Ok(())
    })?;
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        h1: h1.sqrt(),
        u_norm: un.sqrt(),
        strain_norm: en.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::plate::PlateInclusionSpec;
    use crate::geometry::{CircleInclusion, Rect};
    use approx::assert_relative_eq;

    fn plate_domain(n: usize) -> DomainSpec {
        let inc = CircleInclusion::regular(Point::origin(), 1.0, n, 0.0).unwrap();
        DomainSpec::new_2d(Rect::new(Point::new(-2.0, -2.0), Point::new(2.0, 2.0)), vec![inc]).unwrap()
    }

    #[test]
    fn areas_and_moments_by_subdomain() {
        let d = plate_domain(64);
        let poly_area = d.subdomain_measure(Subdomain::Inclusion(0));
        let (mut a_in, mut a_out, mut m_in) = (0.0, 0.0, 0.0);
        for_each_quadrature_point(&d, 0.2, &NormOptions::default(), |x, w, s| {
            match s {
                Subdomain::Matrix => a_out += w,
                Subdomain::Inclusion(_) => {
                    a_in += w;
                    m_in += w * (x.x * x.x + x.y * x.y);
                }
            }
            Ok(())
        })
        .unwrap();
        assert_relative_eq!(a_in, poly_area, max_relative = 1e-12);
        assert_relative_eq!(a_out, 16.0 - poly_area, max_relative = 1e-11);
        // polar moment of a regular n-gon with circumradius 1
        let n = 64.0;
        let polar = n / 12.0 * (2.0 * std::f64::consts::PI / n).sin() * (2.0 + (2.0 * std::f64::consts::PI / n).cos());
        assert_relative_eq!(m_in, polar, max_relative = 1e-11);
    }

    #[test]
    fn exact_fed_back_gives_zero() {
        let d = plate_domain(48);
        let sol = PlateInclusionSpec::default().exact();
        let n = error_norms(&d, 0.2, &NormOptions::default(), |x, s| Ok(sol.eval(x, s)), |x, s| sol.eval(x, s)).unwrap();
        assert!(n.l2 <= 1e-12 && n.h1 <= 1e-12);
        assert!(n.u_norm > 0.0);
    }

    #[test]
    fn norms_invariant_under_finer_tiling() {
        let d = plate_domain(48);
        let sol = PlateInclusionSpec::default().exact();
        // a smooth perturbation standing in for a numerical solution
        let approx = |x: &Point, s: Subdomain| {
            let mut v = sol.eval(x, s);
            v.u[0] += 1e-3 * (x.x * 1.3).sin() * x.y.cos();
            v.strain[0] += 1e-3 * 1.3 * (x.x * 1.3).cos() * x.y.cos();
            Ok(v)
        };
        let a = error_norms(&d, 0.2, &NormOptions::default(), approx, |x, s| sol.eval(x, s)).unwrap();
        let fine = NormOptions { divisions: 6, ..Default::default() };
        let b = error_norms(&d, 0.2, &fine, approx, |x, s| sol.eval(x, s)).unwrap();
        assert_relative_eq!(a.l2, b.l2, max_relative = 1e-8);
        assert_relative_eq!(a.h1, b.h1, max_relative = 1e-8);
    }

    #[test]
    fn one_dimensional_segments() {
        let d = DomainSpec::new_1d(0.0, 3.0, vec![(0.77, 2.23)]).unwrap();
        let (mut a, mut b) = (0.0, 0.0);
        for_each_quadrature_point(&d, 0.1, &NormOptions::default(), |x, w, s| {
            match s {
                Subdomain::Matrix => a += w * x.x.powi(3),
                Subdomain::Inclusion(_) => b += w * x.x.powi(3),
            }
            Ok(())
        })
        .unwrap();
        let q = |lo: f64, hi: f64| (hi.powi(4) - lo.powi(4)) / 4.0;
        assert_relative_eq!(b, q(0.77, 2.23), max_relative = 1e-13);
        assert_relative_eq!(a, q(0.0, 0.77) + q(2.23, 3.0), max_relative = 1e-13);
    }
}
