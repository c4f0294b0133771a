//! Nodal field tables (CSV) and legacy ASCII VTK point clouds.
//!
//! A node shared by several subdomains appears once per subdomain, since its
//! strain and stress differ across the interface.

use std::io::Write;

use crate::assembly::RecoveredFields;
use crate::discretize::EmbeddedDiscretization;
use crate::error::Result;
use crate::geometry::{Point, Subdomain};
use crate::rk::ShapeEval;

use super::RunResult;

/// Field values of one node in one subdomain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodalRecord {
    pub node: usize,
    pub subdomain: Subdomain,
    pub pos: Point,
    /// Interpolated displacement u^h(x_I), not the raw coefficient.
    pub u: [f64; 2],
    pub strain: [f64; 3],
    pub stress: [f64; 3],
}

fn subdomain_code(s: Subdomain) -> i64 {
    match s {
        Subdomain::Matrix => 0,
        Subdomain::Inclusion(k) => k as i64 + 1,
    }
}

/// Records in node order, matrix first for shared nodes.
pub fn nodal_records(d: &EmbeddedDiscretization, run: &RunResult) -> Result<Vec<NodalRecord>> {
    let ev = run.evaluator(d);
    let fields: &RecoveredFields = &run.fields;
    let subs = d.domain.subdomains();
    let mut scratch = ShapeEval::default();
    let mut out = Vec::new();
    for (i, node) in d.cloud.nodes.iter().enumerate() {
        for &s in subs.iter().filter(|&&s| node.belongs(s)) {
            let v = ev.eval_in(&node.pos, s, &mut scratch)?;
            out.push(NodalRecord {
                node: i,
                subdomain: s,
                pos: node.pos,
                u: v.u,
                strain: fields.nodal_strain(s, i),
                stress: fields.nodal_stress(s, i),
            });
        }
    }
    Ok(out)
}

pub const FIELDS_CSV_HEADER: &str = "node,subdomain,x,y,ux,uy,exx,eyy,gxy,sxx,syy,sxy";

pub fn write_fields_csv(records: &[NodalRecord], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{FIELDS_CSV_HEADER}")?;
    for r in records {
        write!(w, "{},{},{:.16e},{:.16e}", r.node, subdomain_code(r.subdomain), r.pos.x, r.pos.y)?;
        for v in r.u.iter().chain(&r.strain).chain(&r.stress) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Unstructured grid of VTK_VERTEX cells with displacement, strain, stress
/// and subdomain id as point data.
pub fn write_fields_vtk(records: &[NodalRecord], title: &str, w: &mut impl Write) -> std::io::Result<()> {
    let n = records.len();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for r in records {
        writeln!(w, "{:.16e} {:.16e} 0", r.pos.x, r.pos.y)?;
    }
    writeln!(w, "CELLS {n} {}", 2 * n)?;
    for i in 0..n {
        writeln!(w, "1 {i}")?;
    }
    writeln!(w, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(w, "1")?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "VECTORS displacement double")?;
    for r in records {
        writeln!(w, "{:.16e} {:.16e} 0", r.u[0], r.u[1])?;
    }
    for (name, pick) in [("strain", 0usize), ("stress", 1)] {
        writeln!(w, "SCALARS {name} double 3")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for r in records {
            let v = if pick == 0 { r.strain } else { r.stress };
            writeln!(w, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2])?;
        }
    }
    writeln!(w, "SCALARS subdomain int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for r in records {
        writeln!(w, "{}", subdomain_code(r.subdomain))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::bar::{build_bar_1d, Bar1DSpec};
    use crate::bench::{run_pipeline, DiscretizationOptions};
    use crate::integration::IntegrationOptions;

    fn records() -> Vec<NodalRecord> {
        let spec = Bar1DSpec::nonconforming();
        let (p, d) = build_bar_1d(&spec, 0.1, 0.05, &DiscretizationOptions::default()).unwrap();
        let run = run_pipeline(&p, &d, &IntegrationOptions::default()).unwrap();
        nodal_records(&d, &run).unwrap()
    }

    #[test]
    fn shared_nodes_appear_per_side_with_continuous_displacement() {
        let r = records();
        let shared: Vec<_> = r.iter().filter(|a| r.iter().filter(|b| b.node == a.node).count() == 2).collect();
        assert_eq!(shared.len(), 4);
        for pair in shared.chunks(2) {
            assert!((pair[0].u[0] - pair[1].u[0]).abs() < 1e-12);
            // patch test: strain jumps by the modulus ratio, stress does not
            assert!((pair[0].strain[0] / pair[1].strain[0] - 100.0).abs() < 1e-6);
            assert!((pair[0].stress[0] - pair[1].stress[0]).abs() < 1e-8 * pair[0].stress[0].abs());
        }
    }

    #[test]
    fn csv_and_vtk_are_well_formed() {
        let r = records();
        let mut csv = Vec::new();
        write_fields_csv(&r, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), r.len() + 1);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 12));

        let mut vtk = Vec::new();
        write_fields_vtk(&r, "bar", &mut vtk).unwrap();
        let vtk = String::from_utf8(vtk).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0\nbar\nASCII\n"));
        assert!(vtk.contains(&format!("POINTS {} double", r.len())));
        assert!(vtk.contains(&format!("CELL_TYPES {}", r.len())));
        // header lines plus POINTS, CELLS, CELL_TYPES and four data blocks
        assert_eq!(vtk.lines().count(), 4 + 3 * (r.len() + 1) + 1 + (r.len() + 1) + 3 * (r.len() + 2));
    }
}
