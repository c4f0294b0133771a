//! Versioned plain-text serialization of an embedded discretization.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the discretization bit for bit.

use std::io::{BufRead, Write};

use super::{CellOrigin, EmbeddedDiscretization, SmoothingCell};
use crate::error::{QceError, Result};
use crate::geometry::{
    BoundarySegment, CellShape, CircleInclusion, Dim, DomainSpec, Inclusion, OuterSide, Point,
    Polygon, Rect, SegmentTag, Subdomain, Vector,
};
use crate::rk::{Node, NodeCloud, NodeOrigin};

pub const FORMAT_HEADER: &str = "qce-discretization 1";

fn sub_code(s: Subdomain) -> i64 {
    match s {
        Subdomain::Matrix => -1,
        Subdomain::Inclusion(k) => k as i64,
    }
}

fn origin_name(o: NodeOrigin) -> &'static str {
    match o {
        NodeOrigin::Foreground => "foreground",
        NodeOrigin::Background => "background",
        NodeOrigin::Refined => "refined",
    }
}

fn tag_name(t: SegmentTag) -> String {
    match t {
        SegmentTag::Interface(k) => format!("interface:{k}"),
        SegmentTag::Outer(s) => format!("outer:{}", s.name()),
    }
}

pub fn write_discretization(d: &EmbeddedDiscretization, w: &mut impl Write) -> Result<()> {
    let r = d.domain.rect();
    writeln!(w, "{FORMAT_HEADER}")?;
    writeln!(w, "dim {}", d.dim().n())?;
    writeln!(w, "rect {} {} {} {}", r.lo.x, r.lo.y, r.hi.x, r.hi.y)?;
    writeln!(w, "h_background {}", d.h_background)?;
    write!(w, "h_interface {}", d.h_interface.len())?;
    for h in &d.h_interface {
        write!(w, " {h}")?;
    }
    writeln!(w)?;
    writeln!(w, "n_r {}", d.n_r)?;
    writeln!(w, "removed {} {}", d.removed_nodes, d.removed_cells)?;
    writeln!(w, "missing_area {}", d.missing_area)?;
    writeln!(w, "flags {} {}", u8::from(d.shared), u8::from(d.recovery))?;
    writeln!(w, "inclusions {}", d.domain.inclusions().len())?;
    for inc in d.domain.inclusions() {
        match inc {
            Inclusion::Interval { lo, hi } => writeln!(w, "interval {lo} {hi}")?,
            Inclusion::Circle(c) => {
                let ctr = c.center();
                write!(w, "circle {} {} {} {}", ctr.x, ctr.y, c.radius(), c.polyline().len())?;
                for p in c.polyline() {
                    write!(w, " {} {}", p.x, p.y)?;
                }
                writeln!(w)?;
            }
        }
    }
    writeln!(w, "nodes {}", d.cloud.len())?;
    for n in &d.cloud.nodes {
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            n.pos.x,
            n.pos.y,
            n.spacing,
            n.support,
            u8::from(n.matrix),
            n.inclusion.map_or(-1, |k| k as i64),
            u8::from(n.interface),
            origin_name(n.origin),
            u8::from(n.has_cell)
        )?;
    }
    writeln!(w, "cells {}", d.cells.len())?;
    for c in &d.cells {
        write!(
            w,
            "{} {} {} {} {}",
            c.owner,
            sub_code(c.subdomain),
            c.origin.name(),
            u8::from(c.conforming),
            c.level
        )?;
        match &c.shape {
            CellShape::Interval { lo, hi } => writeln!(w, " interval {lo} {hi}")?,
            CellShape::Polygon(p) => {
                write!(w, " polygon {}", p.len())?;
                for v in p.vertices() {
                    write!(w, " {} {}", v.x, v.y)?;
                }
                writeln!(w)?;
            }
        }
    }
    let segs: Vec<&BoundarySegment> =
        d.interface_segments.iter().chain(&d.outer_segments).collect();
    writeln!(w, "segments {}", segs.len())?;
    for s in segs {
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            s.a.x,
            s.a.y,
            s.b.x,
            s.b.y,
            s.normal.x,
            s.normal.y,
            tag_name(s.tag)
        )?;
    }
    Ok(())
}

struct Tokens<R: BufRead> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Tokens<R> {
    fn line(&mut self) -> Result<Vec<String>> {
        loop {
            self.line_no += 1;
            let l = self
                .lines
                .next()
                .ok_or_else(|| QceError::Parse(format!("unexpected end of file at line {}", self.line_no)))??;
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.split_whitespace().map(str::to_string).collect());
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let t = self.line()?;
        if t.first().map(String::as_str) != Some(key) {
            return Err(self.err(&format!("expected '{key}'")));
        }
        Ok(t[1..].to_vec())
    }

    fn err(&self, msg: &str) -> QceError {
        QceError::Parse(format!("line {}: {msg}", self.line_no))
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| QceError::Parse(format!("line {line}: cannot parse '{s}'")))
}

pub fn read_discretization(r: impl BufRead) -> Result<EmbeddedDiscretization> {
    let mut t = Tokens {
        lines: r.lines(),
        line_no: 0,
    };
    let header = t.line()?.join(" ");
    if header != FORMAT_HEADER {
        return Err(QceError::Parse(format!("unsupported header '{header}'")));
    }
    let f = |v: &[String], i: usize, ln: usize| -> Result<f64> {
        num(v.get(i).ok_or_else(|| QceError::Parse(format!("line {ln}: missing field")))?, ln)
    };
    let u = |v: &[String], i: usize, ln: usize| -> Result<usize> {
        num(v.get(i).ok_or_else(|| QceError::Parse(format!("line {ln}: missing field")))?, ln)
    };
    let dim = match u(&t.keyed("dim")?, 0, t.line_no)? {
        1 => Dim::One,
        2 => Dim::Two,
        other => return Err(t.err(&format!("bad dimension {other}"))),
    };
    let v = t.keyed("rect")?;
    let ln = t.line_no;
    let rect = Rect::new(
        Point::new(f(&v, 0, ln)?, f(&v, 1, ln)?),
        Point::new(f(&v, 2, ln)?, f(&v, 3, ln)?),
    );
    let h_background = f(&t.keyed("h_background")?, 0, t.line_no)?;
    let v = t.keyed("h_interface")?;
    let ln = t.line_no;
    let h_interface = (0..u(&v, 0, ln)?).map(|i| f(&v, i + 1, ln)).collect::<Result<_>>()?;
    let n_r = u(&t.keyed("n_r")?, 0, t.line_no)? as u32;
    let v = t.keyed("removed")?;
    let (removed_nodes, removed_cells) = (u(&v, 0, t.line_no)?, u(&v, 1, t.line_no)?);
    let missing_area = f(&t.keyed("missing_area")?, 0, t.line_no)?;
    let v = t.keyed("flags")?;
    let (shared, recovery) = (u(&v, 0, t.line_no)? == 1, u(&v, 1, t.line_no)? == 1);
    let n_inc = u(&t.keyed("inclusions")?, 0, t.line_no)?;
    let mut inclusions = Vec::with_capacity(n_inc);
    for _ in 0..n_inc {
        let v = t.line()?;
        let ln = t.line_no;
        match v.first().map(String::as_str) {
            Some("interval") => inclusions.push(Inclusion::Interval {
                lo: f(&v, 1, ln)?,
                hi: f(&v, 2, ln)?,
            }),
            Some("circle") => {
                let c = Point::new(f(&v, 1, ln)?, f(&v, 2, ln)?);
                let radius = f(&v, 3, ln)?;
                let n = u(&v, 4, ln)?;
                let poly = (0..n)
                    .map(|i| Ok(Point::new(f(&v, 5 + 2 * i, ln)?, f(&v, 6 + 2 * i, ln)?)))
                    .collect::<Result<Vec<_>>>()?;
                inclusions.push(Inclusion::Circle(CircleInclusion::new(c, radius, poly)?));
            }
            _ => return Err(t.err("expected 'interval' or 'circle'")),
        }
    }
    let domain = DomainSpec::new(dim, rect, inclusions)?;
    let n_nodes = u(&t.keyed("nodes")?, 0, t.line_no)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let v = t.line()?;
        let ln = t.line_no;
        let inc: i64 = num(&v.get(5).cloned().unwrap_or_default(), ln)?;
        nodes.push(Node {
            pos: Point::new(f(&v, 0, ln)?, f(&v, 1, ln)?),
            spacing: f(&v, 2, ln)?,
            support: f(&v, 3, ln)?,
            matrix: u(&v, 4, ln)? == 1,
            inclusion: (inc >= 0).then_some(inc as usize),
            interface: u(&v, 6, ln)? == 1,
            origin: match v.get(7).map(String::as_str) {
                Some("foreground") => NodeOrigin::Foreground,
                Some("background") => NodeOrigin::Background,
                Some("refined") => NodeOrigin::Refined,
                _ => return Err(t.err("bad node origin")),
            },
            has_cell: u(&v, 8, ln)? == 1,
        });
    }
    let n_cells = u(&t.keyed("cells")?, 0, t.line_no)?;
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let v = t.line()?;
        let ln = t.line_no;
        let owner = u(&v, 0, ln)?;
        if owner >= nodes.len() {
            return Err(t.err("cell owner out of range"));
        }
        let sc: i64 = num(&v.get(1).cloned().unwrap_or_default(), ln)?;
        let subdomain = if sc < 0 {
            Subdomain::Matrix
        } else {
            Subdomain::Inclusion(sc as usize)
        };
        let origin = match v.get(2).map(String::as_str) {
            Some("foreground") => CellOrigin::Foreground,
            Some("background") => CellOrigin::Background,
            Some("refined") => CellOrigin::Refined,
            Some("recovery") => CellOrigin::Recovery,
            _ => return Err(t.err("bad cell origin")),
        };
        let conforming = u(&v, 3, ln)? == 1;
        let level = u(&v, 4, ln)? as u32;
        let shape = match v.get(5).map(String::as_str) {
            Some("interval") => CellShape::Interval {
                lo: f(&v, 6, ln)?,
                hi: f(&v, 7, ln)?,
            },
            Some("polygon") => {
                let n = u(&v, 6, ln)?;
                let pts = (0..n)
                    .map(|i| Ok(Point::new(f(&v, 7 + 2 * i, ln)?, f(&v, 8 + 2 * i, ln)?)))
                    .collect::<Result<Vec<_>>>()?;
                CellShape::Polygon(Polygon::new(pts)?)
            }
            _ => return Err(t.err("bad cell shape")),
        };
        let pos = nodes[owner].pos;
        cells.push(SmoothingCell::new(owner, &pos, subdomain, shape, conforming, origin, level));
    }
    let n_seg = u(&t.keyed("segments")?, 0, t.line_no)?;
    let mut interface_segments = Vec::new();
    let mut outer_segments = Vec::new();
    for _ in 0..n_seg {
        let v = t.line()?;
        let ln = t.line_no;
        let tag = match v.get(6).and_then(|s| s.split_once(':')) {
            Some(("interface", k)) => SegmentTag::Interface(num(k, ln)?),
            Some(("outer", side)) => SegmentTag::Outer(
                *OuterSide::ALL
                    .iter()
                    .find(|s| s.name() == side)
                    .ok_or_else(|| t.err("bad side"))?,
            ),
            _ => return Err(t.err("bad segment tag")),
        };
        let s = BoundarySegment {
            a: Point::new(f(&v, 0, ln)?, f(&v, 1, ln)?),
            b: Point::new(f(&v, 2, ln)?, f(&v, 3, ln)?),
            normal: Vector::new(f(&v, 4, ln)?, f(&v, 5, ln)?),
            tag,
        };
        match tag {
            SegmentTag::Interface(_) => interface_segments.push(s),
            SegmentTag::Outer(_) => outer_segments.push(s),
        }
    }
    Ok(EmbeddedDiscretization {
        domain,
        cloud: NodeCloud { dim, nodes },
        cells,
        interface_segments,
        outer_segments,
        h_background,
        h_interface,
        n_r,
        removed_nodes,
        removed_cells,
        missing_area,
        shared,
        recovery,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::geometry::Rect;
    use crate::rk::KernelSpec;

    #[test]
    fn round_trip_is_exact() {
        let kernel = KernelSpec::default();
        let r = Rect::new(Point::new(-2.0, -2.0), Point::new(2.0, 2.0));
        let bg = generate_background(Dim::Two, r, 0.2).unwrap();
        let fg = generate_foreground(Point::new(0.1, 0.0), 1.0, 0.1, &kernel).unwrap();
        let d = embed(&bg, &[fg], &SubdivisionParams::default(), &kernel).unwrap();
        let d = add_volume_recovery_cells(share_interface_nodes(d)).unwrap();
        let mut buf = Vec::new();
        write_discretization(&d, &mut buf).unwrap();
        let back = read_discretization(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, d);
        let mut again = Vec::new();
        write_discretization(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn bad_header_rejected() {
        let r = read_discretization(std::io::Cursor::new("qce-discretization 9\n"));
        assert!(matches!(r, Err(QceError::Parse(_))));
    }
}
