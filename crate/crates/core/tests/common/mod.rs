//! Property checks shared by the standalone property suite and the
//! acceptance run. Each check takes sampled inputs and fails with a message.

#![allow(dead_code)]

use std::sync::OnceLock;

use proptest::test_runner::{Config, TestCaseError, TestRunner};

use qce_core::bench::plate::{build_plate, PlateInclusionSpec};
use qce_core::bench::DiscretizationOptions;
use qce_core::discretize::EmbeddedDiscretization;
use qce_core::geometry::{Point, Subdomain};
use qce_core::integration::{build_tables, IntegrationOptions, IntegrationTables};
use qce_core::rk::{kernel_eval, RkEvaluator};

pub type Check = std::result::Result<(), TestCaseError>;

pub struct Fixture {
    pub d: EmbeddedDiscretization,
    pub tables: IntegrationTables,
}

/// Inclusion plate at h⁻ = 0.4 with recovery cells and a refined band.
pub fn plate_fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (_, d) = build_plate(&PlateInclusionSpec::default(), 0.4, 0.2, &DiscretizationOptions::default()).unwrap();
        let ev = RkEvaluator::new(&d.cloud, &d.domain);
        let tables = build_tables(&d, &ev, &IntegrationOptions::default()).unwrap();
        Fixture { d, tables }
    })
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Partition of unity, linear reproduction and gradient reproduction at a
/// point of the plate, in whichever subdomain contains it.
pub fn reproduction(x: f64, y: f64) -> Check {
    let f = plate_fixture();
    let p = Point::new(x, y);
    let Ok(s) = f.d.domain.subdomain_of(&p) else {
        return Err(TestCaseError::reject("on an interface"));
    };
    let ev = RkEvaluator::new(&f.d.cloud, &f.d.domain);
    let e = ev.shape(&p, s).map_err(|err| TestCaseError::fail(err.to_string()))?;
    let pos = |i: usize| f.d.cloud.nodes[i].pos;
    let s0: f64 = e.values.iter().sum();
    let sx: f64 = e.ids.iter().zip(&e.values).map(|(&i, v)| v * pos(i).x).sum();
    let sy: f64 = e.ids.iter().zip(&e.values).map(|(&i, v)| v * pos(i).y).sum();
    ensure((s0 - 1.0).abs() < 1e-9, || format!("partition of unity {s0} at {p}"))?;
    ensure((sx - x).abs() < 1e-9 && (sy - y).abs() < 1e-9, || format!("linear reproduction at {p}"))?;
    let gmax = e.grads.iter().map(|g| g[0].abs().max(g[1].abs())).fold(0.0, f64::max);
    for j in 0..2 {
        let g0: f64 = e.grads.iter().map(|g| g[j]).sum();
        let gx: f64 = e.ids.iter().zip(&e.grads).map(|(&i, g)| g[j] * pos(i).x).sum();
        let gy: f64 = e.ids.iter().zip(&e.grads).map(|(&i, g)| g[j] * pos(i).y).sum();
        let (ex, ey) = if j == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        ensure(g0.abs() <= 1e-10 * gmax, || format!("gradient sum {g0} at {p}"))?;
        ensure((gx - ex).abs() < 1e-9 && (gy - ey).abs() < 1e-9, || format!("gradient reproduction at {p}"))?;
    }
    Ok(())
}

/// The cubic B-spline is C²: the analytic derivative matches central
/// differences, and the differenced second derivative varies no faster than
/// the bound on the third derivative allows.
pub fn kernel_smoothness(z: f64) -> Check {
    let f = |z: f64| kernel_eval(z).unwrap();
    let d = 1e-6;
    let fd = (f(z + d).0 - f(z - d).0) / (2.0 * d);
    ensure((fd - f(z).1).abs() < 1e-8, || format!("first derivative at z = {z}"))?;
    let d2 = |z: f64| (f(z + 1e-5).1 - f(z - 1e-5).1) / 2e-5;
    let eta = 1e-4;
    // |K'''| ≤ 24 on each piece
    ensure((d2(z) - d2(z + eta)).abs() <= 24.0 * (eta + 4e-5) + 1e-8, || format!("second derivative jump at z = {z}"))?;
    ensure((f(z).0 - f(z + 1e-12).0).abs() < 1e-10, || format!("value jump at z = {z}"))
}

/// Smoothed gradients of one cell sum to zero and reproduce the gradient of
/// a linear field, both consequences of the closed boundary contour.
pub fn closed_contour(cell: usize) -> Check {
    let f = plate_fixture();
    let t = &f.tables.cells[cell % f.tables.cells.len()];
    let scale = t.grad.iter().map(|g| g[0].abs() + g[1].abs()).fold(0.0, f64::max);
    for j in 0..2 {
        let s: f64 = t.grad.iter().map(|g| g[j]).sum();
        ensure(s.abs() <= 1e-10 * scale, || format!("cell {}: contour sum {s}", t.cell))?;
        let sx: f64 = t.ids.iter().zip(&t.grad).map(|(&i, g)| g[j] * f.d.cloud.nodes[i].pos.x).sum();
        let expected = if j == 0 { 1.0 } else { 0.0 };
        ensure((sx - expected).abs() < 1e-9, || format!("cell {}: linear gradient {sx}", t.cell))?;
    }
    Ok(())
}

/// The NSNI second-derivative tables annihilate affine nodal fields.
pub fn nsni_annihilates_affine(cell: usize, a: f64, b: f64, c: f64) -> Check {
    let f = plate_fixture();
    let t = &f.tables.cells[cell % f.tables.cells.len()];
    let scale = t.nsni.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let field_scale = a.abs() + 2.0 * (b.abs() + c.abs());
    for i in 0..2 {
        for j in 0..2 {
            let s: f64 = t
                .ids
                .iter()
                .zip(&t.nsni)
                .map(|(&n, g)| {
                    let p = f.d.cloud.nodes[n].pos;
                    g[i][j] * (a + b * p.x + c * p.y)
                })
                .sum();
            ensure(s.abs() <= 1e-9 * scale.max(1.0) * field_scale.max(1.0), || {
                format!("cell {}: nsni ({i},{j}) = {s}", t.cell)
            })?;
        }
    }
    Ok(())
}

/// Visibility is symmetric in its two endpoints for both subdomains.
pub fn line_of_sight_symmetry(px: f64, py: f64, qx: f64, qy: f64) -> Check {
    let d = &plate_fixture().d.domain;
    let (p, q) = (Point::new(px, py), Point::new(qx, qy));
    for s in [Subdomain::Matrix, Subdomain::Inclusion(0)] {
        ensure(d.line_of_sight(&p, &q, s) == d.line_of_sight(&q, &p, s), || format!("{p} -> {q} in {s}"))?;
    }
    Ok(())
}

fn fmt<T: std::fmt::Debug>(r: std::result::Result<(), proptest::test_runner::TestError<T>>) -> std::result::Result<(), String> {
    r.map_err(|e| format!("{e:?}"))
}

/// Runs every property with `cases` samples; returns (name, outcome).
pub fn run_all(cases: u32) -> Vec<(&'static str, std::result::Result<(), String>)> {
    let cfg = || Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let cells = plate_fixture().tables.cells.len();
    vec![
        (
            "partition of unity and linear/gradient reproduction",
            fmt(TestRunner::new(cfg()).run(&(-2.0f64..2.0, -2.0f64..2.0), |(x, y)| reproduction(x, y))),
        ),
        (
            "kernel C2 continuity",
            fmt(TestRunner::new(cfg()).run(&(1e-4f64..1.3), kernel_smoothness)),
        ),
        (
            "closed-contour zero sum per cell",
            fmt(TestRunner::new(cfg()).run(&(0..cells), closed_contour)),
        ),
        (
            "NSNI annihilation of linear fields",
            fmt(TestRunner::new(cfg()).run(&(0..cells, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), |(k, a, b, c)| {
                nsni_annihilates_affine(k, a, b, c)
            })),
        ),
        (
            "line-of-sight symmetry",
            fmt(TestRunner::new(cfg()).run(&(-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), |(a, b, c, d)| {
                line_of_sight_symmetry(a, b, c, d)
            })),
        ),
    ]
}
