//! Refinement studies with least-squares log-log rates.

use std::io::Write;
use std::time::Instant;

use crate::assembly::FieldEvaluator;
use crate::error::{QceError, Result};
use crate::geometry::Subdomain;
use crate::integration::IntegrationOptions;
use crate::rk::ShapeEval;

use super::bar::{build_bar_1d, Bar1DSpec};
use super::norms::{error_norms, ErrorNorms, NormOptions};
use super::plate::{build_plate, PlateInclusionSpec};
use super::{run_pipeline, DiscretizationOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub h: f64,
    pub nodes: usize,
    pub dofs: usize,
    pub norms: ErrorNorms,
    pub seconds: f64,
    /// Set when the level failed; norms are then meaningless.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub label: String,
    pub levels: Vec<LevelResult>,
    /// `None` with fewer than three successful levels.
    pub l2_rate: Option<f64>,
    pub h1_rate: Option<f64>,
}

/// Slope of the least-squares line through (log h, log e).
pub fn fit_rate(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

impl ErrorReport {
    pub fn from_levels(label: &str, levels: Vec<LevelResult>) -> Self {
        let ok: Vec<&LevelResult> = levels.iter().filter(|l| l.failure.is_none()).collect();
        let (l2_rate, h1_rate) = if ok.len() >= 3 {
            let h: Vec<f64> = ok.iter().map(|l| l.h).collect();
            let l2: Vec<f64> = ok.iter().map(|l| l.norms.l2).collect();
            let h1: Vec<f64> = ok.iter().map(|l| l.norms.h1).collect();
            (Some(fit_rate(&h, &l2)), Some(fit_rate(&h, &h1)))
        } else {
            (None, None)
        };
        ErrorReport {
            label: label.to_string(),
            levels,
            l2_rate,
            h1_rate,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.levels.iter().all(|l| l.failure.is_none())
    }

    pub const CSV_HEADER: &'static str = "h,nodes,dofs,l2,h1,l2_rel,h1_rel,status";

    /// One row per level, 17 significant digits. Timings are left out so
    /// that identical studies give identical files.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for l in &self.levels {
            writeln!(
                w,
                "{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                l.h,
                l.nodes,
                l.dofs,
                l.norms.l2,
                l.norms.h1,
                l.norms.l2_rel(),
                l.norms.h1_rel(),
                l.failure.as_deref().map_or("ok".to_string(), |f| format!("failed: {}", f.replace(',', ";")))
            )?;
        }
        Ok(())
    }

    pub fn write_rates_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "study,l2_rate,h1_rate")?;
        let f = |r: Option<f64>| r.map_or("nan".to_string(), |v| format!("{v:.16e}"));
        writeln!(w, "{},{},{}", self.label, f(self.l2_rate), f(self.h1_rate))
    }
}

/// Runs `level(h)` for every spacing; a failing level is recorded and the
/// study continues.
pub fn convergence_study(
    label: &str,
    spacings: &[f64],
    mut level: impl FnMut(f64) -> Result<LevelResult>,
) -> Result<ErrorReport> {
    if spacings.len() < 3 {
        return Err(QceError::InvalidArgument(format!(
            "a convergence study needs at least 3 levels, got {}",
            spacings.len()
        )));
    }
    let mut levels = Vec::new();
    for &h in spacings {
        let t0 = Instant::now();
        let r = level(h).unwrap_or_else(|e| {
            log::warn!("level h = {h} failed: {e}");
            LevelResult {
                h,
                nodes: 0,
                dofs: 0,
                norms: ErrorNorms::default(),
                seconds: t0.elapsed().as_secs_f64(),
                failure: Some(e.to_string()),
            }
        });
        log::info!("level h = {h}: {} nodes, {:.2} s", r.nodes, r.seconds);
        levels.push(r);
    }
    Ok(ErrorReport::from_levels(label, levels))
}

fn measure(eval: &FieldEvaluator, d: &crate::discretize::EmbeddedDiscretization, h: f64, opts: &NormOptions, exact: impl Fn(&crate::geometry::Point, Subdomain) -> crate::assembly::PointValues) -> Result<ErrorNorms> {
    let mut scratch = ShapeEval::default();
    error_norms(&d.domain, h, opts, |x, s| eval.eval_in(x, s, &mut scratch), exact)
}

/// One level of the composite bar with h⁺ = h⁻ / 2.
pub fn bar_level(spec: &Bar1DSpec, h: f64, disc: &DiscretizationOptions, integ: &IntegrationOptions, norms: &NormOptions) -> Result<LevelResult> {
    let t0 = Instant::now();
    let (p, d) = build_bar_1d(spec, h, h / 2.0, disc)?;
    let run = run_pipeline(&p, &d, integ)?;
    let ev = run.evaluator(&d);
    let n = measure(&ev, &d, h, norms, |x, s| spec.exact(x.x, Some(s)))?;
    Ok(LevelResult {
        h,
        nodes: d.cloud.len(),
        dofs: run.dofs,
        norms: n,
        seconds: t0.elapsed().as_secs_f64(),
        failure: None,
    })
}

/// One level of the inclusion plate with h⁺ = h⁻ / 2.
pub fn plate_level(spec: &PlateInclusionSpec, h: f64, disc: &DiscretizationOptions, integ: &IntegrationOptions, norms: &NormOptions) -> Result<LevelResult> {
    let t0 = Instant::now();
    let (p, d) = build_plate(spec, h, h / 2.0, disc)?;
    let run = run_pipeline(&p, &d, integ)?;
    let ev = run.evaluator(&d);
    let exact = spec.exact();
    let n = measure(&ev, &d, h, norms, |x, s| exact.eval(x, s))?;
    Ok(LevelResult {
        h,
        nodes: d.cloud.len(),
        dofs: run.dofs,
        norms: n,
        seconds: t0.elapsed().as_secs_f64(),
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rate_of_exact_power_law() {
        let h = [0.2, 0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powf(2.0)).collect();
        assert_relative_eq!(fit_rate(&h, &e), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn too_few_levels_rejected_and_failures_recorded() {
        assert!(convergence_study("x", &[0.1, 0.05], |_| unreachable!()).is_err());
        let r = convergence_study("x", &[0.1, 0.05, 0.025], |h| {
            if h < 0.03 {
                Err(QceError::Geometry("boom".into()))
            } else {
                Ok(LevelResult {
                    h,
                    nodes: 1,
                    dofs: 1,
                    norms: ErrorNorms { l2: h, h1: h, u_norm: 1.0, strain_norm: 1.0 },
                    seconds: 0.0,
                    failure: None,
                })
            }
        })
        .unwrap();
        assert!(!r.is_complete());
        assert!(r.l2_rate.is_none());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().nth(3).unwrap().ends_with("failed: geometry error: boom"), "{s}");
    }
}
