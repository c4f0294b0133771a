//! Problem construction from a configuration at a given background spacing.

use anyhow::Result;

use qce_core::assembly::{HeterogeneousProblem, PointValues};
use qce_core::bench::bar::build_bar_1d;
use qce_core::bench::micro::build_microstructure;
use qce_core::bench::plate::build_plate;
use qce_core::discretize::EmbeddedDiscretization;
use qce_core::geometry::{Point, Subdomain};

use crate::config::Config;

pub type Exact = Box<dyn Fn(&Point, Subdomain) -> PointValues>;

pub fn build(cfg: &Config, h: f64) -> Result<(HeterogeneousProblem, EmbeddedDiscretization)> {
    let opts = cfg.discretization.options()?;
    let h_plus = cfg.discretization.interface_ratio * h;
    let (mut p, d) = if let Some(bar) = cfg.bar() {
        build_bar_1d(&bar, h, h_plus, &opts)?
    } else if let Some(plate) = cfg.plate()? {
        build_plate(&plate, h, h_plus, &opts)?
    } else if let Some(micro) = cfg.microstructure()? {
        build_microstructure(&micro, h, h_plus, &opts)?
    } else {
        unreachable!("every problem kind has a builder")
    };
    p.alpha = cfg.formulation.alpha;
    p.beta = Some(cfg.formulation.beta_multiplier * p.materials.matrix.e / h);
    Ok((p, d))
}

/// Closed-form reference, where one exists.
pub fn exact(cfg: &Config) -> Result<Option<Exact>> {
    if let Some(bar) = cfg.bar() {
        return Ok(Some(Box::new(move |x, s| bar.exact(x.x, Some(s)))));
    }
    if let Some(plate) = cfg.plate()? {
        let sol = plate.exact();
        return Ok(Some(Box::new(move |x, s| sol.eval(x, s))));
    }
    Ok(None)
}
