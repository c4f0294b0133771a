//! TOML run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qce_core::assembly::{Material, MaterialPair};
use qce_core::bench::bar::{BarLoad, Bar1DSpec};
use qce_core::bench::micro::MicrostructureSpec;
use qce_core::bench::plate::PlateInclusionSpec;
use qce_core::bench::DiscretizationOptions;
use qce_core::discretize::SubdivisionParams;
use qce_core::geometry::{Point, Rect};
use qce_core::integration::IntegrationOptions;
use qce_core::rk::KernelSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: Problem,
    #[serde(default)]
    pub materials: Materials,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub formulation: Formulation,
    #[serde(default)]
    pub refinement: Refinement,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed of the inclusion sampler.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("qce-out")
}

fn default_seed() -> u64 {
    MicrostructureSpec::default().seed
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Problem {
    Bar {
        #[serde(default = "thirds")]
        lengths: [f64; 3],
        #[serde(default)]
        load: BarLoadKind,
        /// End displacement of the patch-test load.
        #[serde(default = "default_end_displacement")]
        g: f64,
        /// Half-sine amplitudes on the three segments.
        #[serde(default = "default_amplitudes")]
        amplitudes: [f64; 3],
    },
    Plate {
        #[serde(default = "default_side")]
        side: f64,
        #[serde(default = "default_diameter")]
        diameter: f64,
        #[serde(default = "default_traction")]
        traction: f64,
    },
    Microstructure {
        #[serde(default = "default_micro_size")]
        width: f64,
        #[serde(default = "default_micro_size")]
        height: f64,
        /// Explicit `[x, y, radius]` triples; sampled from the seed when empty.
        #[serde(default)]
        inclusions: Vec<[f64; 3]>,
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default = "default_radius_range")]
        radius_range: [f64; 2],
        #[serde(default = "default_gap")]
        gap: f64,
        /// Displacement of the top edge.
        #[serde(default = "default_micro_g")]
        g: [f64; 2],
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarLoadKind {
    #[default]
    EndDisplacement,
    Sinusoidal,
}

fn thirds() -> [f64; 3] {
    Bar1DSpec::default().lengths
}
fn default_end_displacement() -> f64 {
    0.3
}
fn default_amplitudes() -> [f64; 3] {
    match Bar1DSpec::default().sinusoidal().load {
        BarLoad::Sinusoidal(a) => a,
        BarLoad::EndDisplacement(_) => unreachable!(),
    }
}
fn default_side() -> f64 {
    PlateInclusionSpec::default().side
}
fn default_diameter() -> f64 {
    PlateInclusionSpec::default().diameter
}
fn default_traction() -> f64 {
    PlateInclusionSpec::default().traction
}
fn default_micro_size() -> f64 {
    MicrostructureSpec::default().rect.width()
}
fn default_count() -> usize {
    MicrostructureSpec::default().count
}
fn default_radius_range() -> [f64; 2] {
    let (a, b) = MicrostructureSpec::default().radius_range;
    [a, b]
}
fn default_gap() -> f64 {
    MicrostructureSpec::default().gap
}
fn default_micro_g() -> [f64; 2] {
    MicrostructureSpec::default().g
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Materials {
    pub e_matrix: f64,
    pub nu_matrix: f64,
    pub e_inclusion: f64,
    pub nu_inclusion: f64,
}

impl Default for Materials {
    fn default() -> Self {
        Materials {
            e_matrix: 1e3,
            nu_matrix: 0.3,
            e_inclusion: 1e5,
            nu_inclusion: 0.3,
        }
    }
}

impl Materials {
    pub fn pair(&self) -> Result<MaterialPair> {
        Ok(MaterialPair {
            matrix: Material::new(self.e_matrix, self.nu_matrix)?,
            inclusion: Material::new(self.e_inclusion, self.nu_inclusion)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discretization {
    /// Background spacing h⁻; a per-problem default when absent.
    pub h_background: Option<f64>,
    /// Foreground spacing h⁺ as a fraction of h⁻.
    pub interface_ratio: f64,
    /// Support size multiplier c.
    pub kernel_c: f64,
    /// Rounding threshold of the quadtree level.
    pub k: f64,
    /// Refinement band width in interface spacings.
    pub band: f64,
    pub recovery: bool,
}

impl Default for Discretization {
    fn default() -> Self {
        let s = SubdivisionParams::default();
        Discretization {
            h_background: None,
            interface_ratio: 0.5,
            kernel_c: KernelSpec::default().c,
            k: s.k,
            band: s.band,
            recovery: true,
        }
    }
}

impl Discretization {
    pub fn options(&self) -> Result<DiscretizationOptions> {
        if !(self.interface_ratio > 0.0) {
            bail!("interface_ratio must be positive, got {}", self.interface_ratio);
        }
        Ok(DiscretizationOptions {
            kernel: KernelSpec::new(self.kernel_c)?,
            subdivision: SubdivisionParams::new(self.k, self.band)?,
            recovery: self.recovery,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Formulation {
    /// Interface stress blend in [0, 1].
    pub alpha: f64,
    /// Nitsche penalty β = multiplier · E⁻ / h⁻ on the outer Dirichlet boundary.
    pub beta_multiplier: f64,
    /// Variationally consistent gradient correction.
    pub vc: bool,
}

impl Default for Formulation {
    fn default() -> Self {
        Formulation {
            alpha: 1.0,
            beta_multiplier: 100.0,
            vc: true,
        }
    }
}

impl Formulation {
    pub fn integration(&self) -> IntegrationOptions {
        IntegrationOptions {
            vc: self.vc,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Refinement {
    /// Background spacings of a convergence study; per-problem default when empty.
    pub spacings: Vec<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn h_background(&self) -> f64 {
        self.discretization.h_background.unwrap_or(match self.problem {
            Problem::Bar { .. } | Problem::Plate { .. } => 0.1,
            Problem::Microstructure { .. } => 0.175,
        })
    }

    pub fn spacings(&self) -> Vec<f64> {
        if !self.refinement.spacings.is_empty() {
            return self.refinement.spacings.clone();
        }
        match self.problem {
            Problem::Bar { .. } => vec![0.1, 0.05, 0.025, 0.0125],
            Problem::Plate { .. } => vec![0.2, 0.1, 0.05],
            Problem::Microstructure { .. } => vec![0.175, 0.0875, 0.04375],
        }
    }

    pub fn bar(&self) -> Option<Bar1DSpec> {
        match self.problem {
            Problem::Bar { lengths, load, g, amplitudes } => Some(Bar1DSpec {
                lengths,
                e_minus: self.materials.e_matrix,
                e_plus: self.materials.e_inclusion,
                load: match load {
                    BarLoadKind::EndDisplacement => BarLoad::EndDisplacement(g),
                    BarLoadKind::Sinusoidal => BarLoad::Sinusoidal(amplitudes),
                },
            }),
            _ => None,
        }
    }

    pub fn plate(&self) -> Result<Option<PlateInclusionSpec>> {
        Ok(match self.problem {
            Problem::Plate { side, diameter, traction } => Some(PlateInclusionSpec {
                side,
                diameter,
                traction,
                materials: self.materials.pair()?,
            }),
            _ => None,
        })
    }

    pub fn microstructure(&self) -> Result<Option<MicrostructureSpec>> {
        Ok(match &self.problem {
            Problem::Microstructure {
                width,
                height,
                inclusions,
                count,
                radius_range,
                gap,
                g,
            } => Some(MicrostructureSpec {
                rect: Rect::new(Point::new(0.0, 0.0), Point::new(*width, *height)),
                inclusions: inclusions.iter().map(|c| (Point::new(c[0], c[1]), c[2])).collect(),
                count: *count,
                radius_range: (radius_range[0], radius_range[1]),
                gap: *gap,
                seed: self.seed,
                g: *g,
                materials: self.materials.pair()?,
            }),
            _ => None,
        })
    }
}
