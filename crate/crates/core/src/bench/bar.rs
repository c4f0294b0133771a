//! Composite bar: matrix | inclusion | matrix on [0, x₃], left end fixed.

use std::sync::Arc;

use crate::assembly::{HeterogeneousProblem, Material, MaterialPair, PointValues};
use crate::discretize::{generate_background, generate_foreground_1d, EmbeddedDiscretization};
use crate::error::{QceError, Result};
use crate::geometry::{Dim, OuterSide, Point, Rect, Subdomain};

use super::{build_embedded, DiscretizationOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarLoad {
    /// Prescribed displacement at the right end, no body force.
    EndDisplacement(f64),
    /// Piecewise half-sine body force with the given amplitudes on the
    /// three segments; right end traction free.
    Sinusoidal([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar1DSpec {
    pub lengths: [f64; 3],
    pub e_minus: f64,
    pub e_plus: f64,
    pub load: BarLoad,
}

impl Default for Bar1DSpec {
    fn default() -> Self {
        Bar1DSpec {
            lengths: [1.0, 1.0, 1.0],
            e_minus: 1e3,
            e_plus: 1e5,
            load: BarLoad::EndDisplacement(0.3),
        }
    }
}

impl Bar1DSpec {
    /// Segment lengths chosen so that the interfaces fall inside background
    /// cells at h⁻ = 0.1 and its halvings, with 30 foreground nodes at h⁺ = h⁻/2.
    pub fn nonconforming() -> Self {
        Bar1DSpec {
            lengths: [0.77, 1.46, 0.77],
            ..Default::default()
        }
    }

    /// Refinement geometry: the interfaces sit at one third or two thirds of
    /// a background cell on every level of the halving family h = 0.1 / 2^k,
    /// so no level lands on a degenerate cut.
    pub fn refinement() -> Self {
        let l1 = 0.7 + 0.2 / 3.0;
        Bar1DSpec {
            lengths: [l1, 3.0 - 2.0 * l1, l1],
            ..Default::default()
        }
    }

    pub fn sinusoidal(mut self) -> Self {
        self.load = BarLoad::Sinusoidal([10.0, 50.0, 10.0]);
        self
    }

    pub fn breakpoints(&self) -> [f64; 3] {
        let [l1, l2, l3] = self.lengths;
        [l1, l1 + l2, l1 + l2 + l3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.iter().any(|l| !(*l > 0.0)) || !(self.e_minus > 0.0) || !(self.e_plus > 0.0) {
            return Err(QceError::InvalidArgument(format!("invalid bar {self:?}")));
        }
        Ok(())
    }

    pub fn materials(&self) -> MaterialPair {
        MaterialPair {
            matrix: Material { e: self.e_minus, nu: 0.0 },
            inclusion: Material { e: self.e_plus, nu: 0.0 },
        }
    }

    /// Segment index (0, 1, 2) of x.
    fn segment(&self, x: f64) -> usize {
        let [x1, x2, _] = self.breakpoints();
        if x < x1 {
            0
        } else if x <= x2 {
            1
        } else {
            2
        }
    }

    fn modulus(&self, seg: usize) -> f64 {
        if seg == 1 {
            self.e_plus
        } else {
            self.e_minus
        }
    }

    /// Body force at x.
    pub fn body(&self, x: f64) -> f64 {
        match self.load {
            BarLoad::EndDisplacement(_) => 0.0,
            BarLoad::Sinusoidal(amp) => {
                let k = self.segment(x);
                let start = [0.0, self.breakpoints()[0], self.breakpoints()[1]][k];
                amp[k] * (std::f64::consts::PI * (x - start) / self.lengths[k]).sin()
            }
        }
    }

    /// Exact displacement, strain and stress; `side` picks the one-sided
    /// strain at an interface point.
    pub fn exact(&self, x: f64, side: Option<Subdomain>) -> PointValues {
        let [x1, x2, x3] = self.breakpoints();
        let seg = match side {
            Some(Subdomain::Inclusion(_)) => 1,
            Some(Subdomain::Matrix) if (x1..=x2).contains(&x) => {
                if x - x1 < x2 - x {
                    0
                } else {
                    2
                }
            }
            _ => self.segment(x),
        };
        let (u, sigma) = match self.load {
            BarLoad::EndDisplacement(g) => {
                let [l1, l2, l3] = self.lengths;
                let sigma = g / (l1 / self.e_minus + l2 / self.e_plus + l3 / self.e_minus);
                let u = match self.segment(x) {
                    0 => sigma * x / self.e_minus,
                    1 => sigma * (l1 / self.e_minus + (x - x1) / self.e_plus),
                    _ => sigma * (l1 / self.e_minus + l2 / self.e_plus + (x - x2) / self.e_minus),
                };
                let _ = x3;
                (u, sigma)
            }
            BarLoad::Sinusoidal(amp) => self.sinusoidal_exact(x, amp),
        };
        let e = self.modulus(seg);
        PointValues {
            u: [u, 0.0],
            strain: [sigma / e, 0.0, 0.0],
            stress: [sigma, 0.0, 0.0],
        }
    }

    /// σ(x) = ∫ₓ^{x₃} b, u(x) = ∫₀ˣ σ/E.
    fn sinusoidal_exact(&self, x: f64, amp: [f64; 3]) -> (f64, f64) {
        use std::f64::consts::PI;
        let bp = self.breakpoints();
        let starts = [0.0, bp[0], bp[1]];
        let full: Vec<f64> = (0..3).map(|k| 2.0 * amp[k] * self.lengths[k] / PI).collect();
        let after = |k: usize| -> f64 { full[k + 1..].iter().sum() };
        // stress inside segment k at local coordinate s
        let sigma_at = |k: usize, s: f64| {
            let th = PI * s / self.lengths[k];
            amp[k] * self.lengths[k] / PI * (th.cos() + 1.0) + after(k)
        };
        // ∫₀ˢ σ within segment k
        let int_sigma = |k: usize, s: f64| {
            let l = self.lengths[k];
            let th = PI * s / l;
            amp[k] * l / PI * (l / PI * th.sin() + s) + after(k) * s
        };
        let k = self.segment(x);
        let mut u = 0.0;
        for m in 0..k {
            u += int_sigma(m, self.lengths[m]) / self.modulus(m);
        }
        let s = x - starts[k];
        u += int_sigma(k, s) / self.modulus(k);
        (u, sigma_at(k, s))
    }
}

/// Problem data and embedded discretization of the bar.
pub fn build_bar_1d(
    spec: &Bar1DSpec,
    h_minus: f64,
    h_plus: f64,
    opts: &DiscretizationOptions,
) -> Result<(HeterogeneousProblem, EmbeddedDiscretization)> {
    spec.validate()?;
    let [x1, x2, x3] = spec.breakpoints();
    let bg = generate_background(Dim::One, Rect::interval(0.0, x3), h_minus)?;
    let n_fg = ((x2 - x1) / h_plus).round() as usize + 1;
    let fg = generate_foreground_1d(x1, x2, n_fg, &opts.kernel)?;
    let d = build_embedded(&bg, &[fg], opts)?;
    let mut p = HeterogeneousProblem::new(spec.materials());
    let s = *spec;
    match spec.load {
        BarLoad::EndDisplacement(g) => {
            p.dirichlet = vec![OuterSide::Left, OuterSide::Right];
            let mid = 0.5 * x3;
            p.g = Arc::new(move |x: &Point| [if x.x > mid { g } else { 0.0 }, 0.0]);
        }
        BarLoad::Sinusoidal(_) => {
            p.dirichlet = vec![OuterSide::Left];
            p.body_matrix = Arc::new(move |x: &Point| [s.body(x.x), 0.0]);
            p.body_inclusion = Arc::new(move |x: &Point| [s.body(x.x), 0.0]);
        }
    }
    Ok((p, d))
}
