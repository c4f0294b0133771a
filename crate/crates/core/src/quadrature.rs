//! Gauss-Legendre rules on intervals and collapsed-square rules on triangles.

use crate::geometry::Point;

/// `n`-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0, "Gauss rule needs at least one point");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess followed by Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule mapped to `[a, b]`.
pub fn gauss_interval(a: f64, b: f64, rule: &[(f64, f64)]) -> impl Iterator<Item = (f64, f64)> + '_ {
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.iter().map(move |&(x, w)| (m + h * x, h * w))
}

/// Collapsed-square (Duffy) rule on a triangle built from an `n`-point
/// Gauss rule; exact for polynomials of degree `2n - 2`.
pub fn triangle_rule(tri: &[Point; 3], rule: &[(f64, f64)]) -> Vec<(Point, f64)> {
    let [a, b, c] = *tri;
    let area2 = ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs();
    let mut out = Vec::with_capacity(rule.len() * rule.len());
    for &(xu, wu) in rule {
        let u = 0.5 * (xu + 1.0);
        for &(xv, wv) in rule {
            let v = 0.5 * (xv + 1.0);
            let p = a + (b - a) * u + (c - b) * (u * v);
            out.push((p, 0.25 * wu * wv * u * area2));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_integrates_monomials() {
        for n in 1..=12 {
            let r = gauss_legendre(n);
            for k in 0..2 * n {
                let s: f64 = r.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} k={k} {s} {exact}");
            }
        }
    }

    #[test]
    fn triangle_rule_degree_ten() {
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let q = triangle_rule(&tri, &gauss_legendre(6));
        // ∫ x^i y^j over the unit triangle = i! j! / (i + j + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for i in 0..=10u32 {
            for j in 0..=(10 - i) {
                let s: f64 = q.iter().map(|(p, w)| w * p.x.powi(i as i32) * p.y.powi(j as i32)).sum();
                let exact = fact(i) * fact(j) / fact(i + j + 2);
                assert_relative_eq!(s, exact, max_relative = 1e-12);
            }
        }
    }
}
