//! Gauss–Legendre quadrature with panel-doubling error control.
//!
//! The integrands that appear here (squared propagator kernels, products of
//! decaying exponentials with slow oscillation) are smooth, so fixed-order
//! Gauss rules on a refined panel mesh converge extremely fast; the panel
//! count doubles until two successive levels agree to the requested relative
//! tolerance.

use crate::error::{Result, SkramError};

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build the n-point rule. Roots of P_n by Newton iteration on the
    /// three-term recurrence, weights w_i = 2 / ((1 - x_i^2) P_n'(x_i)^2).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // symmetry: compute the non-negative half, mirror the rest
        for i in 0..n.div_ceil(2) {
            // Tricomi-style initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_deriv(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_deriv(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x; // ascending order
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrate f over [a, b] with a single panel of this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + hw * x);
        }
        acc * hw
    }

    /// Nodes/weights mapped to [a, b].
    pub fn scaled(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (c + hw * x, w * hw))
            .collect()
    }
}

/// (P_n(x), P_n'(x)) by the stable three-term recurrence.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
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
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let d = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate a smooth scalar integrand over [a, b] to relative tolerance by
/// doubling the number of 16-point Gauss panels until two levels agree.
pub fn integrate_to_tol<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    mut f: F,
    rel_tol: f64,
) -> Result<f64> {
    let rule = GaussLegendre::new(16);
    let mut panels = 1usize;
    let mut prev = panel_sum(&rule, a, b, panels, &mut f);
    for _ in 0..16 {
        panels *= 2;
        let cur = panel_sum(&rule, a, b, panels, &mut f);
        let scale = cur.abs().max(prev.abs()).max(1e-300);
        if (cur - prev).abs() <= rel_tol * scale {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SkramError::Numerics(format!(
        "panel quadrature failed to reach rel tol {rel_tol:.1e} on [{a}, {b}]"
    )))
}

fn panel_sum<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    panels: usize,
    f: &mut F,
) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        acc += rule.integrate(lo, lo + h, &mut *f);
    }
    acc
}

/// Vector-valued version: `f(x, out)` writes `dim` components; all components
/// share the panel mesh and the tolerance is enforced on each component with
/// a mixed absolute/relative criterion.
pub fn integrate_vec_to_tol<F: FnMut(f64, &mut [f64])>(
    a: f64,
    b: f64,
    dim: usize,
    mut f: F,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let rule = GaussLegendre::new(16);
    let mut panels = 1usize;
    let mut prev = panel_sum_vec(&rule, a, b, panels, dim, &mut f);
    for _ in 0..16 {
        panels *= 2;
        let cur = panel_sum_vec(&rule, a, b, panels, dim, &mut f);
        let norm: f64 = cur.iter().map(|x| x.abs()).fold(0.0_f64, f64::max).max(1e-300);
        let ok = cur
            .iter()
            .zip(&prev)
            .all(|(c, p)| (c - p).abs() <= rel_tol * norm.max(c.abs()));
        if ok {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SkramError::Numerics(format!(
        "vector panel quadrature failed to reach rel tol {rel_tol:.1e} on [{a}, {b}]"
    )))
}

fn panel_sum_vec<F: FnMut(f64, &mut [f64])>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    panels: usize,
    dim: usize,
    f: &mut F,
) -> Vec<f64> {
    let h = (b - a) / panels as f64;
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in rule.scaled(lo, lo + h) {
            f(x, &mut buf);
            for (ai, bi) in acc.iter_mut().zip(&buf) {
                *ai += w * bi;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_on_polynomials() {
        // 5-point rule integrates degree <= 9 exactly
        let rule = GaussLegendre::new(5);
        let val = rule.integrate(0.0, 1.0, |x| x.powi(9));
        assert!((val - 0.1).abs() < 1e-14);
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn panel_doubling_hits_tolerance() {
        // int_0^3 e^{-x} sin(7x) dx = (7 - e^{-3}(7 cos 21 + sin 21)) / 50
        let exact = (7.0 - (-3.0_f64).exp() * (7.0 * 21.0_f64.cos() + 21.0_f64.sin())) / 50.0;
        let got = integrate_to_tol(0.0, 3.0, |x| (-x).exp() * (7.0 * x).sin(), 1e-12).unwrap();
        assert!((got - exact).abs() <= 1e-10 * exact.abs());
    }

    #[test]
    fn vector_integrand_components_converge_together() {
        let got = integrate_vec_to_tol(
            0.0,
            2.0,
            2,
            |x, out| {
                out[0] = x.exp();
                out[1] = (3.0 * x).cos();
            },
            1e-12,
        )
        .unwrap();
        assert!((got[0] - (2.0_f64.exp() - 1.0)).abs() < 1e-10);
        assert!((got[1] - 6.0_f64.sin() / 3.0).abs() < 1e-12);
    }
}

