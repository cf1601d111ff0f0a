//! Gauss–Legendre and collapsed triangle rules.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Quadrature on a triangle in barycentric form; weights sum to one so that
/// `∫_T f ≈ |T| Σ w_k f(x_k)`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub order: usize,
}

/// Collapsed (Duffy) Gauss rule exact for polynomials of degree `order`.
pub fn triangle_quadrature(order: usize) -> Result<TriangleRule> {
    if ![2, 4, 7].contains(&order) {
        return Err(Error::Quadrature(format!("unsupported triangle rule order {order}; use 2, 4 or 7")));
    }
    Ok(collapsed_rule((order + 2).div_ceil(2), (order + 1).div_ceil(2), order))
}

/// Tensor Gauss rule on the square collapsed onto vertex 1 of the triangle;
/// the Jacobian `(1 − u)` vanishes there, which cancels an inverse-distance
/// singularity at that vertex.
pub fn collapsed_rule(nu: usize, nv: usize, order: usize) -> TriangleRule {
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (a, wa) in xu.iter().zip(&wu) {
        let u = 0.5 * (a + 1.0);
        for (b, wb) in xv.iter().zip(&wv) {
            let v = 0.5 * (b + 1.0);
            let (x, y) = (u, (1.0 - u) * v);
            points.push([1.0 - x - y, x, y]);
            // ¼ from the interval maps, 2 normalizes the reference area ½
            weights.push(0.5 * wa * wb * (1.0 - u));
        }
    }
    TriangleRule { points, weights, order }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn triangle_rules_match_monomial_table() {
        for order in [2, 4, 7] {
            let rule = triangle_quadrature(order).unwrap();
            assert!(rule.weights.iter().all(|w| *w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| 0.5 * w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() < 1e-14, "order {order}: x^{a} y^{b}");
                }
            }
        }
        assert!(triangle_quadrature(3).is_err());
    }
}
