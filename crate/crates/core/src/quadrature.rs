//! Quadrature on reference simplices.
//!
//! Rules are collapsed (Duffy) tensor products of Gauss–Legendre rules on
//! `[0, 1]`; a rule built for degree `q` integrates every polynomial of total
//! degree `≤ q` exactly over `{x ≥ 0, Σx ≤ 1}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_m
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=m {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature rule on the reference `dim`-simplex.
#[derive(Clone, Debug)]
pub struct SimplexRule {
    pub dim: usize,
    pub degree: u32,
    /// Points in reference coordinates (each of length `dim`).
    pub points: Vec<Vec<f64>>,
    /// Weights summing to `1 / dim!`.
    pub weights: Vec<f64>,
}

impl SimplexRule {
    pub fn new(dim: usize, degree: u32) -> Self {
        if dim == 0 {
            return Self {
                dim,
                degree,
                points: vec![Vec::new()],
                weights: vec![1.0],
            };
        }
        let m = (degree as usize + dim).div_ceil(2).max(1);
        let (gx, gw) = gauss_legendre(m);
        let nodes: Vec<f64> = gx.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let w01: Vec<f64> = gw.iter().map(|w| 0.5 * w).collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; dim];
        loop {
            // collapsed coordinates u ∈ [0,1]^dim
            let mut x = vec![0.0; dim];
            let mut scale = 1.0;
            let mut w = 1.0;
            for d in 0..dim {
                let u = nodes[idx[d]];
                x[d] = scale * u;
                w *= w01[idx[d]];
                // Jacobian factor (1 - u_d)^(dim - d - 1)
                w *= (1.0 - u).powi((dim - d - 1) as i32);
                scale *= 1.0 - u;
            }
            points.push(x);
            weights.push(w);
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == dim {
                    return Self {
                        dim,
                        degree,
                        points,
                        weights,
                    };
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Shared rule cache keyed by `(dim, degree)`.
pub fn simplex_rule(dim: usize, degree: u32) -> Arc<SimplexRule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<SimplexRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry((dim, degree))
        .or_insert_with(|| Arc::new(SimplexRule::new(dim, degree)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyform::{exponents_upto, monomial_simplex_integral};

    #[test]
    fn gauss_legendre_weights() {
        for m in 1..12 {
            let (x, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // exact for x^(2m-2)
            let p = 2 * m - 2;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
            assert!((approx - 2.0 / (p as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_on_monomials() {
        for dim in 1..=3 {
            for degree in 0..=10u32 {
                let rule = SimplexRule::new(dim, degree);
                for exps in exponents_upto(dim, degree) {
                    let exact = crate::rational_to_f64(&monomial_simplex_integral(&exps));
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p.iter().zip(&exps).map(|(x, e)| x.powi(*e as i32)).product::<f64>())
                        .sum();
                    assert!((exact - approx).abs() < 1e-14, "dim {dim} degree {degree} {exps:?}");
                }
            }
        }
    }
}
