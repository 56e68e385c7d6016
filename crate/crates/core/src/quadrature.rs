//! Gauss–Hermite quadrature for expectations under a normal law.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Nodes and weights for ∫ g(x) e^{-x²} dx ≈ Σ wᵢ g(xᵢ).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the orthonormal Hermite polynomial found by Newton iteration.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Input("quadrature order must be at least 1".into()));
        }
        let n = order;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => {
                    let s = (2 * n + 1) as f64;
                    s.sqrt() - 1.855_75 * s.powf(-0.166_67)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut converged = false;
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                deriv = (2.0 * n as f64).sqrt() * p2;
                let step = p1 / deriv;
                z -= step;
                if step.abs() <= 1e-14 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence {
                    routine: "gauss-hermite node search",
                    iterations: 100,
                });
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (deriv * deriv);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    /// E[g(X)] for X ~ N(mean, variance).
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, mean: f64, variance: f64, g: F) -> f64 {
        let scale = (2.0 * variance).sqrt();
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(mean + scale * x))
            .sum();
        total / PI.sqrt()
    }
}
