//! Bayesian DRO baseline: the posterior average of per-draw KL-ball worst cases.
//!
//! Each posterior draw θᵢ carries its own multiplier γᵢ. For a fixed decision the
//! objective is a sum of independent convex terms, so every γᵢ is found by
//! [`minimize_gamma`] with zero gap.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{dual_objective, minimize_gamma, AmbiguitySpec, CostOracle, Tolerances};
use crate::error::{Error, Result};
use crate::models::Likelihood;
use crate::scalar::golden_section;

const MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct BdroInstance {
    pub theta_samples: Vec<Likelihood>,
    /// Row `i` holds draws from p(· | θᵢ).
    pub xi_samples: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub x_bounds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdroSolution {
    pub x_star: f64,
    pub gammas: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub inner_tolerance: f64,
    pub outer_tolerance: f64,
    pub wall_time: f64,
}

impl BdroInstance {
    pub fn validate(&self) -> Result<()> {
        if self.xi_samples.is_empty() {
            return Err(Error::Input("BDRO needs at least one posterior draw".into()));
        }
        if self.theta_samples.len() != self.xi_samples.len() {
            return Err(Error::Input(format!(
                "{} parameter draws but {} sample rows",
                self.theta_samples.len(),
                self.xi_samples.len()
            )));
        }
        if self.xi_samples.iter().any(Vec::is_empty) {
            return Err(Error::Input("every posterior draw needs at least one sample".into()));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Domain(format!(
                "epsilon must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        let (lo, hi) = self.x_bounds;
        if !(lo <= hi) {
            return Err(Error::Input(format!("invalid decision interval [{lo}, {hi}]")));
        }
        Ok(())
    }

    fn ball(&self) -> AmbiguitySpec {
        AmbiguitySpec::ball(self.epsilon).expect("validated epsilon")
    }
}

/// (1/N_θ) Σᵢ [γᵢ ε + γᵢ ln mean_j exp(f(x, ξᵢⱼ)/γᵢ)].
pub fn bdro_objective(
    instance: &BdroInstance,
    oracle: &CostOracle<'_>,
    x: f64,
    gammas: &[f64],
) -> Result<f64> {
    instance.validate()?;
    if gammas.len() != instance.xi_samples.len() {
        return Err(Error::Input(format!(
            "expected {} multipliers, got {}",
            instance.xi_samples.len(),
            gammas.len()
        )));
    }
    let ball = instance.ball();
    let mut total = 0.0;
    for (row, &g) in instance.xi_samples.iter().zip(gammas) {
        total += dual_objective(&oracle.eval_all(x, row), g, &ball)?;
    }
    Ok(total / gammas.len() as f64)
}

/// Per-row optimal multipliers and the objective at decision `x`.
pub fn bdro_inner(
    instance: &BdroInstance,
    oracle: &CostOracle<'_>,
    x: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let ball = instance.ball();
    let rows: Vec<(f64, f64)> = instance
        .xi_samples
        .iter()
        .map(|row| minimize_gamma(&oracle.eval_all(x, row), &ball, tol).map(|r| (r.gamma, r.value)))
        .collect::<Result<_>>()?;
    let value = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    Ok((rows.into_iter().map(|r| r.0).collect(), value))
}

/// Golden-section over the decision with independent γᵢ searches inside.
pub fn solve_bdro(
    instance: &BdroInstance,
    oracle: &CostOracle<'_>,
    tol: Tolerances,
) -> Result<BdroSolution> {
    instance.validate()?;
    if !oracle.is_convex() {
        return Err(Error::NonConvex);
    }
    let start = Instant::now();
    let mut failure = None;
    let outer = golden_section(
        |x| match bdro_inner(instance, oracle, x, tol.inner) {
            Ok((_, v)) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        instance.x_bounds.0,
        instance.x_bounds.1,
        tol.outer,
        MAX_ITER,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (gammas, value) = bdro_inner(instance, oracle, outer.x, tol.inner)?;
    Ok(BdroSolution {
        x_star: outer.x,
        gammas,
        value,
        iterations: outer.iterations,
        inner_tolerance: tol.inner,
        outer_tolerance: tol.outer,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Same as [`bdro_inner`] with the row searches spread over the rayon pool.
pub fn bdro_inner_parallel(
    instance: &BdroInstance,
    oracle: &CostOracle<'_>,
    x: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let ball = instance.ball();
    let rows: Vec<(f64, f64)> = instance
        .xi_samples
        .par_iter()
        .map(|row| minimize_gamma(&oracle.eval_all(x, row), &ball, tol).map(|r| (r.gamma, r.value)))
        .collect::<Result<_>>()?;
    let value = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    Ok((rows.into_iter().map(|r| r.0).collect(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost() -> CostOracle<'static> {
        CostOracle::convex(|x, xi| (x - xi).max(0.0) + 2.0 * (xi - x).max(0.0))
    }

    fn instance(rows: Vec<Vec<f64>>, epsilon: f64) -> BdroInstance {
        BdroInstance {
            theta_samples: rows
                .iter()
                .map(|_| Likelihood::Normal {
                    mean: 0.0,
                    variance: 1.0,
                })
                .collect(),
            xi_samples: rows,
            epsilon,
            x_bounds: (0.0, 10.0),
        }
    }

    #[test]
    fn single_row_matches_dual() {
        let row = vec![1.0, 3.0, 4.5, 2.0];
        let inst = instance(vec![row.clone()], 0.3);
        let f = cost().eval_all(2.2, &row);
        let d = dual_objective(&f, 0.8, &AmbiguitySpec::ball(0.3).unwrap()).unwrap();
        assert!((bdro_objective(&inst, &cost(), 2.2, &[0.8]).unwrap() - d).abs() < 1e-14);
    }

    #[test]
    fn duplicated_rows_average_to_single() {
        let row = vec![1.0, 3.0, 4.5, 2.0];
        let one = instance(vec![row.clone()], 0.3);
        let two = instance(vec![row.clone(), row], 0.3);
        let a = bdro_objective(&one, &cost(), 2.0, &[0.6]).unwrap();
        let b = bdro_objective(&two, &cost(), 2.0, &[0.6, 0.6]).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn constant_cost() {
        let c = CostOracle::convex(|_, _| 4.0);
        let inst = instance(vec![vec![1.0, 2.0], vec![3.0, 4.0]], 0.5);
        let v = bdro_objective(&inst, &c, 1.0, &[1.0, 3.0]).unwrap();
        assert!((v - (4.0 + 0.5 * 2.0)).abs() < 1e-12);
        let s = solve_bdro(&inst, &c, Tolerances::default()).unwrap();
        assert_eq!(s.value, 4.0);
        assert_eq!(s.gammas, vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_errors() {
        let inst = instance(vec![vec![1.0], vec![2.0]], 0.1);
        assert!(bdro_objective(&inst, &cost(), 0.0, &[1.0]).is_err());
        let mut bad = inst.clone();
        bad.theta_samples.pop();
        assert!(bad.validate().is_err());
        let mut empty = inst;
        empty.xi_samples[1].clear();
        assert!(empty.validate().is_err());
    }

    #[test]
    fn parallel_inner_agrees() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..5).map(|j| (i * 5 + j) as f64 * 0.37 % 9.0).collect())
            .collect();
        let inst = instance(rows, 0.4);
        let a = bdro_inner(&inst, &cost(), 3.3, 1e-9).unwrap();
        let b = bdro_inner_parallel(&inst, &cost(), 3.3, 1e-9).unwrap();
        assert_eq!(a, b);
    }
}
