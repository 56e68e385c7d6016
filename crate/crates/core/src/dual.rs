//! Sample-average dual of the worst-case risk over a Bayesian ambiguity set.
//!
//! For a fixed decision `x` the worst-case expected cost over all Q with
//! E_Π[KL(Q ‖ P_θ)] ≤ ε equals
//!
//! ```text
//! inf_{γ ≥ 0}  γ (ε − G) + γ ln E_{ξ ~ p(·|θ̄ₙ)}[exp(f(x, ξ) / γ)]
//! ```
//!
//! and the expectation is replaced by an average over `N` model samples. The
//! map γ ↦ objective is convex; it is searched on a log scale over
//! `[GAMMA_MIN, GAMMA_MAX]` with the γ = 0 and γ = ∞ limits handled explicitly.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::golden_section;

pub const GAMMA_MIN: f64 = 1e-8;
pub const GAMMA_MAX: f64 = 1e8;
/// Log-spaced points used to bracket the minimizing γ.
const GAMMA_BRACKET_POINTS: usize = 65;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    UserSet,
    EpsMin,
    EpsStar,
}

/// Tolerance ε together with the posterior gap G(τₙ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    pub epsilon: f64,
    pub gap: f64,
    pub provenance: Provenance,
}

impl AmbiguitySpec {
    /// Fails with [`Error::Infeasible`] when `epsilon < gap`.
    pub fn new(epsilon: f64, gap: f64, provenance: Provenance) -> Result<Self> {
        if !(gap >= 0.0) || !gap.is_finite() {
            return Err(Error::Domain(format!("gap must be finite and nonnegative, got {gap}")));
        }
        if !epsilon.is_finite() {
            return Err(Error::Input(format!("epsilon must be finite, got {epsilon}")));
        }
        if epsilon < gap {
            return Err(Error::Infeasible { epsilon, gap });
        }
        Ok(Self {
            epsilon,
            gap,
            provenance,
        })
    }

    pub fn user(epsilon: f64, gap: f64) -> Result<Self> {
        Self::new(epsilon, gap, Provenance::UserSet)
    }

    /// A plain KL ball (no posterior gap), as used per posterior draw.
    pub fn ball(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0, Provenance::UserSet)
    }

    /// ε − G.
    pub fn slack(&self) -> f64 {
        self.epsilon - self.gap
    }

    /// Strict feasibility of the center distribution; strong duality holds.
    pub fn strictly_feasible(&self) -> bool {
        self.epsilon > self.gap
    }
}

/// A cost f(x, ξ) with a declared convexity in the decision.
pub struct CostOracle<'a> {
    cost: Box<dyn Fn(f64, f64) -> f64 + Send + Sync + 'a>,
    convex_in_x: bool,
}

impl<'a> CostOracle<'a> {
    pub fn convex<F>(cost: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'a,
    {
        Self {
            cost: Box::new(cost),
            convex_in_x: true,
        }
    }

    pub fn declared<F>(cost: F, convex_in_x: bool) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'a,
    {
        Self {
            cost: Box::new(cost),
            convex_in_x,
        }
    }

    pub fn is_convex(&self) -> bool {
        self.convex_in_x
    }

    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        (self.cost)(x, xi)
    }

    pub fn eval_all(&self, x: f64, samples: &[f64]) -> Vec<f64> {
        samples.iter().map(|&xi| (self.cost)(x, xi)).collect()
    }
}

impl fmt::Debug for CostOracle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostOracle")
            .field("convex_in_x", &self.convex_in_x)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute tolerance on objective values for the γ search.
    pub inner: f64,
    /// Tolerance on the decision for the outer search.
    pub outer: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            inner: 1e-9,
            outer: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMin {
    /// Minimizing multiplier; `0` and `f64::INFINITY` denote the limit branches.
    pub gamma: f64,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub x_star: f64,
    pub gamma_star: f64,
    pub value: f64,
    pub iterations: usize,
    pub inner_tolerance: f64,
    pub outer_tolerance: f64,
    pub wall_time: f64,
}

fn check_values(fvals: &[f64]) -> Result<()> {
    if fvals.is_empty() {
        return Err(Error::Input("cost sample is empty".into()));
    }
    if let Some(v) = fvals.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("cost values must be finite, got {v}")));
    }
    Ok(())
}

fn max_of(fvals: &[f64]) -> f64 {
    fvals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mean_of(fvals: &[f64]) -> f64 {
    fvals.iter().sum::<f64>() / fvals.len() as f64
}

/// γ ln( (1/N) Σ exp(fᵢ/γ) ), with the γ → 0 limit (max) and γ → ∞ limit (mean).
pub fn entropic_risk(fvals: &[f64], gamma: f64) -> f64 {
    let max = max_of(fvals);
    if gamma == 0.0 {
        return max;
    }
    if gamma == f64::INFINITY {
        return mean_of(fvals);
    }
    let sum: f64 = fvals.iter().map(|&f| ((f - max) / gamma).exp()).sum();
    max + gamma * (sum / fvals.len() as f64).ln()
}

/// γ (ε − G) + γ ln( (1/N) Σ exp(fᵢ/γ) ).
///
/// `gamma = 0` returns the right limit `max fᵢ`; `gamma = ∞` returns the mean
/// when ε = G and +∞ otherwise.
pub fn dual_objective(fvals: &[f64], gamma: f64, amb: &AmbiguitySpec) -> Result<f64> {
    check_values(fvals)?;
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    Ok(objective_unchecked(fvals, gamma, amb.slack()))
}

fn objective_unchecked(fvals: &[f64], gamma: f64, slack: f64) -> f64 {
    if gamma == f64::INFINITY {
        return if slack > 0.0 {
            f64::INFINITY
        } else {
            mean_of(fvals)
        };
    }
    let penalty = if gamma == 0.0 { 0.0 } else { gamma * slack };
    penalty + entropic_risk(fvals, gamma)
}

/// Minimizes a convex function of γ ≥ 0 given its values in both limits.
///
/// The log-γ grid locates a bracket around the best point, which golden-section
/// search then refines. Convexity in γ makes the function unimodal in ln γ, so
/// the bracket contains the global minimizer.
pub(crate) fn minimize_convex_gamma<F>(
    objective: F,
    at_zero: f64,
    at_infinity: f64,
    tol: f64,
) -> Result<GammaMin>
where
    F: Fn(f64) -> f64,
{
    let (t_lo, t_hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    let step = (t_hi - t_lo) / (GAMMA_BRACKET_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GAMMA_BRACKET_POINTS)
        .map(|k| objective((t_lo + step * k as f64).exp()))
        .collect();
    let best_k = grid
        .iter()
        .enumerate()
        .fold(0, |best, (k, v)| if *v < grid[best] { k } else { best });
    let a = t_lo + step * best_k.saturating_sub(1) as f64;
    let b = t_lo + step * (best_k + 1).min(GAMMA_BRACKET_POINTS - 1) as f64;

    // Golden-section on ln γ to a width well below what the value tolerance needs.
    let width = (tol * 1e-1).clamp(1e-12, 1e-6);
    let refined = golden_section(|t| objective(t.exp()), a, b, width, MAX_ITER)?;
    let mut best = GammaMin {
        gamma: refined.x.exp(),
        value: refined.value,
        iterations: refined.iterations + GAMMA_BRACKET_POINTS,
    };
    if at_zero < best.value {
        best.gamma = 0.0;
        best.value = at_zero;
    }
    if at_infinity < best.value {
        best.gamma = f64::INFINITY;
        best.value = at_infinity;
    }
    Ok(best)
}

/// inf over γ ≥ 0 of [`dual_objective`].
pub fn minimize_gamma(fvals: &[f64], amb: &AmbiguitySpec, tol: f64) -> Result<GammaMin> {
    check_values(fvals)?;
    let slack = amb.slack();
    if slack < 0.0 {
        return Err(Error::Infeasible {
            epsilon: amb.epsilon,
            gap: amb.gap,
        });
    }
    let max = max_of(fvals);
    let min = fvals.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return Ok(GammaMin {
            gamma: 0.0,
            value: max,
            iterations: 0,
        });
    }
    if slack == 0.0 {
        // Decreasing in γ with limit equal to the sample mean.
        return Ok(GammaMin {
            gamma: f64::INFINITY,
            value: mean_of(fvals),
            iterations: 0,
        });
    }
    minimize_convex_gamma(
        |g| objective_unchecked(fvals, g, slack),
        max,
        f64::INFINITY,
        tol,
    )
}

/// Joint minimization over the decision interval and γ.
///
/// The decision search is golden-section over `x_bounds` (the value is convex in
/// `x` when the cost is), with [`minimize_gamma`] inside. Among near-ties the
/// smallest decision is returned.
pub fn solve_dro_bas(
    oracle: &CostOracle<'_>,
    samples: &[f64],
    amb: &AmbiguitySpec,
    x_bounds: (f64, f64),
    tol: Tolerances,
) -> Result<DualSolution> {
    if !oracle.is_convex() {
        return Err(Error::NonConvex);
    }
    if samples.is_empty() {
        return Err(Error::Input("no model samples supplied".into()));
    }
    let start = Instant::now();
    let mut failure = None;
    let outer = golden_section(
        |x| {
            let fvals = oracle.eval_all(x, samples);
            match minimize_gamma(&fvals, amb, tol.inner) {
                Ok(r) => r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        x_bounds.0,
        x_bounds.1,
        tol.outer,
        MAX_ITER,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let inner = minimize_gamma(&oracle.eval_all(outer.x, samples), amb, tol.inner)?;
    Ok(DualSolution {
        x_star: outer.x,
        gamma_star: inner.gamma,
        value: inner.value,
        iterations: outer.iterations,
        inner_tolerance: tol.inner,
        outer_tolerance: tol.outer,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// γε + (1/M) Σ_θ γ ln mean_j exp(f_θj / γ): the upper bound for general models,
/// with one row of cost values per posterior draw.
pub fn general_upper_bound(rows: &[Vec<f64>], gamma: f64, epsilon: f64) -> Result<f64> {
    check_rows(rows)?;
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    Ok(upper_bound_unchecked(rows, gamma, epsilon))
}

fn upper_bound_unchecked(rows: &[Vec<f64>], gamma: f64, epsilon: f64) -> f64 {
    if gamma == f64::INFINITY {
        return if epsilon > 0.0 {
            f64::INFINITY
        } else {
            rows.iter().map(|r| mean_of(r)).sum::<f64>() / rows.len() as f64
        };
    }
    let penalty = if gamma == 0.0 { 0.0 } else { gamma * epsilon };
    penalty + rows.iter().map(|r| entropic_risk(r, gamma)).sum::<f64>() / rows.len() as f64
}

pub(crate) fn check_rows(rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Input("need at least one parameter sample".into()));
    }
    rows.iter().try_for_each(|r| check_values(r))
}

/// Minimizes [`general_upper_bound`] over a single shared γ.
pub fn minimize_upper_bound(rows: &[Vec<f64>], epsilon: f64, tol: f64) -> Result<GammaMin> {
    check_rows(rows)?;
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let at_zero = upper_bound_unchecked(rows, 0.0, epsilon);
    let at_infinity = upper_bound_unchecked(rows, f64::INFINITY, epsilon);
    if rows.iter().flatten().all(|&v| v == rows[0][0]) {
        return Ok(GammaMin {
            gamma: 0.0,
            value: at_zero,
            iterations: 0,
        });
    }
    minimize_convex_gamma(
        |g| upper_bound_unchecked(rows, g, epsilon),
        at_zero,
        at_infinity,
        tol,
    )
}
