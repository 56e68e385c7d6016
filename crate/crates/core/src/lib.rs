//! Distributionally robust optimisation with Bayesian ambiguity sets.
//!
//! The worst-case expected cost over all distributions whose posterior-expected
//! KL divergence from the model family is at most ε reduces, for the conjugate
//! models in [`models`], to a single-stage problem over one multiplier γ
//! evaluated under the center distribution p(ξ | θ̄ₙ). [`dual`] solves that
//! problem by sample-average approximation, [`bdro`] implements the Bayesian
//! DRO baseline and [`newsvendor`] runs the out-of-sample benchmark.

pub mod bdro;
pub mod dual;
pub mod error;
pub mod models;
pub mod newsvendor;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod verify;

pub use bdro::{bdro_objective, solve_bdro, BdroInstance, BdroSolution};
pub use dual::{
    dual_objective, general_upper_bound, minimize_gamma, minimize_upper_bound, solve_dro_bas,
    AmbiguitySpec, CostOracle, DualSolution, GammaMin, Provenance, Tolerances,
};
pub use error::{Error, Result};
pub use models::{
    CenterParams, Estimate, Hyper, Likelihood, ModelSpec, PosteriorState, PriorHyper, TrueParams,
};
pub use special::digamma;
