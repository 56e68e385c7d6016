//! Numerical verification suites: the expected-log-likelihood identity, the
//! expected-KL decomposition, the γ search against a dense grid, the general
//! upper bound, and the digamma recurrence.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dual::{
    dual_objective, minimize_gamma, minimize_upper_bound, AmbiguitySpec, GAMMA_MAX, GAMMA_MIN,
};
use crate::error::Result;
use crate::models::{Hyper, Likelihood, ModelSpec, PosteriorState};
use crate::newsvendor::newsvendor_cost;
use crate::rng::{substream, Stream};
use crate::special::digamma;

/// Deliberate defects used to confirm that a suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Uses ψ(α) − ln α instead of ln α − ψ(α) for the exponential-gamma gap.
    ExpGammaGapSign,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub quick: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl VerifyOptions {
    fn mc_samples(&self) -> usize {
        if self.quick {
            50_000
        } else {
            1_000_000
        }
    }

    fn z_limit(&self) -> f64 {
        if self.quick {
            5.0
        } else {
            4.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Worst observed statistic (error, relative error or z-score).
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckReport {
    fn new(name: impl Into<String>, worst: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: worst <= threshold,
            worst,
            threshold,
            detail,
        }
    }
}

/// A random posterior of the given family.
pub fn random_posterior<R: Rng + ?Sized>(model: ModelSpec, rng: &mut R) -> PosteriorState {
    let hyper = match model {
        ModelSpec::GaussKnownVar { .. } => Hyper::Normal {
            mean: rng.random_range(-10.0..10.0),
            variance: rng.random_range(0.05..5.0),
        },
        ModelSpec::NormalGamma => Hyper::NormalGamma {
            mean: rng.random_range(-10.0..10.0),
            kappa: rng.random_range(0.5..40.0),
            alpha: rng.random_range(0.8..40.0),
            beta: rng.random_range(0.5..60.0),
        },
        ModelSpec::ExpGamma => Hyper::Gamma {
            alpha: rng.random_range(0.8..40.0),
            beta: rng.random_range(0.5..40.0),
        },
    };
    PosteriorState {
        model,
        hyper,
        n: rng.random_range(0..100),
    }
}

fn random_outcome<R: Rng + ?Sized>(post: &PosteriorState, rng: &mut R) -> f64 {
    match post.theta_bar() {
        Likelihood::Normal { mean, variance } => mean + variance.sqrt() * rng.random_range(-3.0..3.0),
        Likelihood::Exponential { rate } => rng.random_range(0.0..4.0) / rate,
    }
}

fn random_q<R: Rng + ?Sized>(post: &PosteriorState, rng: &mut R) -> Likelihood {
    match (post.model, post.theta_bar()) {
        (ModelSpec::GaussKnownVar { variance }, Likelihood::Normal { mean, .. }) => Likelihood::Normal {
            mean: mean + rng.random_range(-2.0..2.0),
            variance: variance * rng.random_range(0.3..3.0),
        },
        (_, Likelihood::Normal { mean, variance }) => Likelihood::Normal {
            mean: mean + variance.sqrt() * rng.random_range(-2.0..2.0),
            variance: variance * rng.random_range(0.3..3.0),
        },
        (_, Likelihood::Exponential { rate }) => Likelihood::Exponential {
            rate: rate * rng.random_range(0.3..3.0),
        },
    }
}

pub const FAMILIES: [ModelSpec; 3] = [
    ModelSpec::GaussKnownVar { variance: 2.0 },
    ModelSpec::NormalGamma,
    ModelSpec::ExpGamma,
];

fn family_rng(opts: &VerifyOptions, family: usize, purpose: u64) -> ChaCha8Rng {
    substream(opts.seed, Stream::Verify, (purpose << 8) | family as u64)
}

/// ψ(z + 1) − ψ(z) − 1/z on a log-spaced grid over [1e-3, 1e6].
pub fn check_digamma_recurrence() -> Result<CheckReport> {
    let mut worst = 0.0f64;
    for k in 0..=90 {
        let z = 10f64.powf(-3.0 + k as f64 / 10.0);
        let scale = 1.0f64.max(1.0 / z).max(z.ln().abs());
        let r = (digamma(z + 1.0)? - digamma(z)? - 1.0 / z).abs() / scale;
        worst = worst.max(r);
    }
    Ok(CheckReport::new(
        "digamma recurrence",
        worst,
        1e-13,
        "max |psi(z+1) - psi(z) - 1/z| (scaled) over 91 points".into(),
    ))
}

/// Expected log-likelihood identity for `posteriors` random posteriors and
/// `points` outcomes each, one report per family.
pub fn check_identity(opts: &VerifyOptions, posteriors: usize, points: usize) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for (f, &model) in FAMILIES.iter().enumerate() {
        let mut rng = family_rng(opts, f, 1);
        let mut worst = 0.0f64;
        for _ in 0..posteriors {
            let post = random_posterior(model, &mut rng);
            let gap = match (model, opts.fault) {
                (ModelSpec::ExpGamma, Some(Fault::ExpGammaGapSign)) => -post.gap(),
                _ => post.gap(),
            };
            for _ in 0..points {
                let xi = random_outcome(&post, &mut rng);
                let budget = match model {
                    ModelSpec::GaussKnownVar { .. } => 64,
                    _ => opts.mc_samples(),
                };
                let est = post.identity_residual_with_gap(xi, budget, gap, &mut rng)?;
                let stat = match model {
                    ModelSpec::GaussKnownVar { .. } => est.value.abs(),
                    _ => est.z_score(0.0),
                };
                worst = worst.max(stat);
            }
        }
        let (threshold, unit) = match model {
            ModelSpec::GaussKnownVar { .. } => (1e-8, "absolute residual, 64-node quadrature"),
            _ => (opts.z_limit(), "standard errors"),
        };
        reports.push(CheckReport::new(
            format!("identity residual [{}]", model.name()),
            worst,
            threshold,
            format!("{posteriors} posteriors x {points} outcomes; worst in {unit}"),
        ));
    }
    Ok(reports)
}

/// E_Π[KL(Q ‖ P_θ)] against KL(Q ‖ P_θ̄ₙ) + G(τₙ) for `count` random Q per family.
pub fn check_decomposition(opts: &VerifyOptions, count: usize) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for (f, &model) in FAMILIES.iter().enumerate() {
        let mut rng = family_rng(opts, f, 2);
        let mut worst = 0.0f64;
        for _ in 0..count {
            let post = random_posterior(model, &mut rng);
            let q = random_q(&post, &mut rng);
            let est = post.expected_kl(&q, opts.mc_samples(), &mut rng)?;
            let closed = q.kl(&post.theta_bar())? + post.gap();
            worst = worst.max(est.z_score(closed));
        }
        reports.push(CheckReport::new(
            format!("expected-KL decomposition [{}]", model.name()),
            worst,
            opts.z_limit(),
            format!("{count} random Q; worst deviation in standard errors"),
        ));
    }
    Ok(reports)
}

/// Dense log-spaced γ grid including the γ = 0 limit.
pub fn dense_gamma_grid_min(fvals: &[f64], amb: &AmbiguitySpec, points: usize) -> Result<f64> {
    let (lo, hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    let mut best = dual_objective(fvals, 0.0, amb)?;
    for k in 0..points {
        let g = (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp();
        best = best.min(dual_objective(fvals, g, amb)?);
    }
    Ok(best)
}

/// Random cost vector of length 5..=200 and a slack in (0, 3).
pub fn random_gamma_instance<R: Rng + ?Sized>(rng: &mut R) -> (Vec<f64>, AmbiguitySpec) {
    let n = rng.random_range(5..=200);
    let scale = 10f64.powf(rng.random_range(-1.0..2.0));
    let fvals = (0..n).map(|_| scale * rng.random_range(0.0..1.0f64).powi(2)).collect();
    let gap = rng.random_range(0.0..0.5);
    let amb = AmbiguitySpec::user(gap + rng.random_range(0.01..3.0), gap).expect("epsilon above gap");
    (fvals, amb)
}

/// `minimize_gamma` against a 10⁴-point log grid on `count` random instances.
pub fn check_gamma_oracle(opts: &VerifyOptions, count: usize) -> Result<CheckReport> {
    let mut rng = substream(opts.seed, Stream::Verify, 3 << 8);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let (fvals, amb) = random_gamma_instance(&mut rng);
        let solved = minimize_gamma(&fvals, &amb, 1e-9)?;
        let grid = dense_gamma_grid_min(&fvals, &amb, 10_000)?;
        worst = worst.max((solved.value - grid).abs() / grid.abs().max(1e-12));
    }
    Ok(CheckReport::new(
        "gamma search vs dense grid",
        worst,
        1e-6,
        format!("{count} random instances; worst relative value error"),
    ))
}

/// The general-model bound evaluated with posterior draws is no smaller than the
/// exact reformulation evaluated at the center, up to Monte Carlo error.
pub fn check_upper_bound(opts: &VerifyOptions, count: usize) -> Result<CheckReport> {
    let mut rng = substream(opts.seed, Stream::Verify, 4 << 8);
    let (n_theta, n_xi, n_center) = if opts.quick {
        (100, 100, 10_000)
    } else {
        (300, 300, 90_000)
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let data: Vec<f64> = (0..20).map(|_| 25.0 + 10.0 * rng.random_range(-1.7..1.7)).collect();
        let post = ModelSpec::NormalGamma.update_posterior(
            &Hyper::NormalGamma {
                mean: 0.0,
                kappa: 1.0,
                alpha: 1.0,
                beta: 1.0,
            },
            &data,
        )?;
        let x = rng.random_range(15.0..35.0);
        let epsilon = post.gap() + rng.random_range(0.05..2.0);
        let cost = |xi: f64| newsvendor_cost(x, xi, 1.0, 2.0);

        let center: Vec<f64> = post.sample_center(n_center, &mut rng).into_iter().map(cost).collect();
        let exact = minimize_gamma(&center, &AmbiguitySpec::user(epsilon, post.gap())?, 1e-9)?;

        let rows: Vec<Vec<f64>> = post
            .sample_params(n_theta, &mut rng)
            .iter()
            .map(|t| t.sample(n_xi, &mut rng).into_iter().map(cost).collect())
            .collect();
        let bound = minimize_upper_bound(&rows, epsilon, 1e-9)?;

        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let pooled: Vec<f64> = rows.iter().flatten().copied().collect();
        let se = (sd(&center).powi(2) / n_center as f64 + sd(&pooled).powi(2) / pooled.len() as f64).sqrt();
        // Positive statistic means the bound fell below the exact value.
        worst = worst.max((exact.value - bound.value) / se);
    }
    Ok(CheckReport::new(
        "general upper bound dominates exact dual",
        worst,
        opts.z_limit(),
        format!("{count} newsvendor instances; worst shortfall in standard errors"),
    ))
}

/// Every suite with the budgets selected by `opts`.
pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    let mut out = vec![check_digamma_recurrence()?];
    let (posteriors, q_count, gamma_count, ub_count) = if opts.quick {
        (5, 5, 20, 3)
    } else {
        (20, 10, 100, 10)
    };
    out.extend(check_identity(opts, posteriors, 5)?);
    out.extend(check_decomposition(opts, q_count)?);
    out.push(check_gamma_oracle(opts, gamma_count)?);
    out.push(check_upper_bound(opts, ub_count)?);
    Ok(out)
}
