//! Conjugate Bayesian inference for three exponential-family likelihoods.
//!
//! | likelihood            | posterior    | center θ̄ₙ          | G(τₙ)                         |
//! |-----------------------|--------------|--------------------|-------------------------------|
//! | N(ξ | μ, σ²), σ² known | N(μₙ, σₙ²)   | (μₙ, σ²)           | σₙ² / (2σ²)                   |
//! | N(ξ | μ, λ⁻¹)          | NG(μₙ,κₙ,αₙ,βₙ) | (μₙ, βₙ/αₙ)     | ½ (1/κₙ + ln αₙ − ψ(αₙ))      |
//! | Exp(ξ | θ)            | Ga(αₙ, βₙ)   | αₙ/βₙ              | ln αₙ − ψ(αₙ)                 |
//!
//! For each family the expected log-likelihood under the posterior equals the
//! log-likelihood at θ̄ₙ minus G(τₙ). This makes the posterior-expected KL
//! divergence from any Q equal to KL(Q ‖ P_θ̄ₙ) + G(τₙ), and G(τₙ) is the
//! smallest radius for which the Bayesian ambiguity set is non-empty.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::special::digamma_unchecked;

/// Which conjugate family, with any fixed constants of the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Gaussian likelihood with known variance and a Gaussian prior on the mean.
    GaussKnownVar { variance: f64 },
    /// Gaussian likelihood with unknown mean and precision, normal-gamma prior.
    NormalGamma,
    /// Exponential likelihood (rate parametrised) with a gamma prior.
    ExpGamma,
}

/// Hyperparameters of a prior or posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Hyper {
    Normal {
        mean: f64,
        variance: f64,
    },
    NormalGamma {
        mean: f64,
        kappa: f64,
        alpha: f64,
        beta: f64,
    },
    /// Shape `alpha`, rate `beta`.
    Gamma {
        alpha: f64,
        beta: f64,
    },
}

pub type PriorHyper = Hyper;

/// Parameters θ of a single likelihood member p(ξ | θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Likelihood {
    Normal { mean: f64, variance: f64 },
    Exponential { rate: f64 },
}

/// The center parameter θ̄ₙ.
pub type CenterParams = Likelihood;

/// True data-generating parameters for the well-specified case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrueParams {
    Mean { mean: f64 },
    MeanPrecision { mean: f64, precision: f64 },
    Rate { rate: f64 },
}

/// Posterior hyperparameters τₙ after `n` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub model: ModelSpec,
    pub hyper: Hyper,
    pub n: usize,
}

/// Monte Carlo (or quadrature) estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// |value − target| measured in standard errors; infinite if the error is zero and
    /// the values differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.value - target).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn from_samples(values: impl Iterator<Item = f64>) -> Self {
        // Welford
        let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            count += 1;
            let d = v - mean;
            mean += d / count as f64;
            m2 += d * (v - mean);
        }
        let var = if count > 1 { m2 / (count - 1) as f64 } else { 0.0 };
        Self {
            value: mean,
            std_error: (var / count as f64).sqrt(),
            samples: count,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and positive, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be finite, got {v}")))
    }
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::GaussKnownVar { .. } => "gauss-known-var",
            ModelSpec::NormalGamma => "normal-gamma",
            ModelSpec::ExpGamma => "exp-gamma",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::GaussKnownVar { variance } => positive("known variance", variance),
            _ => Ok(()),
        }
    }

    /// Checks that `hyper` has the shape this family expects and valid values.
    pub fn check_hyper(&self, hyper: &Hyper) -> Result<()> {
        match (self, *hyper) {
            (ModelSpec::GaussKnownVar { .. }, Hyper::Normal { mean, variance }) => {
                finite("prior mean", mean)?;
                positive("prior variance", variance)
            }
            (
                ModelSpec::NormalGamma,
                Hyper::NormalGamma {
                    mean,
                    kappa,
                    alpha,
                    beta,
                },
            ) => {
                finite("prior mean", mean)?;
                positive("kappa", kappa)?;
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            (ModelSpec::ExpGamma, Hyper::Gamma { alpha, beta }) => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            (spec, hyper) => Err(Error::Input(format!(
                "hyperparameters {hyper:?} do not belong to the {} family",
                spec.name()
            ))),
        }
    }

    /// Batch conjugate update. An empty batch returns the prior unchanged.
    pub fn update_posterior(&self, prior: &Hyper, data: &[f64]) -> Result<PosteriorState> {
        self.validate()?;
        self.check_hyper(prior)?;
        for &x in data {
            finite("observation", x)?;
            if matches!(self, ModelSpec::ExpGamma) && x <= 0.0 {
                return Err(Error::Domain(format!(
                    "exponential likelihood requires positive observations, got {x}"
                )));
            }
        }
        let n = data.len();
        if n == 0 {
            return Ok(PosteriorState {
                model: *self,
                hyper: *prior,
                n,
            });
        }
        let nf = n as f64;
        let sample_mean = data.iter().sum::<f64>() / nf;
        let hyper = match (*self, *prior) {
            (ModelSpec::GaussKnownVar { variance }, Hyper::Normal { mean, variance: v0 }) => {
                let denom = nf * v0 + variance;
                Hyper::Normal {
                    mean: variance / denom * mean + nf * v0 / denom * sample_mean,
                    variance: 1.0 / (1.0 / v0 + nf / variance),
                }
            }
            (
                ModelSpec::NormalGamma,
                Hyper::NormalGamma {
                    mean,
                    kappa,
                    alpha,
                    beta,
                },
            ) => {
                let scatter: f64 = data.iter().map(|x| (x - sample_mean).powi(2)).sum();
                Hyper::NormalGamma {
                    mean: (kappa * mean + nf * sample_mean) / (kappa + nf),
                    kappa: kappa + nf,
                    alpha: alpha + nf / 2.0,
                    beta: beta
                        + 0.5 * scatter
                        + kappa * nf * (sample_mean - mean).powi(2) / (2.0 * (kappa + nf)),
                }
            }
            (ModelSpec::ExpGamma, Hyper::Gamma { alpha, beta }) => Hyper::Gamma {
                alpha: alpha + nf,
                beta: beta + nf * sample_mean,
            },
            _ => unreachable!("checked by check_hyper"),
        };
        Ok(PosteriorState {
            model: *self,
            hyper,
            n,
        })
    }
}

impl PosteriorState {
    /// Center parameter θ̄ₙ.
    pub fn theta_bar(&self) -> CenterParams {
        match (self.model, self.hyper) {
            (ModelSpec::GaussKnownVar { variance }, Hyper::Normal { mean, .. }) => {
                Likelihood::Normal { mean, variance }
            }
            (
                ModelSpec::NormalGamma,
                Hyper::NormalGamma {
                    mean, alpha, beta, ..
                },
            ) => Likelihood::Normal {
                mean,
                variance: beta / alpha,
            },
            (ModelSpec::ExpGamma, Hyper::Gamma { alpha, beta }) => Likelihood::Exponential {
                rate: alpha / beta,
            },
            _ => unreachable!("posterior shape is fixed by its family"),
        }
    }

    /// G(τₙ), the gap between the posterior-expected KL divergence and the KL
    /// divergence to the center distribution. Always nonnegative.
    pub fn gap(&self) -> f64 {
        match (self.model, self.hyper) {
            (ModelSpec::GaussKnownVar { variance }, Hyper::Normal { variance: vn, .. }) => {
                vn / (2.0 * variance)
            }
            (ModelSpec::NormalGamma, Hyper::NormalGamma { kappa, alpha, .. }) => {
                0.5 * (1.0 / kappa + alpha.ln() - digamma_unchecked(alpha))
            }
            (ModelSpec::ExpGamma, Hyper::Gamma { alpha, .. }) => {
                alpha.ln() - digamma_unchecked(alpha)
            }
            _ => unreachable!("posterior shape is fixed by its family"),
        }
    }

    /// Smallest tolerance for which the ambiguity set is non-empty.
    pub fn epsilon_min(&self) -> f64 {
        self.gap()
    }

    /// Radius that makes the ambiguity set contain the true distribution:
    /// KL(P* ‖ P_θ̄ₙ) + G(τₙ).
    pub fn epsilon_star(&self, truth: &TrueParams) -> Result<f64> {
        let truth = self.truth_likelihood(truth)?;
        Ok(truth.kl(&self.theta_bar())? + self.gap())
    }

    /// `epsilon_star` with the truth replaced by estimates from `data`.
    pub fn epsilon_star_plugin(&self, data: &[f64]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Input("plug-in estimate needs at least one observation".into()));
        }
        for &x in data {
            finite("observation", x)?;
        }
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let truth = match self.model {
            ModelSpec::GaussKnownVar { .. } => TrueParams::Mean { mean },
            ModelSpec::NormalGamma => {
                if data.len() < 2 {
                    return Err(Error::Domain(
                        "precision estimate needs at least two observations".into(),
                    ));
                }
                let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                if var <= 0.0 {
                    return Err(Error::Domain(
                        "zero sample variance: precision estimate is undefined".into(),
                    ));
                }
                TrueParams::MeanPrecision {
                    mean,
                    precision: 1.0 / var,
                }
            }
            ModelSpec::ExpGamma => {
                if mean <= 0.0 {
                    return Err(Error::Domain(
                        "rate estimate needs a positive sample mean".into(),
                    ));
                }
                TrueParams::Rate { rate: 1.0 / mean }
            }
        };
        self.epsilon_star(&truth)
    }

    fn truth_likelihood(&self, truth: &TrueParams) -> Result<Likelihood> {
        match (self.model, *truth) {
            (ModelSpec::GaussKnownVar { variance }, TrueParams::Mean { mean }) => {
                finite("true mean", mean)?;
                Ok(Likelihood::Normal { mean, variance })
            }
            (ModelSpec::NormalGamma, TrueParams::MeanPrecision { mean, precision }) => {
                finite("true mean", mean)?;
                positive("true precision", precision)?;
                Ok(Likelihood::Normal {
                    mean,
                    variance: 1.0 / precision,
                })
            }
            (ModelSpec::ExpGamma, TrueParams::Rate { rate }) => {
                positive("true rate", rate)?;
                Ok(Likelihood::Exponential { rate })
            }
            (model, truth) => Err(Error::Domain(format!(
                "true parameters {truth:?} do not match the {} family",
                model.name()
            ))),
        }
    }

    /// `count` i.i.d. draws from p(ξ | θ̄ₙ).
    pub fn sample_center<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        self.theta_bar().sample(count, rng)
    }

    /// `count` draws of θ from the posterior.
    pub fn sample_params<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Likelihood> {
        match (self.model, self.hyper) {
            (ModelSpec::GaussKnownVar { variance }, Hyper::Normal { mean, variance: vn }) => {
                let normal = Normal::new(mean, vn.sqrt()).expect("validated posterior");
                (0..count)
                    .map(|_| Likelihood::Normal {
                        mean: normal.sample(rng),
                        variance,
                    })
                    .collect()
            }
            (
                ModelSpec::NormalGamma,
                Hyper::NormalGamma {
                    mean,
                    kappa,
                    alpha,
                    beta,
                },
            ) => {
                let gamma = Gamma::new(alpha, 1.0 / beta).expect("validated posterior");
                (0..count)
                    .map(|_| {
                        let precision: f64 = gamma.sample(rng);
                        let sd = (1.0 / (kappa * precision)).sqrt();
                        let mu = mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                        Likelihood::Normal {
                            mean: mu,
                            variance: 1.0 / precision,
                        }
                    })
                    .collect()
            }
            (ModelSpec::ExpGamma, Hyper::Gamma { alpha, beta }) => {
                let gamma = Gamma::new(alpha, 1.0 / beta).expect("validated posterior");
                (0..count)
                    .map(|_| Likelihood::Exponential {
                        rate: gamma.sample(rng),
                    })
                    .collect()
            }
            _ => unreachable!("posterior shape is fixed by its family"),
        }
    }

    /// E_Π[ln p(ξ | θ)] − (ln p(ξ | θ̄ₙ) − G(τₙ)).
    ///
    /// The known-variance Gaussian is integrated with `budget`-node Gauss–Hermite
    /// quadrature (standard error reported as zero); the other families use
    /// `budget` posterior draws.
    pub fn identity_residual<R: Rng + ?Sized>(
        &self,
        xi: f64,
        budget: usize,
        rng: &mut R,
    ) -> Result<Estimate> {
        self.identity_residual_with_gap(xi, budget, self.gap(), rng)
    }

    /// As [`identity_residual`](Self::identity_residual) with an explicit gap value.
    pub fn identity_residual_with_gap<R: Rng + ?Sized>(
        &self,
        xi: f64,
        budget: usize,
        gap: f64,
        rng: &mut R,
    ) -> Result<Estimate> {
        finite("xi", xi)?;
        if budget == 0 {
            return Err(Error::Input("budget must be at least 1".into()));
        }
        let center = self.theta_bar().ln_pdf(xi)? - gap;
        let expected = match (self.model, self.hyper) {
            (ModelSpec::GaussKnownVar { variance }, Hyper::Normal { mean, variance: vn }) => {
                let gh = GaussHermite::new(budget)?;
                let value = gh.expect_normal(mean, vn, |mu| {
                    -0.5 * (2.0 * PI * variance).ln() - (xi - mu).powi(2) / (2.0 * variance)
                });
                Estimate {
                    value,
                    std_error: 0.0,
                    samples: budget,
                }
            }
            _ => {
                if matches!(self.model, ModelSpec::ExpGamma) && xi < 0.0 {
                    return Err(Error::Domain(
                        "exponential density is zero for negative outcomes".into(),
                    ));
                }
                let draws = self.sample_params(budget, rng);
                Estimate::from_samples(
                    draws
                        .iter()
                        .map(|theta| theta.ln_pdf(xi).expect("sampled parameters are valid")),
                )
            }
        };
        Ok(Estimate {
            value: expected.value - center,
            ..expected
        })
    }

    /// Monte Carlo estimate of E_Π[KL(Q ‖ P_θ)] using the closed-form KL per draw.
    pub fn expected_kl<R: Rng + ?Sized>(
        &self,
        q: &Likelihood,
        samples: usize,
        rng: &mut R,
    ) -> Result<Estimate> {
        if samples == 0 {
            return Err(Error::Input("samples must be at least 1".into()));
        }
        q.kl(&self.theta_bar())?;
        let draws = self.sample_params(samples, rng);
        Ok(Estimate::from_samples(
            draws.iter().map(|theta| q.kl(theta).expect("same family")),
        ))
    }
}

impl Likelihood {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Likelihood::Normal { mean, variance } => {
                finite("mean", mean)?;
                positive("variance", variance)
            }
            Likelihood::Exponential { rate } => positive("rate", rate),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Likelihood::Normal { mean, .. } => mean,
            Likelihood::Exponential { rate } => 1.0 / rate,
        }
    }

    /// ln p(ξ | θ).
    pub fn ln_pdf(&self, xi: f64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            Likelihood::Normal { mean, variance } => {
                -0.5 * (2.0 * PI * variance).ln() - (xi - mean).powi(2) / (2.0 * variance)
            }
            Likelihood::Exponential { rate } => {
                if xi < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * xi
                }
            }
        })
    }

    /// KL(self ‖ other) between two members of the same family.
    pub fn kl(&self, other: &Likelihood) -> Result<f64> {
        self.validate()?;
        other.validate()?;
        match (*self, *other) {
            (
                Likelihood::Normal {
                    mean: m1,
                    variance: v1,
                },
                Likelihood::Normal {
                    mean: m2,
                    variance: v2,
                },
            ) => Ok(0.5 * (v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / (2.0 * v2) - 0.5),
            (Likelihood::Exponential { rate: r1 }, Likelihood::Exponential { rate: r2 }) => {
                Ok((r1 / r2).ln() + r2 / r1 - 1.0)
            }
            _ => Err(Error::Domain(
                "closed-form KL needs two members of the same family".into(),
            )),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            Likelihood::Normal { mean, variance } => {
                let d = Normal::new(mean, variance.sqrt()).expect("validated parameters");
                d.sample_iter(rng).take(count).collect()
            }
            Likelihood::Exponential { rate } => {
                let d = Exp::new(rate).expect("validated parameters");
                d.sample_iter(rng).take(count).collect()
            }
        }
    }
}
