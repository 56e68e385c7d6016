//! Demand distributions for the benchmark: Gaussian or truncated normal.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

const MAX_REJECTIONS: usize = 1_000_000;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    Gaussian,
    TruncatedNormal,
}

/// How `(mu_star, sigma2_star)` are read for a truncated normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationParams {
    /// Mean and variance of the normal before truncation.
    Underlying,
    /// Mean and variance of the truncated law itself.
    Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub mu_star: f64,
    pub sigma2_star: f64,
    /// Support of the truncated normal; either end may be infinite.
    pub truncation: Option<(f64, f64)>,
    pub params: TruncationParams,
}

impl DgpSpec {
    pub fn gaussian(mu_star: f64, sigma2_star: f64) -> Self {
        Self {
            kind: DgpKind::Gaussian,
            mu_star,
            sigma2_star,
            truncation: None,
            params: TruncationParams::Underlying,
        }
    }

    pub fn truncated(mu_star: f64, sigma2_star: f64, lo: f64, hi: f64, params: TruncationParams) -> Self {
        Self {
            kind: DgpKind::TruncatedNormal,
            mu_star,
            sigma2_star,
            truncation: Some((lo, hi)),
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu_star.is_finite() {
            return Err(Error::Input(format!("mu_star must be finite, got {}", self.mu_star)));
        }
        if !(self.sigma2_star > 0.0) || !self.sigma2_star.is_finite() {
            return Err(Error::Domain(format!(
                "sigma2_star must be finite and positive, got {}",
                self.sigma2_star
            )));
        }
        match (self.kind, self.truncation) {
            (DgpKind::Gaussian, None) => Ok(()),
            (DgpKind::Gaussian, Some(_)) => {
                Err(Error::Input("a Gaussian DGP takes no truncation interval".into()))
            }
            (DgpKind::TruncatedNormal, None) => {
                Err(Error::Input("a truncated normal DGP needs a truncation interval".into()))
            }
            (DgpKind::TruncatedNormal, Some((lo, hi))) => {
                if lo.is_nan() || hi.is_nan() || !(lo < hi) || (lo.is_infinite() && hi.is_infinite()) {
                    Err(Error::Input(format!("invalid truncation interval [{lo}, {hi}]")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Resolves the spec into a sampler.
    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        match (self.kind, self.truncation) {
            (DgpKind::Gaussian, _) => Ok(Sampler {
                normal: Normal::new(self.mu_star, self.sigma2_star.sqrt()).expect("validated"),
                bounds: None,
            }),
            (DgpKind::TruncatedNormal, Some((lo, hi))) => {
                let (mean, sd) = match self.params {
                    TruncationParams::Underlying => (self.mu_star, self.sigma2_star.sqrt()),
                    TruncationParams::Moments => {
                        match_truncated_moments(self.mu_star, self.sigma2_star, lo, hi)?
                    }
                };
                Ok(Sampler {
                    normal: Normal::new(mean, sd).expect("positive scale"),
                    bounds: Some((lo, hi)),
                })
            }
            _ => unreachable!("validated"),
        }
    }
}

/// Draws from a normal, optionally restricted to an interval by rejection.
#[derive(Debug, Clone, Copy)]
pub struct Sampler {
    normal: Normal<f64>,
    bounds: Option<(f64, f64)>,
}

impl Sampler {
    /// Parameters of the (untruncated) normal that is sampled.
    pub fn underlying(&self) -> (f64, f64) {
        (self.normal.mean(), self.normal.std_dev().powi(2))
    }

    /// Training and test sets drawn from the `Train` and `Test` substreams of `seed`.
    pub fn replicate(&self, n: usize, m: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let train = self.draw(n, &mut substream(seed, Stream::Train, 0))?;
        let test = self.draw(m, &mut substream(seed, Stream::Test, 0))?;
        Ok((train, test))
    }

    pub fn draw<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        let Some((lo, hi)) = self.bounds else {
            return Ok(self.normal.sample_iter(rng).take(count).collect());
        };
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut attempts = 0;
            loop {
                let x = self.normal.sample(rng);
                if x >= lo && x <= hi {
                    out.push(x);
                    break;
                }
                attempts += 1;
                if attempts >= MAX_REJECTIONS {
                    return Err(Error::NoConvergence {
                        routine: "truncated normal rejection sampler",
                        iterations: attempts,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Training and test sets for one replicate, each from its own substream of `seed`.
pub fn generate_data(dgp: &DgpSpec, n: usize, m: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || m == 0 {
        return Err(Error::Input("training and test sizes must be at least 1".into()));
    }
    dgp.sampler()?.replicate(n, m, seed)
}

/// Upper-tail probability Q(z) = 1 − Φ(z).
fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// λ(a) − a with λ(a) = φ(a)/Q(a), the inverse Mills ratio.
fn mills_excess(a: f64) -> f64 {
    if a < 5.0 {
        return pdf(a) / upper_tail(a) - a;
    }
    // Continued fraction: λ(a) − a = 1 / (a + 2 / (a + 3 / (a + ...))).
    let mut tail = a;
    for k in (2..=60).rev() {
        tail = a + k as f64 / tail;
    }
    1.0 / tail
}

/// Mean and variance of N(0, 1) restricted to [a, ∞), as (mean, variance).
fn lower_truncated_std(a: f64) -> (f64, f64) {
    let d = mills_excess(a);
    let lambda = a + d;
    (lambda, 1.0 - lambda * d)
}

/// Mean and variance of N(mean, sd²) restricted to [lo, hi].
pub fn truncated_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    if hi == f64::INFINITY {
        let (m, v) = lower_truncated_std((lo - mean) / sd);
        return (mean + sd * m, sd * sd * v);
    }
    if lo == f64::NEG_INFINITY {
        let (m, v) = lower_truncated_std((mean - hi) / sd);
        return (mean - sd * m, sd * sd * v);
    }
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    // Reflect so that a > 0 whenever the interval sits in a tail, then scale
    // numerator and normalizer by φ(a) to avoid underflow.
    let (a, b, sign) = if a > 0.0 { (a, b, 1.0) } else { (-b, -a, -1.0) };
    if a > 0.0 {
        let ratio = (-(b - a) * (a + b) / 2.0).exp();
        let mills = |z: f64| 1.0 / (z + mills_excess(z));
        let z = mills(a) - ratio * mills(b);
        let m1 = (1.0 - ratio) / z;
        let var = 1.0 + (a - b * ratio) / z - m1 * m1;
        return (mean + sign * sd * m1, sd * sd * var);
    }
    let z = upper_tail(a) - upper_tail(b);
    let (pa, pb) = (pdf(a), pdf(b));
    let m1 = (pa - pb) / z;
    let var = 1.0 + (a * pa - b * pb) / z - m1 * m1;
    (mean + sign * sd * m1, sd * sd * var)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    // f increasing on [lo, hi]
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Underlying normal (mean, sd) whose restriction to [lo, hi] has the given
/// mean and variance.
pub fn match_truncated_moments(mean: f64, variance: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(mean > lo && mean < hi) {
        return Err(Error::Domain(format!(
            "target mean {mean} must lie strictly inside [{lo}, {hi}]"
        )));
    }
    let unattainable = || {
        Error::Domain(format!(
            "no truncated normal on [{lo}, {hi}] has mean {mean} and variance {variance}"
        ))
    };
    if lo.is_infinite() || hi.is_infinite() {
        // One-sided: the coefficient of variation about the finite end is below 1
        // and increases with the standardized truncation point.
        let reach = if hi.is_infinite() { mean - lo } else { hi - mean };
        let target_cv = variance.sqrt() / reach;
        let cv = |a: f64| {
            let (m, v) = lower_truncated_std(a);
            v.sqrt() / (m - a)
        };
        let (a_lo, a_hi) = (-30.0, 30.0);
        if !(target_cv > cv(a_lo) && target_cv < cv(a_hi)) {
            return Err(unattainable());
        }
        let a = bisect(cv, a_lo, a_hi, target_cv);
        let (m, _) = lower_truncated_std(a);
        let sd = reach / (m - a);
        let center = if hi.is_infinite() { lo - a * sd } else { hi + a * sd };
        return Ok((center, sd));
    }
    // Two-sided: for each scale pick the location matching the mean, then
    // bisect the scale on the resulting variance.
    let width = hi - lo;
    if variance >= (mean - lo) * (hi - mean) {
        return Err(unattainable());
    }
    let location_for = |sd: f64| {
        bisect(
            |c| truncated_moments(c, sd, lo, hi).0,
            lo - 50.0 * sd - 100.0 * sd * sd / width - width,
            hi + 50.0 * sd + 100.0 * sd * sd / width + width,
            mean,
        )
    };
    let variance_for = |sd: f64| truncated_moments(location_for(sd), sd, lo, hi).1;
    let (s_lo, s_hi) = (width * 1e-4, width * 1e2);
    if !(variance > variance_for(s_lo) && variance < variance_for(s_hi)) {
        return Err(unattainable());
    }
    let log_sd = bisect(|t| variance_for(t.exp()), s_lo.ln(), s_hi.ln(), variance);
    let sd = log_sd.exp();
    Ok((location_for(sd), sd))
}
