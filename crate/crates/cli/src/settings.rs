//! Run settings from command-line flags and an optional JSON file. Flags win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use drobas::newsvendor::{linspace, BenchConfig, DgpSpec, Method, TruncationParams};
use drobas::{Hyper, ModelSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    NormalGamma,
    GaussKnownVar,
    ExpGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpArg {
    Gaussian,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncArg {
    /// --mu-star and --sigma2-star describe the normal before truncation.
    Underlying,
    /// --mu-star and --sigma2-star are the moments of the truncated law.
    Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    DroBas,
    Bdro,
    Both,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::DroBas => vec![Method::DroBas],
            MethodArg::Bdro => vec![Method::Bdro],
            MethodArg::Both => vec![Method::DroBas, Method::Bdro],
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// JSON file holding any of the options below (snake_case keys)
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Likelihood variance for gauss-known-var
    #[arg(long)]
    pub known_variance: Option<f64>,
    /// Prior hyperparameters: mean,variance | mean,kappa,alpha,beta | alpha,beta
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub prior: Option<Vec<f64>>,

    #[arg(long, value_enum)]
    pub dgp: Option<DgpArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu_star: Option<f64>,
    #[arg(long)]
    pub sigma2_star: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub trunc_lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub trunc_hi: Option<f64>,
    #[arg(long, value_enum)]
    pub trunc_params: Option<TruncArg>,

    /// Holding cost per unit
    #[arg(long)]
    pub h: Option<f64>,
    /// Backorder cost per unit
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub m_test: Option<usize>,

    /// Ambiguity radius for a single solve
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sweep radii as LO:HI:COUNT or a comma-separated list
    #[arg(long)]
    pub epsilon_grid: Option<String>,
    /// Model-sample budget(s) N, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub budget: Option<Vec<usize>>,
    /// Posterior draws for BDRO (default √N)
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Likelihood draws per posterior draw for BDRO (default √N)
    #[arg(long)]
    pub n_xi: Option<usize>,
    /// Number of replicates J
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Replicate index used by a single solve
    #[arg(long)]
    pub replicate: Option<u64>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses every core)
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

macro_rules! fill {
    ($dst:ident, $src:ident, $($field:ident),+) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )+
    };
}

impl Settings {
    /// Fills options missing from the command line with those in `--config`.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_config(&path)?;
        fill!(
            self, file, model, known_variance, prior, dgp, mu_star, sigma2_star, trunc_lo, trunc_hi,
            trunc_params, h, b, x_min, x_max, n_train, m_test, epsilon, epsilon_grid, budget, n_theta,
            n_xi, seeds, replicate, seed, workers, method
        );
        Ok(self)
    }

    pub fn model(&self) -> Result<(ModelSpec, Hyper), CliError> {
        let model = self.model.unwrap_or(ModelArg::NormalGamma);
        let prior = self.prior.as_deref();
        let want = |n: usize, shape: &str| -> Result<(), CliError> {
            match prior {
                Some(p) if p.len() != n => Err(CliError::Usage(format!(
                    "--prior for {model:?} takes {n} values ({shape}), got {}",
                    p.len()
                ))),
                _ => Ok(()),
            }
        };
        Ok(match model {
            ModelArg::NormalGamma => {
                want(4, "mean,kappa,alpha,beta")?;
                let p = prior.unwrap_or(&[0.0, 1.0, 1.0, 1.0]);
                (
                    ModelSpec::NormalGamma,
                    Hyper::NormalGamma { mean: p[0], kappa: p[1], alpha: p[2], beta: p[3] },
                )
            }
            ModelArg::GaussKnownVar => {
                want(2, "mean,variance")?;
                let variance = self.known_variance.ok_or_else(|| {
                    CliError::Usage("--model gauss-known-var needs --known-variance".into())
                })?;
                let p = prior.map(|p| (p[0], p[1])).unwrap_or((0.0, variance));
                (
                    ModelSpec::GaussKnownVar { variance },
                    Hyper::Normal { mean: p.0, variance: p.1 },
                )
            }
            ModelArg::ExpGamma => {
                want(2, "alpha,beta")?;
                let p = prior.unwrap_or(&[1.0, 1.0]);
                (ModelSpec::ExpGamma, Hyper::Gamma { alpha: p[0], beta: p[1] })
            }
        })
    }

    pub fn dgp(&self) -> DgpSpec {
        match self.dgp.unwrap_or(DgpArg::Gaussian) {
            DgpArg::Gaussian => DgpSpec::gaussian(self.mu_star.unwrap_or(25.0), self.sigma2_star.unwrap_or(100.0)),
            DgpArg::Truncated => DgpSpec::truncated(
                self.mu_star.unwrap_or(10.0),
                self.sigma2_star.unwrap_or(100.0),
                self.trunc_lo.unwrap_or(0.0),
                self.trunc_hi.unwrap_or(f64::INFINITY),
                match self.trunc_params.unwrap_or(TruncArg::Underlying) {
                    TruncArg::Underlying => TruncationParams::Underlying,
                    TruncArg::Moments => TruncationParams::Moments,
                },
            ),
        }
    }

    /// Benchmark configuration with unspecified fields at their defaults.
    pub fn bench(&self) -> Result<BenchConfig, CliError> {
        let d = BenchConfig::default();
        let (model, prior) = self.model()?;
        let epsilon_grid = match &self.epsilon_grid {
            Some(text) => parse_grid(text)?,
            None => d.epsilon_grid.clone(),
        };
        let config = BenchConfig {
            h: self.h.unwrap_or(d.h),
            b: self.b.unwrap_or(d.b),
            x_bounds: (self.x_min.unwrap_or(d.x_bounds.0), self.x_max.unwrap_or(d.x_bounds.1)),
            n_train: self.n_train.unwrap_or(d.n_train),
            m_test: self.m_test.unwrap_or(d.m_test),
            seeds: self.seeds.unwrap_or(d.seeds),
            master_seed: self.seed.unwrap_or(d.master_seed),
            epsilon_grid,
            budgets: self.budget.clone().unwrap_or(d.budgets),
            model,
            prior,
            tolerances: d.tolerances,
            workers: self.workers.unwrap_or(d.workers),
        };
        config.validate()?;
        Ok(config)
    }
}

fn read_config(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// `LO:HI:COUNT` (inclusive, evenly spaced) or `a,b,c`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse epsilon grid {text:?}; use LO:HI:COUNT or a,b,c"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            if count == 0 {
                return Err(bad());
            }
            Ok(linspace(lo, hi, count))
        }
        [list] => list.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        let g = parse_grid("0.05:3:21").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!((g[0], g[20]), (0.05, 3.0));
        assert_eq!(parse_grid("0.1, 0.5,2").unwrap(), vec![0.1, 0.5, 2.0]);
        assert!(parse_grid("0.1:2").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn prior_arity_checked() {
        let s = Settings {
            prior: Some(vec![0.0, 1.0]),
            ..Settings::default()
        };
        assert!(s.model().is_err());
        let s = Settings {
            model: Some(ModelArg::GaussKnownVar),
            ..Settings::default()
        };
        assert!(s.model().is_err());
    }
}
