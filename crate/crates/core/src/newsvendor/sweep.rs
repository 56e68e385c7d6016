use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bdro_split, BenchConfig, DgpSpec, Sampler};
use crate::bdro::{solve_bdro, BdroInstance};
use crate::dual::{solve_dro_bas, AmbiguitySpec, Provenance};
use crate::error::{Error, Result};
use crate::models::PosteriorState;
use crate::rng::{replicate_seed, substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dro-bas")]
    DroBas,
    #[serde(rename = "bdro")]
    Bdro,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::DroBas => "dro-bas",
            Method::Bdro => "bdro",
        }
    }

    fn stream_id(&self) -> u64 {
        match self {
            Method::DroBas => 1,
            Method::Bdro => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dro-bas" => Ok(Method::DroBas),
            "bdro" => Ok(Method::Bdro),
            other => Err(Error::Input(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// ε below ε_min: the ambiguity set is empty.
    Infeasible,
    Failed,
}

/// One solve: a (method, replicate, ε, N) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub seed: u64,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n_model: usize,
    pub x_star: f64,
    pub oos_mean: f64,
    pub oos_var: f64,
    pub solve_seconds: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub method: Method,
    pub n_model: usize,
    pub seed: u64,
    pub epsilon_bits: u64,
}

impl SweepRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            method: self.method,
            n_model: self.n_model,
            seed: self.seed,
            epsilon_bits: self.epsilon.to_bits(),
        }
    }

    fn unsolved(method: Method, seed: u64, epsilon: f64, n_model: usize, status: RowStatus) -> Self {
        Self {
            method,
            seed,
            epsilon,
            n_model,
            x_star: f64::NAN,
            oos_mean: f64::NAN,
            oos_var: f64::NAN,
            solve_seconds: 0.0,
            status,
        }
    }
}

/// Mean and variance (over the empirical distribution) of f(x, ξ) on the test set.
pub fn out_of_sample(x: f64, test: &[f64], h: f64, b: f64) -> (f64, f64) {
    let costs: Vec<f64> = test.iter().map(|&xi| super::newsvendor_cost(x, xi, h, b)).collect();
    let m = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / m;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    /// Sorted by method, N, replicate and ε.
    pub rows: Vec<SweepRow>,
    /// One message per failed cell.
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn infeasible(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RowStatus::Infeasible).count()
    }
}

struct Job {
    method: Method,
    n_model: usize,
    seed: u64,
    epsilons: Vec<f64>,
}

/// Runs every (method, replicate, ε, N) cell not already present in `done`.
///
/// Data for replicate `j` come from the train/test substreams of its seed, so
/// both methods see identical data. Model samples come from a substream keyed
/// by (method, N) and are shared across the ε grid.
pub fn run_sweep(
    config: &BenchConfig,
    dgp: &DgpSpec,
    methods: &[Method],
    done: &HashSet<CellKey>,
) -> Result<SweepResult> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Input("no methods selected".into()));
    }
    if methods.contains(&Method::Bdro) {
        for &n in &config.budgets {
            bdro_split(n)?;
        }
    }
    let sampler = dgp.sampler()?;

    let mut jobs = Vec::new();
    for &method in methods {
        for &n_model in &config.budgets {
            for seed in 1..=config.seeds as u64 {
                let epsilons: Vec<f64> = config
                    .epsilon_grid
                    .iter()
                    .copied()
                    .filter(|e| {
                        !done.contains(&CellKey {
                            method,
                            n_model,
                            seed,
                            epsilon_bits: e.to_bits(),
                        })
                    })
                    .collect();
                if !epsilons.is_empty() {
                    jobs.push(Job {
                        method,
                        n_model,
                        seed,
                        epsilons,
                    });
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<(Vec<SweepRow>, Vec<String>)> =
        pool.install(|| jobs.par_iter().map(|job| run_job(config, &sampler, job)).collect());

    let mut result = SweepResult::default();
    for (rows, failures) in outcomes {
        result.rows.extend(rows);
        result.failures.extend(failures);
    }
    result.rows.sort_by(|a, b| {
        (a.method, a.n_model, a.seed)
            .cmp(&(b.method, b.n_model, b.seed))
            .then(a.epsilon.total_cmp(&b.epsilon))
    });
    Ok(result)
}

enum Prepared {
    DroBas { samples: Vec<f64> },
    Bdro { instance: BdroInstance },
}

fn run_job(config: &BenchConfig, sampler: &Sampler, job: &Job) -> (Vec<SweepRow>, Vec<String>) {
    let fail_all = |e: Error| {
        let rows = job
            .epsilons
            .iter()
            .map(|&eps| SweepRow::unsolved(job.method, job.seed, eps, job.n_model, RowStatus::Failed))
            .collect();
        let msg = format!(
            "{} seed {} N {}: {e}",
            job.method, job.seed, job.n_model
        );
        (rows, vec![msg])
    };
    let replicate = replicate_seed(config.master_seed, job.seed);
    let (train, test) = match sampler.replicate(config.n_train, config.m_test, replicate) {
        Ok(d) => d,
        Err(e) => return fail_all(e),
    };
    let post = match config.model.update_posterior(&config.prior, &train) {
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    let prepared = match prepare(config, &post, job, replicate) {
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    let oracle = config.cost();
    let gap = post.gap();

    let mut rows = Vec::with_capacity(job.epsilons.len());
    let mut failures = Vec::new();
    for &epsilon in &job.epsilons {
        let solved = match &prepared {
            Prepared::DroBas { samples } => {
                if epsilon < gap {
                    rows.push(SweepRow::unsolved(
                        job.method,
                        job.seed,
                        epsilon,
                        job.n_model,
                        RowStatus::Infeasible,
                    ));
                    continue;
                }
                AmbiguitySpec::new(epsilon, gap, Provenance::UserSet).and_then(|amb| {
                    solve_dro_bas(&oracle, samples, &amb, config.x_bounds, config.tolerances)
                        .map(|s| (s.x_star, s.wall_time))
                })
            }
            Prepared::Bdro { instance } => {
                let instance = BdroInstance {
                    epsilon,
                    ..instance.clone()
                };
                solve_bdro(&instance, &oracle, config.tolerances).map(|s| (s.x_star, s.wall_time))
            }
        };
        match solved {
            Ok((x_star, seconds)) => {
                let (oos_mean, oos_var) = out_of_sample(x_star, &test, config.h, config.b);
                rows.push(SweepRow {
                    method: job.method,
                    seed: job.seed,
                    epsilon,
                    n_model: job.n_model,
                    x_star,
                    oos_mean,
                    oos_var,
                    solve_seconds: seconds,
                    status: RowStatus::Ok,
                });
            }
            Err(e) => {
                failures.push(format!(
                    "{} seed {} N {} epsilon {epsilon}: {e}",
                    job.method, job.seed, job.n_model
                ));
                rows.push(SweepRow::unsolved(
                    job.method,
                    job.seed,
                    epsilon,
                    job.n_model,
                    RowStatus::Failed,
                ));
            }
        }
    }
    (rows, failures)
}

/// Substream for the model samples of one (replicate, method, N) cell.
pub fn model_stream(replicate: u64, method: Method, n_model: usize) -> ChaCha8Rng {
    substream(replicate, Stream::Model, (method.stream_id() << 32) | n_model as u64)
}

fn prepare(config: &BenchConfig, post: &PosteriorState, job: &Job, replicate: u64) -> Result<Prepared> {
    let mut rng = model_stream(replicate, job.method, job.n_model);
    Ok(match job.method {
        Method::DroBas => Prepared::DroBas {
            samples: post.sample_center(job.n_model, &mut rng),
        },
        Method::Bdro => {
            let k = bdro_split(job.n_model)?;
            let theta_samples = post.sample_params(k, &mut rng);
            let xi_samples = theta_samples.iter().map(|t| t.sample(k, &mut rng)).collect();
            Prepared::Bdro {
                instance: BdroInstance {
                    theta_samples,
                    xi_samples,
                    epsilon: 0.0,
                    x_bounds: config.x_bounds,
                },
            }
        }
    })
}

/// (m, v) from per-replicate (mean, variance) pairs:
/// m = mean of means, v = mean of variances + sample variance of the means.
pub fn aggregate_seeds(per_seed: &[(f64, f64)]) -> Result<(f64, f64)> {
    if per_seed.len() < 2 {
        return Err(Error::Input(format!(
            "aggregation needs at least two replicates, got {}",
            per_seed.len()
        )));
    }
    let j = per_seed.len() as f64;
    let m = per_seed.iter().map(|p| p.0).sum::<f64>() / j;
    let within = per_seed.iter().map(|p| p.1).sum::<f64>() / j;
    let between = per_seed.iter().map(|p| (p.0 - m).powi(2)).sum::<f64>() / (j - 1.0);
    Ok((m, within + between))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n_model: usize,
    pub m: f64,
    pub v: f64,
}

/// Aggregates `Ok` rows per (method, N, ε). Groups with fewer than two
/// successful replicates are left out.
pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Method, usize, u64), Vec<(u64, f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == RowStatus::Ok) {
        groups
            .entry((r.method, r.n_model, r.epsilon.to_bits()))
            .or_default()
            .push((r.seed, r.oos_mean, r.oos_var));
    }
    let mut out: Vec<AggregateRow> = groups
        .into_iter()
        .filter_map(|((method, n_model, eps_bits), mut seeds)| {
            seeds.sort_by_key(|s| s.0);
            let pairs: Vec<(f64, f64)> = seeds.iter().map(|s| (s.1, s.2)).collect();
            aggregate_seeds(&pairs).ok().map(|(m, v)| AggregateRow {
                method,
                epsilon: f64::from_bits(eps_bits),
                n_model,
                m,
                v,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        (a.method, a.n_model)
            .cmp(&(b.method, b.n_model))
            .then(a.epsilon.total_cmp(&b.epsilon))
    });
    out
}

/// Indices of the non-dominated points under (≤, ≤) with strict improvement in
/// at least one coordinate, ordered by the first coordinate.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .0
            .total_cmp(&points[j].0)
            .then(points[i].1.total_cmp(&points[j].1))
            .then(i.cmp(&j))
    });
    let mut front = Vec::new();
    let mut best_v = f64::INFINITY;
    let mut last: Option<(f64, f64)> = None;
    for i in order {
        let p = points[i];
        if p.1 < best_v || last == Some(p) {
            front.push(i);
            best_v = best_v.min(p.1);
            last = Some(p);
        }
    }
    front
}

/// True when some point in `others` is strictly better than `p` in both coordinates.
pub fn dominated_by(p: (f64, f64), others: &[(f64, f64)]) -> bool {
    others.iter().any(|q| q.0 < p.0 && q.1 < p.1)
}
