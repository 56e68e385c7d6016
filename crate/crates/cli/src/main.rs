use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use drobas::newsvendor::{
    aggregate, bdro_split, model_stream, out_of_sample, read_results_csv, run_sweep, write_aggregate_csv,
    write_results_csv, BenchConfig, DgpKind, DgpSpec, Method, RowStatus, SweepRow,
};
use drobas::rng::replicate_seed;
use drobas::verify::{run_all, Fault, VerifyOptions};
use drobas::{solve_bdro, solve_dro_bas, AmbiguitySpec, BdroInstance, ModelSpec, PosteriorState, Provenance, TrueParams};

mod settings;

use settings::{MethodArg, Settings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    ChecksFailed(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::ChecksFailed(_) => 4,
        }
    }
}

impl From<drobas::Error> for CliError {
    fn from(e: drobas::Error) -> Self {
        match e {
            drobas::Error::Input(_) | drobas::Error::Domain(_) | drobas::Error::Infeasible { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "drobas", version, about = "Distributionally robust newsvendor with Bayesian ambiguity sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one replicate and report the decision, multiplier and radii
    Solve {
        #[command(flatten)]
        settings: Settings,
        /// Training data, one value per line (replaces the generated training set)
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Write a JSON record of the solve
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run the benchmark sweep and write results.csv and aggregate.csv
    Sweep {
        #[command(flatten)]
        settings: Settings,
        /// Output directory; existing results in it are reused
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Record wall-clock solve times (output is then not byte-reproducible)
        #[arg(long)]
        timings: bool,
    },
    /// Recompute aggregate.csv from a results file
    Aggregate {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run the numerical verification suites
    Verify {
        /// Smaller Monte Carlo budgets with wider tolerances
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deliberately break a formula to confirm the suites catch it
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    ExpGammaSign,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { settings, data, out } => solve(settings, data, out),
        Command::Sweep { settings, out, timings } => sweep(settings, &out, timings),
        Command::Aggregate { input, out } => aggregate_file(&input, &out),
        Command::Verify { quick, seed, inject_fault } => verify(quick, seed, inject_fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(msg) => eprintln!("runtime error: {msg}"),
                CliError::ChecksFailed(n) => eprintln!("{n} check(s) failed"),
            }
            ExitCode::from(e.code())
        }
    }
}

#[derive(Serialize)]
struct SolveRecord {
    method: Method,
    model: &'static str,
    replicate: u64,
    n_train: usize,
    n_model: usize,
    epsilon: f64,
    epsilon_min: f64,
    epsilon_star: Option<f64>,
    epsilon_star_kind: &'static str,
    x_star: f64,
    gamma_star: Vec<f64>,
    value: f64,
    iterations: usize,
    solve_seconds: f64,
    oos_mean: Option<f64>,
    oos_var: Option<f64>,
}

fn read_data(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{}: not a number: {l:?}", path.display())))
        })
        .collect()
}

/// ε* from the generating parameters when the model is well specified, else the plug-in estimate.
fn epsilon_star(post: &PosteriorState, dgp: Option<&DgpSpec>, train: &[f64]) -> (Option<f64>, &'static str) {
    let truth = match (post.model, dgp) {
        (ModelSpec::NormalGamma, Some(d)) if d.kind == DgpKind::Gaussian => Some(TrueParams::MeanPrecision {
            mean: d.mu_star,
            precision: 1.0 / d.sigma2_star,
        }),
        (ModelSpec::GaussKnownVar { variance }, Some(d))
            if d.kind == DgpKind::Gaussian && d.sigma2_star == variance =>
        {
            Some(TrueParams::Mean { mean: d.mu_star })
        }
        _ => None,
    };
    match truth {
        Some(t) => (post.epsilon_star(&t).ok(), "true parameters"),
        None => (post.epsilon_star_plugin(train).ok(), "plug-in estimate"),
    }
}

fn solve(settings: Settings, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let settings = settings.resolve()?;
    let config = settings.bench()?;
    let dgp = settings.dgp();
    let epsilon = settings
        .epsilon
        .ok_or_else(|| CliError::Usage("solve needs --epsilon".into()))?;
    let n_model = match settings.budget.as_deref() {
        None => 25,
        Some([n]) => *n,
        Some(_) => return Err(CliError::Usage("solve takes a single --budget".into())),
    };
    let replicate = settings.replicate.unwrap_or(1);
    let seed = replicate_seed(config.master_seed, replicate);

    let (train, test, dgp_used) = match &data {
        Some(path) => (read_data(path)?, None, None),
        None => {
            let (train, test) = dgp.sampler()?.replicate(config.n_train, config.m_test, seed)?;
            (train, Some(test), Some(&dgp))
        }
    };
    let post = config.model.update_posterior(&config.prior, &train)?;
    let eps_min = post.epsilon_min();
    let (eps_star, star_kind) = epsilon_star(&post, dgp_used, &train);

    println!("model            {}", config.model.name());
    println!("training size    {}", train.len());
    println!("epsilon          {epsilon}");
    println!("epsilon_min      {eps_min:.6}");
    match eps_star {
        Some(e) => println!("epsilon_star     {e:.6} ({star_kind})"),
        None => println!("epsilon_star     unavailable"),
    }

    let methods = settings.method.unwrap_or(MethodArg::DroBas).methods();
    let oracle = config.cost();
    let mut records = Vec::new();
    for method in methods {
        let (n_used, x_star, gammas, value, iterations, seconds) = match method {
            Method::DroBas => {
                let amb = AmbiguitySpec::new(epsilon, post.gap(), Provenance::UserSet)?;
                let samples = post.sample_center(n_model, &mut model_stream(seed, method, n_model));
                let s = solve_dro_bas(&oracle, &samples, &amb, config.x_bounds, config.tolerances)?;
                (n_model, s.x_star, vec![s.gamma_star], s.value, s.iterations, s.wall_time)
            }
            Method::Bdro => {
                let (n_theta, n_xi) = match (settings.n_theta, settings.n_xi) {
                    (None, None) => {
                        let k = bdro_split(n_model)?;
                        (k, k)
                    }
                    (Some(t), None) | (None, Some(t)) => (t, t),
                    (Some(t), Some(x)) => (t, x),
                };
                let mut rng = model_stream(seed, method, n_theta * n_xi);
                let theta_samples = post.sample_params(n_theta, &mut rng);
                let xi_samples = theta_samples.iter().map(|t| t.sample(n_xi, &mut rng)).collect();
                let instance = BdroInstance {
                    theta_samples,
                    xi_samples,
                    epsilon,
                    x_bounds: config.x_bounds,
                };
                let s = solve_bdro(&instance, &oracle, config.tolerances)?;
                (n_theta * n_xi, s.x_star, s.gammas, s.value, s.iterations, s.wall_time)
            }
        };
        let oos = test.as_ref().map(|t| out_of_sample(x_star, t, config.h, config.b));
        println!();
        println!("method           {method}");
        println!("N                {n_used}");
        println!("x_star           {x_star:.6}");
        match gammas.as_slice() {
            [g] => println!("gamma_star       {g:.6e}"),
            gs => {
                let lo = gs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = gs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                println!("gamma_star       {} multipliers in [{lo:.6e}, {hi:.6e}]", gs.len());
            }
        }
        println!("value            {value:.6}");
        println!("outer iterations {iterations}");
        println!("solve seconds    {seconds:.4}");
        if let Some((m, v)) = oos {
            println!("test mean        {m:.6}");
            println!("test variance    {v:.6}");
        }
        records.push(SolveRecord {
            method,
            model: config.model.name(),
            replicate,
            n_train: train.len(),
            n_model: n_used,
            epsilon,
            epsilon_min: eps_min,
            epsilon_star: eps_star,
            epsilon_star_kind: star_kind,
            x_star,
            gamma_star: gammas,
            value,
            iterations,
            solve_seconds: seconds,
            oos_mean: oos.map(|o| o.0),
            oos_var: oos.map(|o| o.1),
        });
    }
    if let Some(path) = out {
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &records).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

/// Settings that must match for existing results to be reused.
#[derive(Serialize)]
struct Fingerprint<'a> {
    h: f64,
    b: f64,
    x_bounds: (f64, f64),
    n_train: usize,
    m_test: usize,
    master_seed: u64,
    model: &'a ModelSpec,
    prior: &'a drobas::Hyper,
    tolerances: &'a drobas::Tolerances,
    dgp: &'a DgpSpec,
}

fn fingerprint(config: &BenchConfig, dgp: &DgpSpec) -> String {
    let f = Fingerprint {
        h: config.h,
        b: config.b,
        x_bounds: config.x_bounds,
        n_train: config.n_train,
        m_test: config.m_test,
        master_seed: config.master_seed,
        model: &config.model,
        prior: &config.prior,
        tolerances: &config.tolerances,
        dgp,
    };
    serde_json::to_string_pretty(&f).expect("plain data") + "\n"
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(|e| io_error(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

fn sweep(settings: Settings, out: &Path, timings: bool) -> Result<(), CliError> {
    let settings = settings.resolve()?;
    let config = settings.bench()?;
    let dgp = settings.dgp();
    dgp.validate()?;
    let methods = settings.method.unwrap_or(MethodArg::Both).methods();

    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let manifest = out.join("sweep.json");
    let print = fingerprint(&config, &dgp);
    let results_path = out.join("results.csv");
    let mut previous: Vec<SweepRow> = Vec::new();
    if results_path.exists() {
        match std::fs::read_to_string(&manifest) {
            Ok(existing) if existing == print => {}
            Ok(_) => {
                return Err(CliError::Usage(format!(
                    "{} holds results for different settings; choose another --out",
                    out.display()
                )))
            }
            Err(e) => return Err(io_error(&manifest, e)),
        }
        let file = File::open(&results_path).map_err(|e| io_error(&results_path, e))?;
        previous = read_results_csv(file)?;
        previous.retain(|r| r.status != RowStatus::Failed);
    } else {
        std::fs::write(&manifest, &print).map_err(|e| io_error(&manifest, e))?;
    }
    let done: HashSet<_> = previous.iter().map(SweepRow::key).collect();

    let result = run_sweep(&config, &dgp, &methods, &done)?;
    let solved = result.rows.len();
    let mut rows = result.rows;
    if !timings {
        rows.iter_mut().for_each(|r| r.solve_seconds = 0.0);
    }
    let reused = previous.len();
    rows.extend(previous);
    rows.sort_by(|a, b| {
        (a.method, a.n_model, a.seed)
            .cmp(&(b.method, b.n_model, b.seed))
            .then(a.epsilon.total_cmp(&b.epsilon))
    });

    write_atomic(&results_path, |w| Ok(write_results_csv(w, &rows)?))?;
    let aggregate_path = out.join("aggregate.csv");
    let agg = aggregate(&rows);
    write_atomic(&aggregate_path, |w| Ok(write_aggregate_csv(w, &agg)?))?;

    let infeasible = rows.iter().filter(|r| r.status == RowStatus::Infeasible).count();
    println!(
        "{solved} cells computed, {reused} reused, {infeasible} below epsilon_min, {} failed",
        result.failures.len()
    );
    println!("wrote {} and {}", results_path.display(), aggregate_path.display());
    if !result.failures.is_empty() {
        for f in result.failures.iter().take(10) {
            eprintln!("  {f}");
        }
        return Err(CliError::Runtime(format!(
            "{} cells failed; rerun the same command to retry them",
            result.failures.len()
        )));
    }
    Ok(())
}

fn aggregate_file(input: &Path, out: &Path) -> Result<(), CliError> {
    let file = File::open(input).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
    let rows = read_results_csv(file)?;
    let agg = aggregate(&rows);
    write_atomic(out, |w| Ok(write_aggregate_csv(w, &agg)?))?;
    println!("{} aggregate rows written to {}", agg.len(), out.display());
    Ok(())
}

fn verify(quick: bool, seed: u64, fault: Option<FaultArg>) -> Result<(), CliError> {
    let opts = VerifyOptions {
        quick,
        seed,
        fault: fault.map(|FaultArg::ExpGammaSign| Fault::ExpGammaGapSign),
    };
    let reports = run_all(&opts)?;
    let mut failed = 0;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: worst {:.3e}, limit {:.3e} ({})", r.name, r.worst, r.threshold, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
