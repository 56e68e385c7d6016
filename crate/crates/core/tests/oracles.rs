//! Library results against independent numerical references.

use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use drobas::newsvendor::{
    newsvendor_cost, read_aggregate_csv, read_results_csv, truncated_moments,
    write_aggregate_csv, write_results_csv, AggregateRow, Method, RowStatus, SweepRow,
};
use drobas::{digamma, solve_bdro, BdroInstance, CostOracle, Hyper, Likelihood, ModelSpec, Tolerances};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn digamma_matches_log_gamma_derivative() {
    for &z in &[0.3f64, 1.0, 2.5, 7.0, 11.0, 42.0, 300.0] {
        let h = 1e-4 * z.max(1.0);
        let numeric = (ln_gamma(z + h) - ln_gamma(z - h)) / (2.0 * h);
        assert_relative_eq!(digamma(z).unwrap(), numeric, epsilon = 1e-7, max_relative = 1e-7);
    }
}

#[test]
fn kl_matches_quadrature() {
    let pairs = [
        (
            Likelihood::Normal { mean: 1.0, variance: 2.0 },
            Likelihood::Normal { mean: -0.5, variance: 0.7 },
        ),
        (
            Likelihood::Normal { mean: 25.0, variance: 100.0 },
            Likelihood::Normal { mean: 23.8, variance: 113.0 },
        ),
        (Likelihood::Exponential { rate: 0.4 }, Likelihood::Exponential { rate: 1.3 }),
    ];
    for (q, p) in pairs {
        let (lo, hi) = match q {
            Likelihood::Normal { mean, variance } => (mean - 12.0 * variance.sqrt(), mean + 12.0 * variance.sqrt()),
            Likelihood::Exponential { rate } => (0.0, 60.0 / rate),
        };
        let integrand = |x: f64| {
            let lq = q.ln_pdf(x).unwrap();
            lq.exp() * (lq - p.ln_pdf(x).unwrap())
        };
        let numeric = simpson(integrand, lo, hi, 200_000);
        assert_relative_eq!(q.kl(&p).unwrap(), numeric, max_relative = 1e-8);
    }
}

#[test]
fn normal_gamma_draws_have_posterior_moments() {
    let post = drobas::PosteriorState {
        model: ModelSpec::NormalGamma,
        hyper: Hyper::NormalGamma { mean: 3.0, kappa: 4.0, alpha: 6.0, beta: 9.0 },
        n: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400_000;
    let draws = post.sample_params(n, &mut rng);
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    for d in &draws {
        let Likelihood::Normal { mean, variance } = *d else { panic!("wrong family") };
        let lambda = 1.0 / variance;
        s1 += lambda;
        s2 += lambda * mean;
        s3 += lambda * mean * mean;
    }
    let nf = n as f64;
    // E[λ] = α/β, E[λμ] = αm/β, E[λμ²] = αm²/β + 1/κ.
    assert_relative_eq!(s1 / nf, 6.0 / 9.0, max_relative = 0.01);
    assert_relative_eq!(s2 / nf, 2.0, max_relative = 0.01);
    assert_relative_eq!(s3 / nf, 6.0 + 0.25, max_relative = 0.01);
}

#[test]
fn center_draws_follow_center() {
    let post = ModelSpec::ExpGamma
        .update_posterior(&Hyper::Gamma { alpha: 2.0, beta: 1.0 }, &[0.5, 1.5, 2.0, 0.25])
        .unwrap();
    let Likelihood::Exponential { rate } = post.theta_bar() else { panic!("wrong family") };
    let n = 200_000;
    let xs = post.sample_center(n, &mut ChaCha8Rng::seed_from_u64(8));
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = 1.0 / rate / (n as f64).sqrt();
    assert!((mean - 1.0 / rate).abs() < 5.0 * se, "{mean} vs {}", 1.0 / rate);
}

#[test]
fn exp_gamma_gap_asymptotics() {
    for &alpha in &[50.0, 200.0, 1000.0] {
        let post = drobas::PosteriorState {
            model: ModelSpec::ExpGamma,
            hyper: Hyper::Gamma { alpha, beta: 3.0 },
            n: 0,
        };
        let series = 1.0 / (2.0 * alpha) + 1.0 / (12.0 * alpha * alpha);
        assert_relative_eq!(post.gap(), series, max_relative = 1e-5);
    }
}

#[test]
fn epsilon_min_shrinks_with_data() {
    let prior = Hyper::NormalGamma { mean: 0.0, kappa: 1.0, alpha: 1.0, beta: 1.0 };
    let data: Vec<f64> = (0..200).map(|i| 25.0 + 10.0 * ((i as f64) * 0.7).sin()).collect();
    let mins: Vec<f64> = [1, 5, 20, 80, 200]
        .iter()
        .map(|&n| ModelSpec::NormalGamma.update_posterior(&prior, &data[..n]).unwrap().epsilon_min())
        .collect();
    assert!(mins.windows(2).all(|w| w[1] < w[0]), "{mins:?}");
}

#[test]
fn truncated_moments_match_quadrature() {
    for &(m, s, lo, hi) in &[(10.0, 10.0, 0.0, 50.0), (0.0, 1.0, -0.5, 2.0), (-30.0, 5.0, 0.0, 10.0)] {
        let pdf = |x: f64| (-0.5 * ((x - m) / s).powi(2)).exp();
        let z = simpson(pdf, lo, hi, 100_000);
        let mean = simpson(|x| x * pdf(x), lo, hi, 100_000) / z;
        let var = simpson(|x| (x - mean).powi(2) * pdf(x), lo, hi, 100_000) / z;
        let (tm, tv) = truncated_moments(m, s, lo, hi);
        assert_relative_eq!(tm, mean, max_relative = 1e-7, epsilon = 1e-9);
        assert_relative_eq!(tv, var, max_relative = 1e-6);
    }
}

#[test]
fn bdro_at_zero_radius_is_pooled_sample_average() {
    let instance = BdroInstance {
        theta_samples: vec![Likelihood::Normal { mean: 0.0, variance: 1.0 }; 3],
        xi_samples: vec![vec![20.0, 31.0, 24.5], vec![18.0, 29.0, 40.0], vec![25.0, 26.0, 12.0]],
        epsilon: 0.0,
        x_bounds: (0.0, 50.0),
    };
    let oracle = CostOracle::convex(|x, xi| newsvendor_cost(x, xi, 1.0, 2.0));
    let sol = solve_bdro(&instance, &oracle, Tolerances::default()).unwrap();
    let pooled: Vec<f64> = instance.xi_samples.iter().flatten().copied().collect();
    let best = pooled
        .iter()
        .map(|&x| pooled.iter().map(|&xi| newsvendor_cost(x, xi, 1.0, 2.0)).sum::<f64>() / pooled.len() as f64)
        .fold(f64::INFINITY, f64::min);
    assert_relative_eq!(sol.value, best, epsilon = 1e-6);
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![SweepRow {
        method: Method::Bdro,
        seed: 7,
        epsilon: 0.05,
        n_model: 900,
        x_star: 30.125,
        oos_mean: 11.5,
        oos_var: 80.25,
        solve_seconds: 0.0,
        status: RowStatus::Ok,
    }];
    let path = dir.path().join("results.csv");
    write_results_csv(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    assert_eq!(read_results_csv(std::fs::File::open(&path).unwrap()).unwrap(), rows);

    let agg = vec![AggregateRow { method: Method::DroBas, epsilon: 3.0, n_model: 25, m: 12.5, v: 87.25 }];
    let path = dir.path().join("aggregate.csv");
    write_aggregate_csv(std::fs::File::create(&path).unwrap(), &agg).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "method,epsilon,N,m,v\ndro-bas,3.0,25,12.5,87.25\n");
    assert_eq!(read_aggregate_csv(text.as_bytes()).unwrap(), agg);
}
