//! Newsvendor benchmark: data generation, seed sweeps, out-of-sample
//! aggregation and Pareto-front extraction.

mod dgp;
mod report;
mod sweep;

pub use dgp::{
    generate_data, match_truncated_moments, truncated_moments, DgpKind, DgpSpec, Sampler,
    TruncationParams,
};
pub use report::{
    read_aggregate_csv, read_results_csv, write_aggregate_csv, write_results_csv,
    AGGREGATE_COLUMNS, RESULTS_COLUMNS,
};
pub use sweep::{
    aggregate, aggregate_seeds, dominated_by, model_stream, out_of_sample, pareto_front, run_sweep,
    AggregateRow, CellKey, Method, RowStatus, SweepResult, SweepRow,
};

use serde::{Deserialize, Serialize};

use crate::dual::Tolerances;
use crate::error::{Error, Result};
use crate::models::{Hyper, ModelSpec};

/// h·max(0, x − ξ) + b·max(0, ξ − x).
pub fn newsvendor_cost(x: f64, xi: f64, h: f64, b: f64) -> f64 {
    h * (x - xi).max(0.0) + b * (xi - x).max(0.0)
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|k| if k == count - 1 { hi } else { lo + step * k as f64 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Holding cost per unit left over.
    pub h: f64,
    /// Backorder cost per unit of unmet demand.
    pub b: f64,
    pub x_bounds: (f64, f64),
    pub n_train: usize,
    pub m_test: usize,
    /// Number of replicates J; replicate indices run from 1 to J.
    pub seeds: usize,
    pub master_seed: u64,
    pub epsilon_grid: Vec<f64>,
    /// Total model-sample budgets N. BDRO splits each as N_θ = N_ξ = √N.
    pub budgets: Vec<usize>,
    pub model: ModelSpec,
    pub prior: Hyper,
    pub tolerances: Tolerances,
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            h: 1.0,
            b: 2.0,
            x_bounds: (0.0, 50.0),
            n_train: 20,
            m_test: 50,
            seeds: 200,
            master_seed: 0,
            epsilon_grid: linspace(0.05, 3.0, 21),
            budgets: vec![25, 100, 900],
            model: ModelSpec::NormalGamma,
            prior: Hyper::NormalGamma {
                mean: 0.0,
                kappa: 1.0,
                alpha: 1.0,
                beta: 1.0,
            },
            tolerances: Tolerances::default(),
            workers: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Input(msg));
        if !(self.h >= 0.0 && self.b >= 0.0) || !self.h.is_finite() || !self.b.is_finite() {
            return bad(format!("costs must be finite and nonnegative (h = {}, b = {})", self.h, self.b));
        }
        let (lo, hi) = self.x_bounds;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad(format!("invalid decision interval [{lo}, {hi}]"));
        }
        if self.n_train == 0 || self.m_test == 0 || self.seeds == 0 {
            return bad("n_train, m_test and seeds must all be at least 1".into());
        }
        if self.epsilon_grid.is_empty() {
            return bad("epsilon grid is empty".into());
        }
        if self.epsilon_grid.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return bad("epsilon values must be finite and nonnegative".into());
        }
        if self.epsilon_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("epsilon grid must be strictly ascending".into());
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return bad("model-sample budgets must be nonempty and positive".into());
        }
        if !(self.tolerances.inner > 0.0 && self.tolerances.outer > 0.0) {
            return bad("tolerances must be positive".into());
        }
        self.model.validate()?;
        self.model.check_hyper(&self.prior)
    }

    pub fn cost(&self) -> crate::dual::CostOracle<'static> {
        let (h, b) = (self.h, self.b);
        crate::dual::CostOracle::convex(move |x, xi| newsvendor_cost(x, xi, h, b))
    }
}

/// √N when N is a perfect square.
pub fn bdro_split(budget: usize) -> Result<usize> {
    let root = (budget as f64).sqrt().round() as usize;
    if root * root == budget {
        Ok(root)
    } else {
        Err(Error::Input(format!(
            "BDRO budget {budget} is not a perfect square (N_θ = N_ξ requires N = k²)"
        )))
    }
}
