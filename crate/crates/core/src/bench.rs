//! Random-instance convergence benchmark: sampling of per-sample
//! subproblems, the acceptance rule, and box-plot statistics.

use std::time::Instant;

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aunn::run_aunn;
use crate::error::{NsmError, Result};
use crate::objective::relative_error;
use crate::oracle::{solve_nnen, OracleResult};
use crate::snn::run_snn;
use crate::types::{Hyperparams, SolverConfig, SynapticState};

pub const BENCH_ALPHA: f64 = 0.3;
pub const BENCH_LAMBDA1: f64 = 0.3;
pub const BENCH_LAMBDA2: f64 = 0.1;
/// Upper end of the uniform range for the feedforward drive `(W x)_i`.
pub const BENCH_DRIVE_MAX: f64 = 5.0;
/// Minimum l2-norm of the oracle minimizer for an instance to be kept.
pub const ACCEPT_NORM: f64 = 0.01;

/// One random subproblem. The feedforward drive is stored as a single
/// column of `W` with the scalar input `x = [1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchInstance {
    pub state: SynapticState,
    pub hyper: Hyperparams,
    pub x: Array1<f64>,
}

/// Draws `b_i ~ U[0,1]`, `(Wx)_i ~ U[0,5]` and `M = V V'` with
/// `V_ij ~ U[0, 1/sqrt(k)]`.
pub fn sample_instance<R: Rng>(rng: &mut R, k: usize) -> BenchInstance {
    let b = Array1::from_shape_fn(k, |_| rng.random_range(0.0..1.0));
    let wx = Array2::from_shape_fn((k, 1), |_| rng.random_range(0.0..BENCH_DRIVE_MAX));
    let vmax = 1.0 / (k as f64).sqrt();
    let v = Array2::from_shape_fn((k, k), |_| rng.random_range(0.0..vmax));
    let mut m = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let dot = v.row(i).dot(&v.row(j));
            m[[i, j]] = dot;
            m[[j, i]] = dot;
        }
    }
    BenchInstance {
        state: SynapticState::new(wx, m, b).expect("sampled shapes are consistent"),
        hyper: Hyperparams {
            alpha: BENCH_ALPHA,
            lambda1: BENCH_LAMBDA1,
            lambda2: BENCH_LAMBDA2,
        },
        x: array![1.0],
    }
}

/// Samples until the oracle minimizer has l2-norm above [`ACCEPT_NORM`].
pub fn sample_accepted<R: Rng>(
    rng: &mut R,
    k: usize,
    oracle_cfg: &SolverConfig,
    max_retries: usize,
) -> Result<(BenchInstance, OracleResult)> {
    for _ in 0..max_retries {
        let inst = sample_instance(rng, k);
        let opt = solve_nnen(&inst.state, &inst.hyper, inst.x.view(), oracle_cfg)?;
        let norm = opt.y.view().dot(&opt.y.view()).sqrt();
        if norm > ACCEPT_NORM {
            return Ok((inst, opt));
        }
    }
    Err(NsmError::InvalidArgument(format!(
        "no accepted instance for k = {k} within {max_retries} draws"
    )))
}

/// Generator for instance `index` of size `k`. Each cell owns its stream, so
/// cells can be evaluated in any order.
pub fn instance_rng(seed: u64, k: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | index as u64);
    rng
}

/// Median, quartiles and extrema, with linear interpolation between order
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(BoxStats {
            count: v.len(),
            min: v[0],
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BenchSolver {
    Snn,
    Aunn,
    /// Oracle compared against itself; a control row that must read 0.
    Oracle,
}

impl BenchSolver {
    pub fn name(self) -> &'static str {
        match self {
            BenchSolver::Snn => "snn",
            BenchSolver::Aunn => "aunn",
            BenchSolver::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub instance: usize,
    pub solver: BenchSolver,
    pub relative_error: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub ks: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    pub snn: SolverConfig,
    /// `None` skips the rate-dynamics rows.
    pub aunn: Option<SolverConfig>,
    pub oracle: SolverConfig,
    pub include_control: bool,
    pub max_retries: usize,
}

/// Runs every `(k, instance)` cell, possibly in parallel, and returns rows
/// sorted by `(k, instance, solver)`.
pub fn run_bench(params: &BenchParams) -> Result<Vec<BenchRow>> {
    let cells: Vec<(usize, usize)> = params
        .ks
        .iter()
        .flat_map(|&k| (0..params.instances).map(move |i| (k, i)))
        .collect();
    let per_cell: Vec<Vec<BenchRow>> = cells
        .par_iter()
        .map(|&(k, index)| run_cell(params, k, index))
        .collect::<Result<_>>()?;
    let mut rows: Vec<BenchRow> = per_cell.into_iter().flatten().collect();
    rows.sort_by_key(|a| (a.k, a.instance, a.solver));
    Ok(rows)
}

fn run_cell(params: &BenchParams, k: usize, index: usize) -> Result<Vec<BenchRow>> {
    let mut rng = instance_rng(params.seed, k, index);
    let (inst, opt) = sample_accepted(&mut rng, k, &params.oracle, params.max_retries)?;
    let mut rows = Vec::with_capacity(3);
    let row = |solver, relative_error, runtime_secs| BenchRow {
        k,
        instance: index,
        solver,
        relative_error,
        runtime_secs,
    };

    let start = Instant::now();
    let snn = run_snn(&inst.state, &inst.hyper, inst.x.view(), &params.snn)?;
    rows.push(row(
        BenchSolver::Snn,
        relative_error(&snn.y_tilde, &opt.y)?,
        start.elapsed().as_secs_f64(),
    ));

    if let Some(aunn_cfg) = &params.aunn {
        let cfg = SolverConfig {
            h_sample_every: 0,
            ..*aunn_cfg
        };
        let start = Instant::now();
        let tr = run_aunn(&inst.state, &inst.hyper, inst.x.view(), &cfg)?;
        rows.push(row(
            BenchSolver::Aunn,
            relative_error(&tr.y, &opt.y)?,
            start.elapsed().as_secs_f64(),
        ));
    }

    if params.include_control {
        let start = Instant::now();
        let again = solve_nnen(&inst.state, &inst.hyper, inst.x.view(), &params.oracle)?;
        rows.push(row(
            BenchSolver::Oracle,
            relative_error(&again.y, &opt.y)?,
            start.elapsed().as_secs_f64(),
        ));
    }
    Ok(rows)
}

/// Box statistics of the relative errors per `(k, solver)`, in row order.
pub fn summarize(rows: &[BenchRow]) -> Vec<(usize, BenchSolver, BoxStats)> {
    let mut keys: Vec<(usize, BenchSolver)> = rows.iter().map(|r| (r.k, r.solver)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(k, solver)| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.k == k && r.solver == solver)
                .map(|r| r.relative_error)
                .collect();
            BoxStats::from_values(&errs).map(|s| (k, solver, s))
        })
        .collect()
}
