//! Local plasticity and the online training loop.

use std::fmt;
use std::str::FromStr;

use log::debug;
use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::aunn::run_aunn;
use crate::error::{NsmError, Result};
use crate::objective::eval_nsm_cost;
use crate::oracle::solve_nnen;
use crate::snn::run_snn;
use crate::types::{Dataset, Hyperparams, OutputRates, SolverConfig, SynapticState};

const SAMPLING_STREAM: u64 = 0;
const PROBE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

/// Piecewise-constant learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningSchedule {
    /// `(step_count, eta)` pairs, applied in order.
    pub segments: Vec<(usize, f64)>,
    /// Rate used once every segment is exhausted.
    pub final_eta: f64,
}

impl LearningSchedule {
    pub fn new(segments: Vec<(usize, f64)>, final_eta: f64) -> Result<Self> {
        let s = LearningSchedule {
            segments,
            final_eta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(eta: f64) -> Result<Self> {
        Self::new(Vec::new(), eta)
    }

    /// The feature-extraction recipe: 1e-3 for 1e4 steps, 1e-5 for the next
    /// 9e4, 0.5e-5 afterwards.
    pub fn feature_recipe() -> Self {
        LearningSchedule {
            segments: vec![(10_000, 1e-3), (90_000, 1e-5)],
            final_eta: 0.5e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad_eta = |eta: f64| !(eta > 0.0 && eta <= 1.0);
        for &(count, eta) in &self.segments {
            if count == 0 {
                return Err(NsmError::InvalidArgument("schedule segment with zero steps".into()));
            }
            if bad_eta(eta) {
                return Err(NsmError::InvalidArgument(format!("learning rate {eta} outside (0, 1]")));
            }
        }
        if bad_eta(self.final_eta) {
            return Err(NsmError::InvalidArgument(format!(
                "final learning rate {} outside (0, 1]",
                self.final_eta
            )));
        }
        Ok(())
    }

    /// Rate for the zero-based update `step`.
    pub fn eta_at(&self, step: usize) -> f64 {
        let mut start = 0;
        for &(count, eta) in &self.segments {
            if step < start + count {
                return eta;
            }
            start += count;
        }
        self.final_eta
    }
}

/// In-place form of [`apply_updates`].
pub fn update_in_place(
    state: &mut SynapticState,
    y: &OutputRates,
    x: ArrayView1<'_, f64>,
    eta: f64,
    alpha: f64,
) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(NsmError::InvalidArgument(format!("learning rate {eta} outside (0, 1]")));
    }
    state.check_output_len(y)?;
    if x.len() != state.n() {
        return Err(NsmError::DimensionMismatch {
            what: "input sample dimension",
            expected: state.n(),
            got: x.len(),
        });
    }
    let keep = 1.0 - eta;
    let yv = y.as_array();
    let k = state.k();
    // Written as (1 - eta) old + eta target so eta = 1 lands on the target exactly.
    for i in 0..k {
        let yi = yv[i];
        let mut w_row = state.w.row_mut(i);
        for (w, xj) in w_row.iter_mut().zip(x.iter()) {
            *w = keep * *w + eta * (yi * xj);
        }
        // Off-diagonal (anti-Hebbian) and diagonal (homeostatic) entries share
        // the same form; y_i y_j == y_j y_i keeps M exactly symmetric.
        let mut m_row = state.m.row_mut(i);
        for (m, yj) in m_row.iter_mut().zip(yv.iter()) {
            *m = keep * *m + eta * (yi * yj);
        }
        state.b[i] = keep * state.b[i] + eta * (alpha * yi);
    }
    Ok(())
}

/// One step of the local learning rules:
/// `W += eta (y x' - W)`, `M += eta (y y' - M)`, `b += eta (alpha y - b)`.
pub fn apply_updates(
    state: &SynapticState,
    y: &OutputRates,
    x: ArrayView1<'_, f64>,
    eta: f64,
    alpha: f64,
) -> Result<SynapticState> {
    let mut next = state.clone();
    update_in_place(&mut next, y, x, eta, alpha)?;
    Ok(next)
}

/// Distribution of the initial feedforward weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// `W_ij ~ U[0, max)`.
    Uniform { max: f64 },
    /// `W_ij ~ N(0, std^2)`.
    Normal { std: f64 },
}

/// Random `W`, `M = I`, `b = 0`.
pub fn initial_state(k: usize, n: usize, init: WeightInit, seed: u64) -> Result<SynapticState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let w = match init {
        WeightInit::Uniform { max } if max > 0.0 && max.is_finite() => {
            Array2::from_shape_fn((k, n), |_| rng.random_range(0.0..max))
        }
        WeightInit::Normal { std } if std > 0.0 && std.is_finite() => {
            let dist = Normal::new(0.0, std).expect("std checked positive");
            Array2::from_shape_fn((k, n), |_| dist.sample(&mut rng))
        }
        other => {
            return Err(NsmError::InvalidArgument(format!(
                "initial weight scale must be positive and finite: {other:?}"
            )))
        }
    };
    SynapticState::new(w, Array2::eye(k), Array1::zeros(k))
}

/// Inner solver used to produce outputs for each presented sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Snn,
    Aunn,
    Oracle,
}

impl Solver {
    pub fn solve(
        self,
        state: &SynapticState,
        hyper: &Hyperparams,
        x: ArrayView1<'_, f64>,
        cfg: &SolverConfig,
    ) -> Result<OutputRates> {
        match self {
            Solver::Snn => run_snn(state, hyper, x, cfg).map(|t| t.y_tilde),
            Solver::Aunn => {
                let cfg = SolverConfig {
                    h_sample_every: 0,
                    ..*cfg
                };
                run_aunn(state, hyper, x, &cfg).map(|t| t.y)
            }
            Solver::Oracle => solve_nnen(state, hyper, x, cfg).map(|r| r.y),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Snn => "snn",
            Solver::Aunn => "aunn",
            Solver::Oracle => "oracle",
        })
    }
}

impl FromStr for Solver {
    type Err = NsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snn" => Ok(Solver::Snn),
            "aunn" => Ok(Solver::Aunn),
            "oracle" => Ok(Solver::Oracle),
            other => Err(NsmError::InvalidArgument(format!(
                "unknown solver {other:?} (expected snn, aunn or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub nsm_cost: f64,
    pub active_fraction: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    /// Checkpoint period in steps; 0 logs only the initial and final state.
    pub checkpoint_every: usize,
    /// Upper bound on the probe subset used for cost monitoring.
    pub probe_size: usize,
    pub seed: u64,
}

/// Probe subset indices: all samples when the dataset is small enough,
/// otherwise a seeded draw without replacement, in increasing order.
pub fn probe_indices(t: usize, probe_size: usize, seed: u64) -> Vec<usize> {
    if probe_size >= t {
        return (0..t).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROBE_STREAM);
    let mut idx = sample(&mut rng, t, probe_size).into_vec();
    idx.sort_unstable();
    idx
}

/// Solves every probe sample with the current weights, in parallel, keeping
/// sample order.
pub fn solve_all(
    solver: Solver,
    state: &SynapticState,
    hyper: &Hyperparams,
    data: &Dataset,
    cfg: &SolverConfig,
) -> Result<Vec<OutputRates>> {
    (0..data.len())
        .into_par_iter()
        .map(|t| solver.solve(state, hyper, data.sample(t), cfg))
        .collect()
}

/// Online training: each step draws a sample uniformly with replacement,
/// solves for its output and applies the local updates.
pub fn train(
    data: &Dataset,
    hyper: &Hyperparams,
    schedule: &LearningSchedule,
    solver: Solver,
    init: SynapticState,
    opts: &TrainOptions,
    cfg: &SolverConfig,
) -> Result<(SynapticState, TrainLog)> {
    hyper.validate()?;
    schedule.validate()?;
    cfg.validate()?;
    if opts.steps == 0 {
        return Err(NsmError::InvalidArgument("steps must be >= 1".into()));
    }
    if init.n() != data.dim() {
        return Err(NsmError::DimensionMismatch {
            what: "W columns vs sample dimension",
            expected: data.dim(),
            got: init.n(),
        });
    }
    init.check_symmetric()?;
    init.check_thresholds(hyper.lambda2)?;

    let probe = data.select(&probe_indices(data.len(), opts.probe_size, opts.seed))?;
    let checkpoint = |state: &SynapticState, step: usize, eta: f64| -> Result<Checkpoint> {
        let y = solve_all(solver, state, hyper, &probe, cfg)?;
        let cp = Checkpoint {
            step,
            nsm_cost: eval_nsm_cost(&probe, &y, hyper)?,
            active_fraction: active_fraction(&y, 0.0),
            eta,
        };
        debug!("checkpoint {cp:?}");
        Ok(cp)
    };
    let abort = |step: usize| move |e: NsmError| NsmError::Training {
        step,
        source: Box::new(e),
    };

    let mut state = init;
    let mut log = TrainLog::default();
    log.checkpoints.push(checkpoint(&state, 0, schedule.eta_at(0)).map_err(abort(0))?);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(SAMPLING_STREAM);
    for step in 1..=opts.steps {
        let eta = schedule.eta_at(step - 1);
        let t = rng.random_range(0..data.len());
        let x = data.sample(t);
        let y = solver.solve(&state, hyper, x, cfg).map_err(abort(step))?;
        update_in_place(&mut state, &y, x, eta, hyper.alpha).map_err(abort(step))?;
        state.check_symmetric().map_err(abort(step))?;
        state.check_thresholds(hyper.lambda2).map_err(abort(step))?;

        let periodic = opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0;
        if periodic || step == opts.steps {
            log.checkpoints.push(checkpoint(&state, step, eta).map_err(abort(step))?);
        }
    }
    Ok((state, log))
}

/// Fraction of `(sample, unit)` entries strictly above `threshold`.
pub fn active_fraction(y: &[OutputRates], threshold: f64) -> f64 {
    let total: usize = y.iter().map(OutputRates::len).sum();
    if total == 0 {
        return 0.0;
    }
    let active = y
        .iter()
        .flat_map(|r| r.as_array().iter())
        .filter(|v| **v > threshold)
        .count();
    active as f64 / total as f64
}

/// Empirical CDF of all output entries as `(value, P[Y <= value])` pairs at
/// each distinct value.
pub fn empirical_cdf(y: &[OutputRates]) -> Vec<(f64, f64)> {
    let mut values: Vec<f64> = y.iter().flat_map(|r| r.as_array().iter().cloned()).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}
