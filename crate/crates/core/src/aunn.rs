//! Analogue rate dynamics
//!
//! ```text
//! du_i/dtau = -u_i + c_i - (Mbar y)_i,   y_i = g_i(u_i)
//! ```
//!
//! integrated with forward Euler from `u(0) = 0`. The fixed point is the
//! minimizer of `h`.

use ndarray::{Array1, ArrayView1};

use crate::error::{NsmError, Result};
use crate::objective::{activation_unchecked, h_from_drive};
use crate::types::{Hyperparams, OutputRates, SolverConfig, SynapticState};

pub(crate) const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct AunnTrace {
    /// Internal state at `tau_end`.
    pub u: Array1<f64>,
    pub y: OutputRates,
    /// `h` sampled every `cfg.h_sample_every` steps, starting at `tau = 0`
    /// and always including the final step. `None` when sampling is off.
    pub h_series: Option<Vec<f64>>,
}

pub fn run_aunn(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<AunnTrace> {
    cfg.validate()?;
    let thresholds = state.check_thresholds(hyper.lambda2)?;
    let c = state.drive(x, hyper.alpha)?;
    let m_bar = state.m_bar();
    let k = state.k();
    let dt = cfg.dtau;
    let steps = cfg.steps();
    let every = cfg.h_sample_every;

    let mut u = Array1::<f64>::zeros(k);
    let mut y = Array1::from_shape_fn(k, |i| activation_unchecked(u[i], hyper.lambda1, thresholds[i]));
    let mut h_series = (every > 0).then(|| vec![h_from_drive(&c, &state.m, hyper, y.view())]);

    for step in 1..=steps {
        let lateral = m_bar.dot(&y);
        for i in 0..k {
            u[i] += dt * (-u[i] + c[i] - lateral[i]);
            if !(u[i].abs() <= DIVERGENCE_LIMIT) {
                return Err(NsmError::Divergence {
                    solver: "rate dynamics",
                    step,
                    magnitude: u[i].abs(),
                });
            }
        }
        for i in 0..k {
            y[i] = activation_unchecked(u[i], hyper.lambda1, thresholds[i]);
        }
        if let Some(series) = h_series.as_mut() {
            if step % every == 0 || step == steps {
                series.push(h_from_drive(&c, &state.m, hyper, y.view()));
            }
        }
    }

    Ok(AunnTrace {
        u,
        y: OutputRates::from_nonneg_unchecked(y),
        h_series,
    })
}

/// `max_i |-u_i + c_i - (Mbar y)_i|` at the final state of a trace.
pub fn aunn_fixed_point_residual(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    trace: &AunnTrace,
) -> Result<f64> {
    if trace.u.len() != state.k() {
        return Err(NsmError::DimensionMismatch {
            what: "trace dimension",
            expected: state.k(),
            got: trace.u.len(),
        });
    }
    state.check_output_len(&trace.y)?;
    let c = state.drive(x, hyper.alpha)?;
    let lateral = state.m_bar().dot(trace.y.as_array());
    Ok((0..state.k())
        .map(|i| (-trace.u[i] + c[i] - lateral[i]).abs())
        .fold(0.0, f64::max))
}
