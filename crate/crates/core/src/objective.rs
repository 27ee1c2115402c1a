//! The similarity-matching cost, the per-sample objective `h` and its
//! companions.
//!
//! For one input `x` with drive `c = W x - alpha b` the per-sample objective is
//!
//! ```text
//! h(y) = -2 y'c + y'M y + 2 lambda1 |y|_1 + lambda2 |y|_2^2,   y >= 0
//! ```
//!
//! and every solver in this crate (oracle, rate dynamics, spiking network)
//! approximates its minimizer.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{NsmError, Result};
use crate::types::{Dataset, Hyperparams, OutputRates, SynapticState};

/// Rectified-linear activation of a rate unit.
///
/// Zero up to `lambda1`, then slope `1 / (lambda2 + m_ii)`.
pub fn activation(u: f64, lambda1: f64, lambda2: f64, m_ii: f64) -> Result<f64> {
    let denom = lambda2 + m_ii;
    if !(denom > 0.0) {
        return Err(NsmError::InvalidState(format!(
            "activation denominator lambda2 + M_ii = {denom} is not positive"
        )));
    }
    Ok(activation_unchecked(u, lambda1, denom))
}

#[inline]
pub(crate) fn activation_unchecked(u: f64, lambda1: f64, threshold: f64) -> f64 {
    if u <= lambda1 {
        0.0
    } else {
        (u - lambda1) / threshold
    }
}

/// `h` evaluated from a precomputed drive; shared by the solvers.
pub(crate) fn h_from_drive(
    c: &Array1<f64>,
    m: &Array2<f64>,
    hyper: &Hyperparams,
    y: ArrayView1<'_, f64>,
) -> f64 {
    let my = m.dot(&y);
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    let l2 = y.dot(&y);
    -2.0 * y.dot(c) + y.dot(&my) + 2.0 * hyper.lambda1 * l1 + hyper.lambda2 * l2
}

/// Per-sample objective `h` at output `y`.
pub fn eval_h(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    y: &OutputRates,
) -> Result<f64> {
    state.check_output_len(y)?;
    let c = state.drive(x, hyper.alpha)?;
    Ok(h_from_drive(&c, &state.m, hyper, y.view()))
}

/// Per-sample term of the min-max objective:
/// `Tr W'W - 1/2 Tr M'M - |b|^2 + h(y_opt)`.
pub fn eval_l(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    y_opt: &OutputRates,
) -> Result<f64> {
    let h = eval_h(state, hyper, x, y_opt)?;
    let ww: f64 = state.w.iter().map(|v| v * v).sum();
    let mm: f64 = state.m.iter().map(|v| v * v).sum();
    let bb = state.b.dot(&state.b);
    Ok(ww - 0.5 * mm - bb + h)
}

fn stack_outputs(y: &[OutputRates]) -> Result<Array2<f64>> {
    let k = y.first().map(OutputRates::len).ok_or(NsmError::EmptyDataset)?;
    let mut out = Array2::zeros((y.len(), k));
    for (t, yt) in y.iter().enumerate() {
        if yt.len() != k {
            return Err(NsmError::DimensionMismatch {
                what: "output dimension",
                expected: k,
                got: yt.len(),
            });
        }
        out.row_mut(t).assign(yt.as_array());
    }
    Ok(out)
}

/// Regularized nonnegative similarity matching cost of outputs `y` for
/// inputs `x`.
pub fn eval_nsm_cost(x: &Dataset, y: &[OutputRates], hyper: &Hyperparams) -> Result<f64> {
    if y.len() != x.len() {
        return Err(NsmError::DimensionMismatch {
            what: "number of outputs",
            expected: x.len(),
            got: y.len(),
        });
    }
    let xm = x.as_matrix();
    let ym = stack_outputs(y)?;
    let t = x.len() as f64;
    let gx = xm.dot(&xm.t());
    let gy = ym.dot(&ym.t());
    let a2 = hyper.alpha * hyper.alpha;
    let mut sq = 0.0;
    for (a, b) in gx.iter().zip(gy.iter()) {
        let d = a - b - a2;
        sq += d * d;
    }
    let l1: f64 = ym.iter().map(|v| v.abs()).sum();
    let l2: f64 = ym.iter().map(|v| v * v).sum();
    Ok(sq / (2.0 * t * t) + 2.0 * hyper.lambda1 * l1 / t + hyper.lambda2 * l2 / t)
}

/// The output-independent part of the cost: `eval_nsm_cost` equals the
/// dataset average of `eval_l` at [`batch_optima`] plus this constant.
///
/// `alpha^4/2 + 1/(2T^2) sum (x_t'x_s)^2 - alpha^2/T^2 sum x_t'x_s`
pub fn nsm_input_constant(x: &Dataset, alpha: f64) -> f64 {
    let xm = x.as_matrix();
    let t = x.len() as f64;
    let gx = xm.dot(&xm.t());
    let sq: f64 = gx.iter().map(|v| v * v).sum();
    let lin: f64 = gx.sum();
    let a2 = alpha * alpha;
    0.5 * a2 * a2 + sq / (2.0 * t * t) - a2 * lin / (t * t)
}

/// Optimal synaptic variables for a fixed set of outputs:
/// `W* = <y x'>`, `M* = <y y'>`, `b* = alpha <y>`.
pub fn batch_optima(x: &Dataset, y: &[OutputRates], alpha: f64) -> Result<SynapticState> {
    if y.is_empty() {
        return Err(NsmError::EmptyDataset);
    }
    if y.len() != x.len() {
        return Err(NsmError::DimensionMismatch {
            what: "number of outputs",
            expected: x.len(),
            got: y.len(),
        });
    }
    let k = y[0].len();
    let n = x.dim();
    let mut w = Array2::<f64>::zeros((k, n));
    let mut m = Array2::<f64>::zeros((k, k));
    let mut ysum = Array1::<f64>::zeros(k);
    for (xt, yt) in x.iter().zip(y) {
        if yt.len() != k {
            return Err(NsmError::DimensionMismatch {
                what: "output dimension",
                expected: k,
                got: yt.len(),
            });
        }
        let yv = yt.as_array();
        for i in 0..k {
            let yi = yv[i];
            for j in 0..n {
                w[[i, j]] += yi * xt[j];
            }
            for j in 0..k {
                m[[i, j]] += yi * yv[j];
            }
        }
        ysum += yv;
    }
    let inv_t = 1.0 / y.len() as f64;
    w.mapv_inplace(|v| v * inv_t);
    m.mapv_inplace(|v| v * inv_t);
    let b = ysum.mapv(|v| v * (alpha * inv_t));
    SynapticState::new(w, m, b)
}

/// `|y - y_ref|_2 / |y_ref|_2`.
pub fn relative_error(y: &OutputRates, y_ref: &OutputRates) -> Result<f64> {
    if y.len() != y_ref.len() {
        return Err(NsmError::DimensionMismatch {
            what: "output dimension",
            expected: y_ref.len(),
            got: y.len(),
        });
    }
    let norm_ref = y_ref.view().dot(&y_ref.view()).sqrt();
    if norm_ref == 0.0 {
        return Err(NsmError::ZeroReference);
    }
    let diff = y.as_array() - y_ref.as_array();
    Ok(diff.dot(&diff).sqrt() / norm_ref)
}
