//! Ground-truth solver for the per-sample subproblem `min_{y >= 0} h(y)`, a
//! nonnegative elastic net, plus a KKT certificate.
//!
//! The primary route is cyclic coordinate descent with the closed-form
//! coordinate minimizer. Projected gradient descent is kept alongside as a
//! second, unrelated route used for cross-checking.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{NsmError, Result};
use crate::types::{Hyperparams, OutputRates, SolverConfig, SynapticState};

/// Smallest eigenvalue of `M` tolerated with only a warning.
pub const PSD_WARN_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub y: OutputRates,
    /// Sweeps (coordinate descent) or steps (projected gradient) performed.
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

pub(crate) fn min_eigenvalue(m: &Array2<f64>) -> Result<f64> {
    let k = m.nrows();
    let dm = DMatrix::from_fn(k, k, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, 10_000)
        .ok_or_else(|| NsmError::Eigen("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn check_psd(m: &Array2<f64>) -> Result<()> {
    let lo = min_eigenvalue(m)?;
    if lo < PSD_WARN_FLOOR {
        return Err(NsmError::InvalidState(format!(
            "M is not positive semidefinite (smallest eigenvalue {lo:e})"
        )));
    }
    if lo < 0.0 {
        warn!("M has a slightly negative eigenvalue {lo:e}; solving anyway");
    }
    Ok(())
}

/// Cyclic coordinate descent from `y = 0`. `on_sweep` sees the iterate after
/// every full sweep.
pub(crate) fn coordinate_descent(
    c: &Array1<f64>,
    m: &Array2<f64>,
    hyper: &Hyperparams,
    thresholds: &Array1<f64>,
    max_sweeps: usize,
    tol: f64,
    mut on_sweep: impl FnMut(&Array1<f64>),
) -> (Array1<f64>, usize, bool) {
    let k = c.len();
    let mut y = Array1::<f64>::zeros(k);
    for sweep in 1..=max_sweeps {
        let mut max_change = 0.0f64;
        for i in 0..k {
            let row = m.row(i);
            let mut lateral = 0.0;
            for j in 0..k {
                if j != i {
                    lateral += row[j] * y[j];
                }
            }
            let next = ((c[i] - hyper.lambda1 - lateral) / thresholds[i]).max(0.0);
            max_change = max_change.max((next - y[i]).abs());
            y[i] = next;
        }
        on_sweep(&y);
        if max_change < tol {
            return (y, sweep, true);
        }
    }
    (y, max_sweeps, false)
}

fn kkt_from_drive(c: &Array1<f64>, m: &Array2<f64>, hyper: &Hyperparams, y: ArrayView1<'_, f64>) -> f64 {
    let my = m.dot(&y);
    let mut worst = 0.0f64;
    for i in 0..y.len() {
        let g = -2.0 * c[i] + 2.0 * my[i] + 2.0 * hyper.lambda1 + 2.0 * hyper.lambda2 * y[i];
        let violation = if y[i] > 0.0 { g.abs() } else { (-g).max(0.0) };
        worst = worst.max(violation);
    }
    worst
}

/// Solves `min_{y >= 0} h(y)` for one input sample by cyclic coordinate
/// descent, stopping once the largest coordinate change in a sweep drops
/// below `cfg.tol` or after `cfg.max_iters` sweeps.
pub fn solve_nnen(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<OracleResult> {
    let thresholds = state.check_thresholds(hyper.lambda2)?;
    check_psd(&state.m)?;
    let c = state.drive(x, hyper.alpha)?;
    let (y, iterations, converged) =
        coordinate_descent(&c, &state.m, hyper, &thresholds, cfg.max_iters, cfg.tol, |_| {});
    let kkt_residual = kkt_from_drive(&c, &state.m, hyper, y.view());
    Ok(OracleResult {
        y: OutputRates::from_nonneg_unchecked(y),
        iterations,
        kkt_residual,
        converged,
    })
}

/// Largest violation of the first-order optimality conditions of `h` at `y`:
/// `|dh/dy_i|` on the support, `max(0, -dh/dy_i)` at zero coordinates (with
/// the `+2 lambda1` one-sided subgradient).
pub fn kkt_residual(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    y: &OutputRates,
) -> Result<f64> {
    state.check_output_len(y)?;
    let c = state.drive(x, hyper.alpha)?;
    Ok(kkt_from_drive(&c, &state.m, hyper, y.view()))
}

/// Projected gradient descent with the fixed step
/// `1 / (2 (lambda2 + max_i M_ii + max_i sum_j |Mbar_ij|))`, run for exactly
/// `steps` iterations from `y = 0`.
pub fn solve_projected_gradient(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    steps: usize,
) -> Result<OracleResult> {
    state.check_thresholds(hyper.lambda2)?;
    let c = state.drive(x, hyper.alpha)?;
    let k = state.k();
    let m = &state.m;
    let max_diag = m.diag().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_offdiag_row = (0..k)
        .map(|i| (0..k).filter(|&j| j != i).map(|j| m[[i, j]].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let step = 1.0 / (2.0 * (hyper.lambda2 + max_diag + max_offdiag_row));
    let mut y = Array1::<f64>::zeros(k);
    for _ in 0..steps {
        let my = m.dot(&y);
        for i in 0..k {
            let g = -2.0 * c[i] + 2.0 * my[i] + 2.0 * hyper.lambda1 + 2.0 * hyper.lambda2 * y[i];
            y[i] = (y[i] - step * g).max(0.0);
        }
    }
    let kkt_residual = kkt_from_drive(&c, m, hyper, y.view());
    Ok(OracleResult {
        y: OutputRates::from_nonneg_unchecked(y),
        iterations: steps,
        kkt_residual,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::sample_instance;
    use crate::objective::{eval_h, h_from_drive, relative_error};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(c: f64, m: f64) -> SynapticState {
        SynapticState::new(array![[c]], array![[m]], array![0.0]).unwrap()
    }

    #[test]
    fn scalar_closed_form() {
        let hyper = Hyperparams::new(0.0, 0.3, 0.1).unwrap();
        let s = scalar(1.3, 1.0);
        let r = solve_nnen(&s, &hyper, array![1.0].view(), &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(r.y.as_array()[0], 1.0 / 1.1, epsilon = 1e-15);
        // first sweep lands on the minimizer, second sweep confirms
        assert_eq!(r.iterations, 2);
        assert!(r.converged);
        assert!(r.kkt_residual <= 1e-12);
        let y = OutputRates::from_vec(vec![1.0 / 1.1]).unwrap();
        assert!(kkt_residual(&s, &hyper, array![1.0].view(), &y).unwrap() <= 1e-12);
    }

    #[test]
    fn subthreshold_drive_gives_zero() {
        let hyper = Hyperparams::new(0.0, 0.5, 0.1).unwrap();
        let s = SynapticState::new(
            array![[0.2], [0.5], [-1.0]],
            array![[1.0, 0.2, 0.1], [0.2, 1.0, 0.3], [0.1, 0.3, 1.0]],
            Array1::zeros(3),
        )
        .unwrap();
        let r = solve_nnen(&s, &hyper, array![1.0].view(), &SolverConfig::default()).unwrap();
        assert_eq!(r.y, OutputRates::zeros(3));
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert_eq!(kkt_residual(&s, &hyper, array![1.0].view(), &OutputRates::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn two_unit_interior_solution() {
        // Oracle: M y = c with M = [[1, .5], [.5, 1]], c = (2, 2) gives y = (4/3, 4/3).
        let m = array![[1.0, 0.5], [0.5, 1.0]];
        let det = 1.0 - 0.25;
        let expected = [(2.0 * 1.0 - 0.5 * 2.0) / det, (1.0 * 2.0 - 0.5 * 2.0) / det];
        assert!(expected.iter().all(|v| *v > 0.0));
        let s = SynapticState::new(array![[2.0], [2.0]], m, Array1::zeros(2)).unwrap();
        let hyper = Hyperparams::new(0.0, 0.0, 0.0).unwrap();
        let r = solve_nnen(&s, &hyper, array![1.0].view(), &SolverConfig::default()).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(r.y.as_array()[i], expected[i], epsilon = 1e-9);
            assert_abs_diff_eq!(r.y.as_array()[i], 4.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_bad_thresholds_and_negative_y() {
        let hyper = Hyperparams::new(0.0, 0.0, 0.0).unwrap();
        let s = scalar(1.0, 0.0);
        assert!(matches!(
            solve_nnen(&s, &hyper, array![1.0].view(), &SolverConfig::default()),
            Err(NsmError::InvalidState(_))
        ));
        assert!(OutputRates::from_vec(vec![-1.0]).is_err());
    }

    #[test]
    fn rejects_indefinite_m() {
        let hyper = Hyperparams::new(0.0, 0.0, 0.1).unwrap();
        let s = SynapticState::new(array![[1.0], [1.0]], array![[1.0, 2.0], [2.0, 1.0]], Array1::zeros(2)).unwrap();
        assert!(matches!(
            solve_nnen(&s, &hyper, array![1.0].view(), &SolverConfig::default()),
            Err(NsmError::InvalidState(_))
        ));
    }

    #[test]
    fn sweeps_never_increase_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [2, 5, 16, 40] {
            for _ in 0..10 {
                let inst = sample_instance(&mut rng, k);
                let c = inst.state.drive(array![1.0].view(), inst.hyper.alpha).unwrap();
                let th = inst.state.thresholds(inst.hyper.lambda2);
                let mut prev = 0.0; // h at the start point y = 0
                let mut ok = true;
                coordinate_descent(&c, &inst.state.m, &inst.hyper, &th, 10_000, 1e-12, |y| {
                    let h = h_from_drive(&c, &inst.state.m, &inst.hyper, y.view());
                    ok &= h <= prev + 1e-12;
                    prev = h;
                });
                assert!(ok, "h increased during a sweep (k = {k})");
            }
        }
    }

    #[test]
    fn oracle_beats_zero_and_projected_gradient_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SolverConfig::default();
        for k in [1, 3, 8] {
            for _ in 0..5 {
                let inst = sample_instance(&mut rng, k);
                let x = array![1.0];
                let r = solve_nnen(&inst.state, &inst.hyper, x.view(), &cfg).unwrap();
                let h_opt = eval_h(&inst.state, &inst.hyper, x.view(), &r.y).unwrap();
                let h_zero = eval_h(&inst.state, &inst.hyper, x.view(), &OutputRates::zeros(k)).unwrap();
                assert!(h_opt <= h_zero);
                if r.y.view().dot(&r.y.view()) > 0.0 {
                    let pg = solve_projected_gradient(&inst.state, &inst.hyper, x.view(), 20_000).unwrap();
                    assert!(relative_error(&pg.y, &r.y).unwrap() < 1e-6);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn argmin_invariant_under_joint_scaling(seed in 0u64..100_000, gamma in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 1 + (seed % 12) as usize;
            let inst = sample_instance(&mut rng, k);
            let cfg = SolverConfig { tol: 1e-13, ..SolverConfig::default() };
            let x = array![1.0];
            let base = solve_nnen(&inst.state, &inst.hyper, x.view(), &cfg).unwrap();

            let mut scaled = inst.state.clone();
            scaled.w.mapv_inplace(|v| v * gamma);
            scaled.b.mapv_inplace(|v| v * gamma);
            scaled.m.mapv_inplace(|v| v * gamma);
            let hyper = Hyperparams::new(inst.hyper.alpha, inst.hyper.lambda1 * gamma, inst.hyper.lambda2 * gamma).unwrap();
            let r = solve_nnen(&scaled, &hyper, x.view(), &cfg).unwrap();
            let diff = (r.y.as_array() - base.y.as_array()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let scale = base.y.as_array().iter().fold(1.0f64, |a, v| a.max(*v));
            prop_assert!(diff <= 1e-8 * scale, "diff {}", diff);
        }
    }
}
