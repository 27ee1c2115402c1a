//! Domain types shared by every solver.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{NsmError, Result};

/// Tolerance used when checking that `M` is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Cost-function constants: `alpha` sets the similarity offset, `lambda1`
/// and `lambda2` weight the l1 and squared-l2 penalties on the outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Hyperparams {
    pub fn new(alpha: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        let h = Hyperparams {
            alpha,
            lambda1,
            lambda2,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(NsmError::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Nonnegative output activities (firing rates) of the `k` units.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRates(Array1<f64>);

impl OutputRates {
    pub fn new(y: Array1<f64>) -> Result<Self> {
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(NsmError::InvalidArgument(format!(
                "output rate {i} must be finite and nonnegative, got {v}"
            )));
        }
        Ok(OutputRates(y))
    }

    pub fn from_vec(y: Vec<f64>) -> Result<Self> {
        Self::new(Array1::from(y))
    }

    pub fn zeros(k: usize) -> Self {
        OutputRates(Array1::zeros(k))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub(crate) fn from_nonneg_unchecked(y: Array1<f64>) -> Self {
        debug_assert!(y.iter().all(|v| *v >= 0.0));
        OutputRates(y)
    }
}

/// An ordered collection of `T` input vectors of dimension `n`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
}

impl Dataset {
    pub fn new(samples: Array2<f64>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(NsmError::EmptyDataset);
        }
        if samples.ncols() == 0 {
            return Err(NsmError::InvalidArgument(
                "samples must have dimension >= 1".into(),
            ));
        }
        if let Some(t) = samples
            .axis_iter(Axis(0))
            .position(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(NsmError::InvalidArgument(format!(
                "sample {t} has a non-finite entry"
            )));
        }
        Ok(Dataset { samples })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map(Vec::len).ok_or(NsmError::EmptyDataset)?;
        let mut flat = Vec::with_capacity(rows.len() * n);
        for row in rows {
            if row.len() != n {
                return Err(NsmError::DimensionMismatch {
                    what: "sample dimension",
                    expected: n,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let samples = Array2::from_shape_vec((rows.len(), n), flat)
            .expect("shape checked above");
        Self::new(samples)
    }

    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Sample dimension `n`.
    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, t: usize) -> ArrayView1<'_, f64> {
        self.samples.row(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.samples.axis_iter(Axis(0))
    }

    pub fn as_matrix(&self) -> &Array2<f64> {
        &self.samples
    }

    /// A new dataset made of the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Dataset::new(self.samples.select(Axis(0), indices))
    }
}

/// Learned parameters: feedforward `w` (k x n), lateral `m` (k x k, the
/// diagonal acts as firing threshold / gain) and bias weights `b` (k).
#[derive(Debug, Clone, PartialEq)]
pub struct SynapticState {
    pub w: Array2<f64>,
    pub m: Array2<f64>,
    pub b: Array1<f64>,
}

impl SynapticState {
    /// Builds a state, rejecting inconsistent shapes or an asymmetric `m`.
    pub fn new(w: Array2<f64>, m: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        let k = w.nrows();
        if k == 0 || w.ncols() == 0 {
            return Err(NsmError::InvalidArgument(
                "W must be at least 1 x 1".into(),
            ));
        }
        if m.nrows() != k || m.ncols() != k {
            return Err(NsmError::DimensionMismatch {
                what: "M rows/cols",
                expected: k,
                got: if m.nrows() != k { m.nrows() } else { m.ncols() },
            });
        }
        if b.len() != k {
            return Err(NsmError::DimensionMismatch {
                what: "b length",
                expected: k,
                got: b.len(),
            });
        }
        let s = SynapticState { w, m, b };
        s.check_symmetric()?;
        Ok(s)
    }

    /// Number of output units `k`.
    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    /// Input dimension `n`.
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    /// Off-diagonal part of `M`. Always derived, never stored.
    pub fn m_bar(&self) -> Array2<f64> {
        let mut m = self.m.clone();
        m.diag_mut().fill(0.0);
        m
    }

    /// Per-unit thresholds `lambda2 + M_ii`.
    pub fn thresholds(&self, lambda2: f64) -> Array1<f64> {
        self.m.diag().mapv(|d| d + lambda2)
    }

    /// Fails unless every `lambda2 + M_ii` is strictly positive.
    pub fn check_thresholds(&self, lambda2: f64) -> Result<Array1<f64>> {
        let th = self.thresholds(lambda2);
        if let Some(i) = th.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(NsmError::InvalidState(format!(
                "threshold lambda2 + M_{i}{i} = {} is not strictly positive",
                th[i]
            )));
        }
        Ok(th)
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let k = self.k();
        for i in 0..k {
            for j in (i + 1)..k {
                let d = (self.m[[i, j]] - self.m[[j, i]]).abs();
                if !(d <= SYMMETRY_TOL) {
                    return Err(NsmError::InvalidState(format!(
                        "M is not symmetric at ({i}, {j}): |M_ij - M_ji| = {d:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Constant per-unit drive `c = W x - alpha b`.
    pub fn drive(&self, x: ArrayView1<'_, f64>, alpha: f64) -> Result<Array1<f64>> {
        if x.len() != self.n() {
            return Err(NsmError::DimensionMismatch {
                what: "input sample dimension",
                expected: self.n(),
                got: x.len(),
            });
        }
        let mut c = self.w.dot(&x);
        c.scaled_add(-alpha, &self.b);
        Ok(c)
    }

    pub(crate) fn check_output_len(&self, y: &OutputRates) -> Result<()> {
        if y.len() != self.k() {
            return Err(NsmError::DimensionMismatch {
                what: "output dimension",
                expected: self.k(),
                got: y.len(),
            });
        }
        Ok(())
    }
}

/// Early stopping for the spiking solver, based on rate stability between
/// two consecutive windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: f64,
    pub tol: f64,
}

/// What happens to the membrane potential of a unit that fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetRule {
    /// `V -= threshold`: the part of the step integrated past the crossing
    /// is kept, so a discrete step resets to 0 at the crossing instant.
    #[default]
    Subtract,
    /// `V = 0`: discards the overshoot, which biases rates low by roughly
    /// `dtau * rate / 2`.
    Zero,
}

/// Integration horizon, step and convergence settings shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tau_end: f64,
    pub dtau: f64,
    /// Sweep cap for the coordinate-descent oracle.
    pub max_iters: usize,
    /// Convergence tolerance for the oracle (max coordinate change).
    pub tol: f64,
    pub seed: u64,
    /// Record `h` every this many Euler steps in the rate solver (0 disables).
    pub h_sample_every: usize,
    pub early_stop: Option<EarlyStop>,
    pub reset: ResetRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau_end: 500.0,
            dtau: 0.01,
            max_iters: 100_000,
            tol: 1e-10,
            seed: 0,
            h_sample_every: 100,
            early_stop: None,
            reset: ResetRule::Subtract,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_end > 0.0 && self.tau_end.is_finite()) {
            return Err(NsmError::InvalidArgument(format!(
                "tau_end must be positive, got {}",
                self.tau_end
            )));
        }
        if !(self.dtau > 0.0 && self.dtau < self.tau_end) {
            return Err(NsmError::InvalidArgument(format!(
                "dtau must lie in (0, tau_end), got {}",
                self.dtau
            )));
        }
        if self.max_iters == 0 {
            return Err(NsmError::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(NsmError::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if let Some(es) = self.early_stop {
            if !(es.window > 0.0 && 2.0 * es.window < self.tau_end && es.tol >= 0.0) {
                return Err(NsmError::InvalidArgument(format!(
                    "early-stop window {} must be in (0, tau_end/2)",
                    es.window
                )));
            }
        }
        Ok(())
    }

    /// Number of Euler steps needed to reach `tau_end`.
    pub fn steps(&self) -> usize {
        (self.tau_end / self.dtau).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn output_rates_reject_negative() {
        assert!(OutputRates::from_vec(vec![0.0, -1e-300]).is_err());
        assert!(OutputRates::from_vec(vec![0.0, f64::NAN]).is_err());
        assert!(OutputRates::from_vec(vec![0.0, 2.0]).is_ok());
    }

    #[test]
    fn dataset_rejects_ragged_and_empty() {
        assert!(matches!(
            Dataset::from_rows(&[]),
            Err(NsmError::EmptyDataset)
        ));
        assert!(Dataset::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let d = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert_eq!(d.sample(1), array![3.0, 4.0]);
    }

    #[test]
    fn state_shape_and_symmetry_checks() {
        let w = Array2::zeros((2, 3));
        assert!(SynapticState::new(w.clone(), Array2::eye(3), Array1::zeros(2)).is_err());
        assert!(SynapticState::new(w.clone(), Array2::eye(2), Array1::zeros(3)).is_err());
        let asym = array![[1.0, 0.5], [0.4, 1.0]];
        assert!(SynapticState::new(w.clone(), asym, Array1::zeros(2)).is_err());
        let s = SynapticState::new(w, array![[1.0, 0.5], [0.5, 2.0]], Array1::zeros(2)).unwrap();
        assert_eq!(s.m_bar(), array![[0.0, 0.5], [0.5, 0.0]]);
        assert_eq!(s.thresholds(0.1), array![1.1, 2.1]);
    }

    #[test]
    fn thresholds_must_be_positive() {
        let s = SynapticState::new(
            Array2::zeros((2, 1)),
            array![[1.0, 0.0], [0.0, 0.0]],
            Array1::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            s.check_thresholds(0.0),
            Err(NsmError::InvalidState(_))
        ));
        assert!(s.check_thresholds(1e-3).is_ok());
    }

    #[test]
    fn drive_is_wx_minus_alpha_b() {
        let s = SynapticState::new(
            array![[1.0, 2.0], [0.0, 1.0]],
            Array2::eye(2),
            array![1.0, 2.0],
        )
        .unwrap();
        let c = s.drive(array![1.0, 1.0].view(), 0.5).unwrap();
        assert_eq!(c, array![2.5, 0.0]);
        assert!(s.drive(array![1.0].view(), 0.5).is_err());
    }

    #[test]
    fn solver_config_validation() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.steps(), 50_000);
        cfg.dtau = 600.0;
        assert!(cfg.validate().is_err());
        cfg = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
