//! Integrate-and-fire solver.
//!
//! Each unit is a perfect integrator `dV/dtau = I` that fires and resets
//! when `V` reaches `lambda2 + M_ii` (see [`ResetRule`]). The synaptic current relaxes toward the
//! constant drive `c_i - lambda1` and receives an impulse of `-Mbar_ij` for every
//! spike of unit `j`. Time-averaged spike counts estimate the minimizer of `h`.

use std::io::Write;

use ndarray::{Array1, ArrayView1};

use crate::aunn::DIVERGENCE_LIMIT;
use crate::error::{NsmError, Result};
use crate::types::{Hyperparams, OutputRates, ResetRule, SolverConfig, SynapticState};

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRecord {
    pub spike_counts: Vec<usize>,
    /// Per-unit spike times in increasing order, each in `(0, tau_end]`.
    pub spike_times: Vec<Vec<f64>>,
    pub tau_end: f64,
}

impl SpikeRecord {
    fn new(k: usize) -> Self {
        SpikeRecord {
            spike_counts: vec![0; k],
            spike_times: vec![Vec::new(); k],
            tau_end: 0.0,
        }
    }

    fn push(&mut self, unit: usize, tau: f64) {
        self.spike_counts[unit] += 1;
        self.spike_times[unit].push(tau);
    }

    pub fn total_spikes(&self) -> usize {
        self.spike_counts.iter().sum()
    }

    /// Spike counts divided by the elapsed time.
    pub fn rates(&self) -> Array1<f64> {
        self.spike_counts
            .iter()
            .map(|&n| n as f64 / self.tau_end)
            .collect()
    }

    /// Spikes of `unit` in the half-open window `(from, to]`.
    fn count_in(&self, unit: usize, from: f64, to: f64) -> usize {
        let times = &self.spike_times[unit];
        let lo = times.partition_point(|&t| t <= from);
        let hi = times.partition_point(|&t| t <= to);
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnTrace {
    pub record: SpikeRecord,
    pub y_tilde: OutputRates,
    pub v_final: Array1<f64>,
    pub i_final: Array1<f64>,
}

/// Simulates the spiking network for one input with forward Euler.
///
/// Per step: relax `I` toward the drive, apply the lateral impulses of the
/// units that spiked on the previous step, integrate `V`, then test
/// `V >= threshold` and reset. At most one spike per unit per step.
pub fn run_snn(
    state: &SynapticState,
    hyper: &Hyperparams,
    x: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<SnnTrace> {
    cfg.validate()?;
    let thresholds = state.check_thresholds(hyper.lambda2)?;
    let mut drive = state.drive(x, hyper.alpha)?;
    drive.mapv_inplace(|c| c - hyper.lambda1);
    let m_bar = state.m_bar();
    let k = state.k();
    let dt = cfg.dtau;
    let steps = cfg.steps();

    let mut v = vec![0.0; k];
    let mut current = drive.to_vec();
    let drive = drive.to_vec();
    let m_bar = m_bar.as_standard_layout().into_owned();
    let m_bar = m_bar.as_slice().expect("standard layout");
    let thresholds = thresholds.to_vec();
    let mut spiked: Vec<usize> = Vec::with_capacity(k);
    let mut next_spiked: Vec<usize> = Vec::with_capacity(k);
    let mut record = SpikeRecord::new(k);
    record.tau_end = cfg.tau_end;

    let stop_check = cfg.early_stop.map(|es| {
        let stride = ((es.window / dt).round() as usize).max(1);
        (es, stride)
    });

    for step in 1..=steps {
        let tau = step as f64 * dt;
        for (c, d) in current.iter_mut().zip(&drive) {
            *c += dt * (-*c + d);
        }
        for &j in &spiked {
            // Mbar is symmetric with zero diagonal, so row j is column j.
            let row = &m_bar[j * k..(j + 1) * k];
            for (c, m) in current.iter_mut().zip(row) {
                *c -= m;
            }
        }
        next_spiked.clear();
        for i in 0..k {
            let c = current[i];
            if !(c.abs() <= DIVERGENCE_LIMIT) {
                return Err(NsmError::Divergence {
                    solver: "spiking network",
                    step,
                    magnitude: c.abs(),
                });
            }
            v[i] += dt * c;
            if v[i] >= thresholds[i] {
                record.push(i, tau);
                match cfg.reset {
                    ResetRule::Subtract => v[i] -= thresholds[i],
                    ResetRule::Zero => v[i] = 0.0,
                }
                next_spiked.push(i);
            }
        }
        std::mem::swap(&mut spiked, &mut next_spiked);

        if let Some((es, stride)) = stop_check {
            if step % stride == 0 && tau > 2.0 * es.window && step < steps {
                record.tau_end = tau;
                if rate_stability(&record, es.window)? <= es.tol {
                    break;
                }
                record.tau_end = cfg.tau_end;
            }
        }
    }

    let y_tilde = OutputRates::from_nonneg_unchecked(record.rates());
    Ok(SnnTrace {
        record,
        y_tilde,
        v_final: Array1::from(v),
        i_final: Array1::from(current),
    })
}

/// Largest per-unit change in firing rate between the last `window` of the
/// record and the window before it.
pub fn rate_stability(record: &SpikeRecord, window: f64) -> Result<f64> {
    if !(window > 0.0 && window < record.tau_end / 2.0) {
        return Err(NsmError::InvalidArgument(format!(
            "window {window} must lie in (0, tau_end / 2 = {})",
            record.tau_end / 2.0
        )));
    }
    let end = record.tau_end;
    let mid = end - window;
    let start = end - 2.0 * window;
    Ok((0..record.spike_counts.len())
        .map(|u| {
            let last = record.count_in(u, mid, end) as f64 / window;
            let prev = record.count_in(u, start, mid) as f64 / window;
            (last - prev).abs()
        })
        .fold(0.0, f64::max))
}

/// Writes a spike raster as CSV, one row per spike ordered by unit then time.
pub fn write_raster_csv<W: Write>(record: &SpikeRecord, mut out: W) -> Result<()> {
    writeln!(out, "unit_index,spike_time")?;
    for (unit, times) in record.spike_times.iter().enumerate() {
        for t in times {
            writeln!(out, "{unit},{t:?}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::sample_accepted;
    use crate::objective::relative_error;
    use crate::types::EarlyStop;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(tau_end: f64, dtau: f64) -> SolverConfig {
        SolverConfig {
            tau_end,
            dtau,
            ..SolverConfig::default()
        }
    }

    fn scalar() -> (SynapticState, Hyperparams) {
        (
            SynapticState::new(array![[1.3]], array![[1.0]], array![0.0]).unwrap(),
            Hyperparams::new(0.0, 0.3, 0.1).unwrap(),
        )
    }

    #[test]
    fn negative_drive_never_spikes() {
        let s = SynapticState::new(
            array![[0.1], [0.2], [-3.0]],
            array![[1.0, 0.3, 0.2], [0.3, 1.0, 0.1], [0.2, 0.1, 1.0]],
            Array1::zeros(3),
        )
        .unwrap();
        let hyper = Hyperparams::new(0.0, 0.3, 0.1).unwrap();
        let tr = run_snn(&s, &hyper, array![1.0].view(), &cfg(100.0, 0.01)).unwrap();
        assert_eq!(tr.record.total_spikes(), 0);
        assert_eq!(tr.y_tilde, OutputRates::zeros(3));
    }

    #[test]
    fn scalar_rate_matches_fixed_point() {
        let (s, hyper) = scalar();
        let tr = run_snn(&s, &hyper, array![1.0].view(), &cfg(500.0, 0.01)).unwrap();
        let target = OutputRates::from_vec(vec![1.0 / 1.1]).unwrap();
        assert!(relative_error(&tr.y_tilde, &target).unwrap() <= 0.02);
        let rec = &tr.record;
        assert_eq!(rec.spike_counts[0], rec.spike_times[0].len());
        assert!(rec.spike_times[0].windows(2).all(|w| w[0] < w[1]));
        assert!(rec.spike_times[0].iter().all(|t| *t > 0.0 && *t <= 500.0));
    }

    #[test]
    fn zero_reset_loses_the_overshoot() {
        // I = 0.95, threshold 1.1: a crossing takes 11.58 steps of 0.1
        let s = SynapticState::new(array![[1.25]], array![[1.0]], array![0.0]).unwrap();
        let hyper = Hyperparams::new(0.0, 0.3, 0.1).unwrap();
        let mut c = cfg(500.0, 0.1);
        let sub = run_snn(&s, &hyper, array![1.0].view(), &c).unwrap();
        c.reset = ResetRule::Zero;
        let zero = run_snn(&s, &hyper, array![1.0].view(), &c).unwrap();
        let target = 0.95 / 1.1;
        let (rz, rs) = (zero.y_tilde.as_array()[0], sub.y_tilde.as_array()[0]);
        assert!((rs - target).abs() < 0.005);
        // every interspike interval rounds up to 12 steps
        assert!((rz - 1.0 / 1.2).abs() < 0.005);
    }

    #[test]
    fn membrane_stays_below_threshold_between_spikes() {
        let (s, hyper) = scalar();
        let tr = run_snn(&s, &hyper, array![1.0].view(), &cfg(20.0, 0.01)).unwrap();
        let imax = 1.0;
        assert!(tr.v_final[0] >= 0.0 && tr.v_final[0] < 1.1 + 0.01 * imax);
    }

    #[test]
    fn invalid_threshold_rejected() {
        let s = SynapticState::new(Array2::ones((1, 1)), array![[0.0]], array![0.0]).unwrap();
        let hyper = Hyperparams::new(0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            run_snn(&s, &hyper, array![1.0].view(), &cfg(1.0, 0.01)),
            Err(NsmError::InvalidState(_))
        ));
    }

    #[test]
    fn exploding_current_is_reported() {
        // Strong lateral excitation (negative Mbar) feeds back without bound.
        let s = SynapticState::new(
            array![[5.0], [5.0]],
            array![[0.01, -1e11], [-1e11, 0.01]],
            Array1::zeros(2),
        )
        .unwrap();
        let hyper = Hyperparams::new(0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            run_snn(&s, &hyper, array![1.0].view(), &cfg(500.0, 0.01)),
            Err(NsmError::Divergence { .. })
        ));
    }

    #[test]
    fn stability_of_silent_and_periodic_records() {
        let silent = SpikeRecord {
            spike_counts: vec![0, 0],
            spike_times: vec![vec![], vec![]],
            tau_end: 100.0,
        };
        assert_eq!(rate_stability(&silent, 10.0).unwrap(), 0.0);
        assert!(rate_stability(&silent, 50.0).is_err());
        assert!(rate_stability(&silent, 0.0).is_err());

        let period = 0.7;
        let times: Vec<f64> = (1..).map(|q| q as f64 * period).take_while(|t| *t <= 100.0).collect();
        let periodic = SpikeRecord {
            spike_counts: vec![times.len()],
            spike_times: vec![times],
            tau_end: 100.0,
        };
        assert!(rate_stability(&periodic, 20.0).unwrap() <= 2.0 / 20.0);
    }

    #[test]
    fn converged_rates_are_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in [4, 8] {
            let (inst, _) = sample_accepted(&mut rng, k, &SolverConfig::default(), 10_000).unwrap();
            let tr = run_snn(&inst.state, &inst.hyper, inst.x.view(), &cfg(500.0, 0.01)).unwrap();
            let max_rate = tr.y_tilde.as_array().iter().cloned().fold(0.0, f64::max);
            assert!(rate_stability(&tr.record, 100.0).unwrap() <= 0.05 * max_rate);
        }
    }

    #[test]
    fn early_stop_cuts_the_run_short() {
        let (s, hyper) = scalar();
        let mut c = cfg(500.0, 0.01);
        c.early_stop = Some(EarlyStop { window: 25.0, tol: 0.05 });
        let tr = run_snn(&s, &hyper, array![1.0].view(), &c).unwrap();
        assert!(tr.record.tau_end < 500.0);
        assert!((tr.y_tilde.as_array()[0] - 1.0 / 1.1).abs() < 0.05);
    }

    #[test]
    fn deterministic_and_raster_dump() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (inst, _) = sample_accepted(&mut rng, 5, &SolverConfig::default(), 10_000).unwrap();
        let a = run_snn(&inst.state, &inst.hyper, inst.x.view(), &cfg(50.0, 0.01)).unwrap();
        let b = run_snn(&inst.state, &inst.hyper, inst.x.view(), &cfg(50.0, 0.01)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_raster_csv(&a.record, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("unit_index,spike_time"));
        assert_eq!(text.lines().count(), 1 + a.record.total_spikes());
    }
}
