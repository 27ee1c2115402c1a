//! Tuning-curve analysis of unit responses along a ring manifold.

use ndarray::Array2;

use crate::error::{NsmError, Result};
use crate::types::OutputRates;

/// Summary of one unit's response as a function of angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitTuning {
    pub unit: usize,
    /// Angle of the strongest response; `None` for a silent unit.
    pub peak_angle: Option<f64>,
    /// `1 - |sum y e^{i theta}| / sum y`; `None` for a silent unit.
    pub circular_variance: Option<f64>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub units: Vec<UnitTuning>,
    /// For each angle, whether at least one unit responds.
    pub covered: Vec<bool>,
}

impl TuningReport {
    pub fn all_angles_covered(&self) -> bool {
        self.covered.iter().all(|c| *c)
    }

    /// Fraction of active units whose circular variance is below `threshold`.
    pub fn localized_fraction(&self, threshold: f64) -> f64 {
        let active: Vec<f64> = self.units.iter().filter_map(|u| u.circular_variance).collect();
        if active.is_empty() {
            return 0.0;
        }
        active.iter().filter(|v| **v < threshold).count() as f64 / active.len() as f64
    }
}

/// Responses as a `(angles x units)` matrix.
pub fn response_matrix(responses: &[OutputRates]) -> Result<Array2<f64>> {
    let k = responses.first().map(OutputRates::len).ok_or(NsmError::EmptyDataset)?;
    let mut out = Array2::zeros((responses.len(), k));
    for (t, y) in responses.iter().enumerate() {
        if y.len() != k {
            return Err(NsmError::DimensionMismatch {
                what: "output dimension",
                expected: k,
                got: y.len(),
            });
        }
        out.row_mut(t).assign(y.as_array());
    }
    Ok(out)
}

pub fn analyze_tuning(angles: &[f64], responses: &[OutputRates]) -> Result<TuningReport> {
    if angles.len() != responses.len() {
        return Err(NsmError::DimensionMismatch {
            what: "number of responses",
            expected: angles.len(),
            got: responses.len(),
        });
    }
    let r = response_matrix(responses)?;
    let units = (0..r.ncols())
        .map(|unit| {
            let col = r.column(unit);
            let total: f64 = col.sum();
            if total <= 0.0 {
                return UnitTuning {
                    unit,
                    peak_angle: None,
                    circular_variance: None,
                    active: false,
                };
            }
            let (mut re, mut im) = (0.0, 0.0);
            let mut peak = 0;
            for (t, &y) in col.iter().enumerate() {
                re += y * angles[t].cos();
                im += y * angles[t].sin();
                if y > col[peak] {
                    peak = t;
                }
            }
            let resultant = (re * re + im * im).sqrt() / total;
            UnitTuning {
                unit,
                peak_angle: Some(angles[peak]),
                circular_variance: Some((1.0 - resultant).max(0.0)),
                active: true,
            }
        })
        .collect();
    let covered = r.rows().into_iter().map(|row| row.iter().any(|v| *v > 0.0)).collect();
    Ok(TuningReport { units, covered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ring_angles;
    use approx::assert_abs_diff_eq;

    fn rates(v: Vec<f64>) -> OutputRates {
        OutputRates::from_vec(v).unwrap()
    }

    #[test]
    fn localized_uniform_and_silent_units() {
        let angles = ring_angles(8);
        // unit 0 responds at a single angle, unit 1 everywhere equally, unit 2 never
        let responses: Vec<OutputRates> = (0..8)
            .map(|t| rates(vec![if t == 3 { 2.0 } else { 0.0 }, 1.0, 0.0]))
            .collect();
        let rep = analyze_tuning(&angles, &responses).unwrap();
        assert_abs_diff_eq!(rep.units[0].circular_variance.unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(rep.units[0].peak_angle, Some(angles[3]));
        assert_abs_diff_eq!(rep.units[1].circular_variance.unwrap(), 1.0, epsilon = 1e-12);
        assert!(!rep.units[2].active && rep.units[2].circular_variance.is_none());
        assert!(rep.all_angles_covered());
        assert_eq!(rep.localized_fraction(0.5), 0.5);
    }

    #[test]
    fn coverage_gap_detected() {
        let angles = ring_angles(4);
        let responses = vec![rates(vec![1.0]), rates(vec![0.0]), rates(vec![1.0]), rates(vec![1.0])];
        let rep = analyze_tuning(&angles, &responses).unwrap();
        assert_eq!(rep.covered, vec![true, false, true, true]);
        assert!(!rep.all_angles_covered());
        assert!(analyze_tuning(&angles[..3], &responses).is_err());
    }
}
