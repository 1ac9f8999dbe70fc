//! Outlier statistics, p-value bounds and test drivers.
//!
//! A pivot label `a_0` is an ε-outlier among `a_0..a_n-1` when
//! `#{i : a_i <= a_0} <= ε n` (the pivot and ties count). Every test reduces
//! to an [`OutlierObservation`] plus a [`BoundFormula`]; the observed ε is the
//! exact fraction `count_leq / n_total`, and bounds are evaluated in floating
//! point from it.

mod bounds;
mod report;
mod runners;

pub use bounds::{binomial_tail, chernoff_tail, p_parallel, p_serial, p_single_trajectory, p_star_split, p_two_paths, select_epsilon_t, BoundFormula, BoundInputs, ChernoffVariant};
pub use report::{NominalCheck, Observed, SignificanceReport, TestName, TestParams};
pub use runners::{
    observe_parallel, observe_serial, observe_star_split, observe_trajectory, observe_two_paths, run_geometric_outlier_test, run_outlier_test,
    run_parallel_test, run_serial_test, run_single_trajectory_test, run_star_split_test, run_test, run_two_path_test, TestConfig,
};

pub(crate) use runners::{attach_nominal, check_multi, multi_report, single_report};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chain::decimal_rational;
use crate::error::{invalid, Error, Result};
use crate::sampling::RngSeed;

/// Which sampler produced a comparison set. Shape-specific bounds refuse
/// observations of any other shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleShape {
    /// Labels supplied directly; no shape-specific bound applies.
    Unstructured,
    /// `X_0..X_k` with pivot `X_0`.
    SingleTrajectory { k: usize },
    /// Serial split: `sigma0`, `Y_1..Y_xi`, `Z_1..Z_{k-xi}`.
    Serial { k: usize },
    /// `sigma0`, `Y_1..Y_k`, `Z_1..Z_k`.
    TwoPath { k: usize },
    /// `sigma0` and the `m - 1` branch endpoints.
    Parallel { m: usize },
    /// Every exposed state except the branch point: `m k` labels.
    StarSplit { k: usize, m: usize },
    ProductSerial { k: usize, d: usize },
    ProductTwoPath { k: usize, d: usize },
    ProductUniformPivot { k: Vec<usize> },
}

impl SampleShape {
    /// Size of the comparison set, pivot included.
    pub fn expected_total(&self) -> Option<u64> {
        let pow = |base: usize, d: usize| (base as u64).checked_pow(d as u32);
        match self {
            SampleShape::Unstructured => None,
            SampleShape::SingleTrajectory { k } | SampleShape::Serial { k } => Some(*k as u64 + 1),
            SampleShape::TwoPath { k } => Some(2 * *k as u64 + 1),
            SampleShape::Parallel { m } => Some(*m as u64),
            SampleShape::StarSplit { k, m } => Some((*k as u64) * (*m as u64)),
            SampleShape::ProductSerial { k, d } => pow(k + 1, *d),
            SampleShape::ProductTwoPath { k, d } => pow(2 * k + 1, *d),
            SampleShape::ProductUniformPivot { k } => k.iter().try_fold(1u64, |acc, &ki| acc.checked_mul(ki as u64 + 1)),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SampleShape::Unstructured => "unstructured",
            SampleShape::SingleTrajectory { .. } => "single-trajectory",
            SampleShape::Serial { .. } => "serial",
            SampleShape::TwoPath { .. } => "two-path",
            SampleShape::Parallel { .. } => "parallel",
            SampleShape::StarSplit { .. } => "star-split",
            SampleShape::ProductSerial { .. } => "product-serial",
            SampleShape::ProductTwoPath { .. } => "product-two-path",
            SampleShape::ProductUniformPivot { .. } => "product-uniform-pivot",
        }
    }
}

/// How ties with the pivot label are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// Every tie counts against the pivot.
    #[default]
    Conservative,
    /// The pivot takes a uniform position among its ties.
    Random(RngSeed),
}

/// Rank of a pivot label within its comparison multiset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OutlierObservation {
    pub pivot_label: f64,
    /// `#{i : a_i <= a_0}`, pivot included.
    pub count_leq: u64,
    pub n_total: u64,
    pub shape: SampleShape,
}

/// Observation over an arbitrary label multiset that contains the pivot.
pub fn observe_outlier(pivot_label: f64, comparison_labels: &[f64]) -> Result<OutlierObservation> {
    OutlierObservation::from_labels(pivot_label, comparison_labels, SampleShape::Unstructured, TieBreak::Conservative)
}

impl OutlierObservation {
    pub fn from_labels(pivot_label: f64, comparison_labels: &[f64], shape: SampleShape, ties: TieBreak) -> Result<Self> {
        if comparison_labels.is_empty() {
            return Err(invalid("comparison_labels", "comparison set is empty"));
        }
        if pivot_label.is_nan() || comparison_labels.iter().any(|a| a.is_nan()) {
            return Err(invalid("comparison_labels", "labels must not be NaN"));
        }
        let less = comparison_labels.iter().filter(|&&a| a < pivot_label).count() as u64;
        let equal = comparison_labels.iter().filter(|&&a| a == pivot_label).count() as u64;
        if equal == 0 {
            return Err(invalid("comparison_labels", "comparison set does not contain the pivot label"));
        }
        let count_leq = match ties {
            TieBreak::Conservative => less + equal,
            TieBreak::Random(seed) => less + 1 + seed.rng().random_range(0..equal),
        };
        Self::from_counts(pivot_label, count_leq, comparison_labels.len() as u64, shape)
    }

    pub fn from_counts(pivot_label: f64, count_leq: u64, n_total: u64, shape: SampleShape) -> Result<Self> {
        if count_leq == 0 || count_leq > n_total {
            return Err(invalid("count_leq", format!("need 1 <= count_leq <= n_total, got {count_leq} of {n_total}")));
        }
        if let Some(expected) = shape.expected_total() {
            if expected != n_total {
                return Err(Error::ShapeMismatch {
                    expected: shape.name(),
                    found: format!("{n_total} comparison labels where the shape has {expected}"),
                });
            }
        }
        Ok(OutlierObservation { pivot_label, count_leq, n_total, shape })
    }

    /// Exact `count_leq / n_total`, unreduced.
    pub fn epsilon_obs(&self) -> Ratio<u64> {
        Ratio::new_raw(self.count_leq, self.n_total)
    }

    pub fn epsilon(&self) -> f64 {
        ratio_to_f64(self.epsilon_obs())
    }

    /// Whether the pivot is an ε-outlier, compared exactly against the
    /// decimal value of `epsilon`.
    pub fn is_outlier(&self, epsilon: f64) -> bool {
        match decimal_rational(epsilon) {
            Some(eps) => BigRational::from_integer(BigInt::from(self.count_leq)) <= eps * BigInt::from(self.n_total),
            None => epsilon == f64::INFINITY,
        }
    }

    pub(crate) fn require_shape(&self, expected: &'static str) -> Result<()> {
        if self.shape.name() == expected {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected, found: self.shape.name().to_string() })
        }
    }
}

pub(crate) fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub(crate) fn format_ratio(r: Ratio<u64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub(crate) fn parse_ratio(text: &str) -> Result<Ratio<u64>> {
    let (n, d) = text.split_once('/').ok_or_else(|| Error::Parse(format!("expected count/total, got {text:?}")))?;
    let n: u64 = n.trim().parse().map_err(|_| Error::Parse(format!("bad numerator in {text:?}")))?;
    let d: u64 = d.trim().parse().map_err(|_| Error::Parse(format!("bad denominator in {text:?}")))?;
    if d == 0 {
        return Err(Error::Parse(format!("zero denominator in {text:?}")));
    }
    Ok(Ratio::new_raw(n, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_pivot_and_ties() {
        let o = observe_outlier(5.0, &[5.0, 3.0, 7.0, 9.0, 2.0]).unwrap();
        assert_eq!((o.count_leq, o.n_total), (3, 5));
        assert_eq!(o.epsilon_obs(), Ratio::new(3, 5));
        let o = observe_outlier(0.0, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(o.epsilon(), 0.25);
        let o = observe_outlier(1.0, &[1.0; 4]).unwrap();
        assert_eq!(o.epsilon(), 1.0);
        assert!(!o.is_outlier(0.99));
        assert!(o.is_outlier(1.0));
    }

    #[test]
    fn outlier_threshold_is_exact() {
        let o = observe_outlier(0.0, &[0.0, 1.0, 2.0]).unwrap();
        assert!(!o.is_outlier(0.3333));
        assert!(o.is_outlier(0.33334));
        let o = observe_outlier(0.0, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        assert!(o.is_outlier(0.1));
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(observe_outlier(1.0, &[]).is_err());
        assert!(observe_outlier(1.0, &[2.0, 3.0]).is_err());
        assert!(observe_outlier(f64::NAN, &[f64::NAN]).is_err());
    }

    #[test]
    fn shape_size_is_enforced() {
        let labels = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(OutlierObservation::from_labels(0.0, &labels, SampleShape::StarSplit { k: 3, m: 2 }, TieBreak::Conservative).is_err());
        assert!(OutlierObservation::from_labels(0.0, &labels[..6], SampleShape::StarSplit { k: 3, m: 2 }, TieBreak::Conservative).is_ok());
        assert!(OutlierObservation::from_labels(0.0, &labels[..5], SampleShape::TwoPath { k: 2 }, TieBreak::Conservative).is_ok());
    }

    #[test]
    fn random_ties_stay_in_range() {
        let mut seen = [false; 5];
        for s in 0..200 {
            let o = OutlierObservation::from_labels(1.0, &[1.0, 1.0, 1.0, 0.0, 2.0], SampleShape::Unstructured, TieBreak::Random(RngSeed::new(s))).unwrap();
            seen[o.count_leq as usize] = true;
        }
        assert_eq!(seen, [false, false, true, true, true]);
    }

    #[test]
    fn ratio_text_round_trip() {
        let r = Ratio::new_raw(6, 10);
        assert_eq!(format_ratio(r), "6/10");
        assert_eq!(parse_ratio("6/10").unwrap(), r);
        assert!(parse_ratio("6").is_err());
        assert!(parse_ratio("1/0").is_err());
    }
}
